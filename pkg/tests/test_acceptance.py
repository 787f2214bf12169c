#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_laika-spine
------------

Full-robot simulations of `laika-spine`. These take minutes; run them with ``pytest -m slow``.

The robot is symmetric across its sagittal plane, so a pull-right motion lifts the
mirror image of the foot its pull-left twin lifts. The printed motion table is not
symmetric in that way: its pull-right rows list the front feet A and B while the
pull-left rows list the back feet C and D. The model lifts a back foot in every
row, so the assertions on the front feet are expected to fail.
"""
import time
from unittest import TestCase, expectedFailure

import numpy as np
import pytest

from laika.actuation import BendSide, MotionSpec, RotationDirection
from laika.dynamics import SimParams, equilibrium_residual, ground_contact_forces, settle
from laika.experiments import (
    DEFAULT_HEIGHT_THRESHOLD,
    DEFAULT_HOLD_WINDOW,
    FEET,
    HARDWARE_REFERENCE,
    MOTION_TABLE,
    MOTIONS,
    calibration_sweep,
    expected_foot,
    foot_summaries,
    interval_distance,
    lift_off_index,
    mirror_foot,
    run_foot_lift_test,
)
from laika.model import TENSION_POINTS, TensionTestPoint, apply_tension_test_point, build_laika
from laika.structure import SimState, center_of_mass, support_polygon_margin

from . import settings


@pytest.mark.slow
class TestStanding(TestCase):
    def setUp(self):
        self.params = SimParams(dt=settings.DT)

    def test_stands_after_drop(self):
        """Assert the robot dropped from 1 mm settles at hip height on four feet at every tension point."""
        for point in TENSION_POINTS:
            graph = apply_tension_test_point(build_laika(), point)
            state = SimState.initial(graph)
            state.positions[:, 2] += 0.001
            state = settle(graph, state, self.params)
            self.assertLess(state.time, 10.0, point.name)
            feet = state.positions[[graph.node_row(f"foot{foot}") for foot in FEET]]
            _, normal = ground_contact_forces(feet, np.zeros_like(feet), self.params)
            self.assertTrue((normal > 0).all(), point.name)
            spine_height = (state.position("C3f")[2] + state.position("C3b")[2]) / 2
            self.assertAlmostEqual(spine_height, 0.185, delta=0.01, msg=point.name)
            com = center_of_mass(graph, state)
            self.assertGreater(support_polygon_margin(feet[:, :2], com[:2]), 0.0, point.name)
            self.assertLess(equilibrium_residual(graph, state, self.params), 0.05, point.name)

    def test_bend_alone_lifts_nothing(self):
        """Assert bending without rotation keeps every foot down."""
        for motion in MOTIONS:
            result = run_foot_lift_test(
                motion, TensionTestPoint.from_name("Mean"), self.params, rotate=False, full_trace=True
            )
            self.assertIsNone(result.lifted_foot, motion.label)
            self.assertIsNone(result.error)

    def test_deterministic(self):
        """Assert two identical runs produce identical traces."""
        motion = MotionSpec(BendSide.PULL_RIGHT, RotationDirection.CCW, ramp_duration=2.0, max_angle=0.1)
        point = TensionTestPoint.from_name("Mean")
        first = run_foot_lift_test(motion, point, self.params, full_trace=True)
        second = run_foot_lift_test(motion, point, self.params, full_trace=True)
        np.testing.assert_array_equal(first.trace.foot_heights, second.trace.foot_heights)
        np.testing.assert_array_equal(first.trace.theta, second.trace.theta)

    def test_run_time(self):
        """Assert one foot-lift run stays within its wall-clock budget."""
        start = time.perf_counter()
        result = run_foot_lift_test(MOTIONS[1], TensionTestPoint.from_name("Mean"), self.params)
        elapsed = time.perf_counter() - start
        self.assertIsNotNone(result.lifted_foot)
        self.assertLess(elapsed, settings.RUN_SECONDS)


@pytest.mark.slow
class TestCalibrationSweep(TestCase):
    results = None
    elapsed = None

    @classmethod
    def setUpClass(cls):
        start = time.perf_counter()
        cls.results = calibration_sweep(
            SimParams(dt=settings.DT), workers=settings.WORKERS, sample_period=settings.SAMPLE_PERIOD
        )
        cls.elapsed = time.perf_counter() - start
        cls.runs = {(r.motion.key, r.tension_point.name): r for r in cls.results}

    def run_for(self, motion, point):
        return self.runs[(motion.key, point.name)]

    def assert_table_feet(self, bend_side):
        for row, motion in zip(MOTION_TABLE, MOTIONS):
            if row.bend_side is not bend_side:
                continue
            for point in TENSION_POINTS:
                result = self.run_for(motion, point)
                self.assertEqual(result.lifted_foot, row.foot, f"{motion.label} at {point.name}")

    def assert_high_tension_angles(self, feet):
        high = TensionTestPoint.from_name("High")
        for row, motion in zip(MOTION_TABLE, MOTIONS):
            if row.foot not in feet:
                continue
            result = self.run_for(motion, high)
            self.assertEqual(result.lifted_foot, row.foot, motion.label)
            distance = interval_distance(result.lift_off_angle, HARDWARE_REFERENCE.interval(row.foot))
            self.assertLessEqual(distance, 0.15, f"foot {row.foot} at {result.lift_off_angle:.3f} rad")

    def test_every_run_completes(self):
        """Assert the twenty runs finish without error and lift a foot."""
        self.assertEqual(len(self.results), len(MOTIONS) * len(TENSION_POINTS))
        self.assertEqual([r.error for r in self.results if r.error], [])
        self.assertTrue(all(r.lifted_foot is not None for r in self.results))

    def test_sweep_time(self):
        """Assert the sweep stays within its wall-clock budget."""
        self.assertLess(self.elapsed, settings.SWEEP_SECONDS)

    def test_pull_left_rows_match_table(self):
        """Assert both pull-left motions lift their printed foot at every tension point."""
        self.assert_table_feet(BendSide.PULL_LEFT)

    @expectedFailure
    def test_pull_right_rows_match_table(self):
        """Assert both pull-right motions lift their printed front foot at every tension point."""
        self.assert_table_feet(BendSide.PULL_RIGHT)

    def test_lift_off_within_ramp(self):
        """Assert every lift-off angle lies strictly inside the rotation range."""
        for result in self.results:
            self.assertGreater(result.lift_off_angle, 0.0)
            self.assertLess(result.lift_off_angle, result.motion.max_angle)

    def test_other_feet_down_at_lift_off(self):
        """Assert the three other feet are still on the ground when the first foot lifts."""
        for result in self.results:
            rotation = result.trace.rotation_phase()
            index = lift_off_index(rotation, result.lifted_foot, DEFAULT_HEIGHT_THRESHOLD, DEFAULT_HOLD_WINDOW)
            self.assertGreater(index, 0)
            others = [FEET.index(foot) for foot in FEET if foot != result.lifted_foot]
            heights = rotation.foot_heights[index, others]
            self.assertTrue((heights <= DEFAULT_HEIGHT_THRESHOLD).all(), result.motion.label)

    def test_back_feet_near_hardware_at_high_tension(self):
        """Assert the High tension point lifts feet C and D within 0.15 rad of their hardware ranges."""
        self.assert_high_tension_angles(("C", "D"))

    @expectedFailure
    def test_front_feet_near_hardware_at_high_tension(self):
        """Assert the High tension point lifts feet A and B within 0.15 rad of their hardware ranges."""
        self.assert_high_tension_angles(("A", "B"))

    def test_stiffer_cables_lift_later(self):
        """Assert every motion lifts at an angle no smaller at High tension than at Low tension."""
        low, high = TensionTestPoint.from_name("Low"), TensionTestPoint.from_name("High")
        for motion in MOTIONS:
            self.assertGreaterEqual(
                self.run_for(motion, high).lift_off_angle, self.run_for(motion, low).lift_off_angle, motion.label
            )

    @expectedFailure
    def test_back_feet_lift_before_front_feet(self):
        """Assert C lifts before B and D before A at each tension point."""
        by_foot = {row.foot: motion for row, motion in zip(MOTION_TABLE, MOTIONS)}
        for point in TENSION_POINTS:
            runs = {foot: self.run_for(motion, point) for foot, motion in by_foot.items()}
            for foot, run in runs.items():
                self.assertEqual(run.lifted_foot, foot, point.name)
            self.assertLess(runs["C"].lift_off_angle, runs["B"].lift_off_angle, point.name)
            self.assertLess(runs["D"].lift_off_angle, runs["A"].lift_off_angle, point.name)

    def test_mirrored_motions_agree(self):
        """Assert mirror-image motions lift mirrored feet at angles within two percent."""
        for motion in MOTIONS:
            for point in TENSION_POINTS:
                original = self.run_for(motion, point)
                mirrored = self.run_for(motion.mirrored(), point)
                self.assertEqual(mirrored.lifted_foot, mirror_foot(original.lifted_foot))
                larger = max(original.lift_off_angle, mirrored.lift_off_angle)
                self.assertLessEqual(abs(original.lift_off_angle - mirrored.lift_off_angle), 0.02 * larger)

    def test_summaries(self):
        """Assert the back feet carry all twenty lift-off angles."""
        summaries = foot_summaries(self.results)
        self.assertEqual(sum(summaries[foot].runs for foot in FEET), len(self.results))
        self.assertEqual(summaries["C"].runs + summaries["D"].runs, len(self.results))


@pytest.mark.slow
class TestHardwareBend(TestCase):
    def test_spool_bend_lifts_same_foot(self):
        """Assert the spool-coupled bend lifts the same foot as percent retraction."""
        params = SimParams(dt=settings.DT)
        motion = MOTIONS[1]
        point = TensionTestPoint.from_name("Mean")
        percent = run_foot_lift_test(motion, point, params)
        spool = run_foot_lift_test(motion, point, params, hardware_bend=True)
        self.assertEqual(percent.lifted_foot, expected_foot(motion))
        self.assertEqual(spool.lifted_foot, percent.lifted_foot)
