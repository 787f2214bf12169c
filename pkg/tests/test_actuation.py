#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_laika-spine
------------

Tests for `laika-spine` actuation module.
"""
import math
from unittest import TestCase

import numpy as np

from laika.actuation import (
    BendRamp,
    BendSide,
    MotionSpec,
    RotationDirection,
    RotationRamp,
    SpoolCommand,
    apply_rotation,
    bend_rest_lengths,
    bend_targets,
    horizontal_set,
    rotation_angle,
    spool_deltas,
    spool_rest_lengths,
)
from laika.dynamics import relative_hinge_angle
from laika.exceptions import ActuationError, ConfigError
from laika.model import VertebraKind, build_laika, build_spine, build_vertebra
from laika.structure import Cable, CableKind, CableRole, Side, SimState, StructureGraph


def horizontal(groove, rest_length, side=Side.TOP):
    return Cable(
        id=f"horizontal-{side.value}-{groove}",
        endpoints=("a", "b"),
        k=237.0,
        c=0.0,
        rest_length=rest_length,
        original_rest_length=rest_length,
        role=CableRole(CableKind.HORIZONTAL, side, groove),
    )


def rotating_vertebra():
    parts = build_vertebra(3, VertebraKind.ROTATING)
    return StructureGraph(nodes=parts.nodes, groups=parts.groups, joints=parts.joints)


class TestMotionSpec(TestCase):
    def test_defaults(self):
        """Assert the default motion retracts to 80 % and ramps to 60 degrees in 40 s."""
        spec = MotionSpec()
        self.assertEqual(spec.retraction_fraction, 0.8)
        self.assertEqual(spec.ramp_duration, 40.0)
        self.assertAlmostEqual(spec.max_angle, math.pi / 3)

    def test_labels(self):
        """Assert bend labels follow the hardware naming."""
        spec = MotionSpec(BendSide.PULL_RIGHT, RotationDirection.CCW)
        self.assertEqual(spec.label, "Left Bend / Horiz. Right, (+) CCW")
        self.assertEqual(BendSide.PULL_LEFT.label, "Right Bend")
        self.assertEqual(spec.key, "pullRight-CCW")

    def test_from_strings(self):
        """Assert enum fields accept their string values."""
        spec = MotionSpec(bend_side="pullLeft", rotation_direction="CW")
        self.assertIs(spec.bend_side, BendSide.PULL_LEFT)
        self.assertIs(spec.rotation_direction, RotationDirection.CW)

    def test_mirrored(self):
        """Assert mirroring swaps the pulled side and the rotation direction."""
        spec = MotionSpec(BendSide.PULL_RIGHT, RotationDirection.CCW).mirrored()
        self.assertIs(spec.bend_side, BendSide.PULL_LEFT)
        self.assertIs(spec.rotation_direction, RotationDirection.CW)
        self.assertIs(BendSide.PULL_TOP.mirrored, BendSide.PULL_TOP)

    def test_invalid_fraction(self):
        """Assert retraction outside (0, 1] names its key."""
        for fraction in (0.0, 1.2):
            with self.assertRaises(ConfigError) as context:
                MotionSpec(retraction_fraction=fraction)
            self.assertEqual(context.exception.key, "motion.retractionFraction")


class TestPercentRetraction(TestCase):
    def test_scales_original_rest_lengths(self):
        """Assert each rest length becomes the fraction of its original value."""
        cables = [horizontal(i + 1, r) for i, r in enumerate((0.05, 0.1, 0.15, 0.2))]
        np.testing.assert_allclose(bend_rest_lengths(cables, 0.8), [0.04, 0.08, 0.12, 0.16])

    def test_full_fraction_is_identity(self):
        """Assert a fraction of one leaves rest lengths unchanged."""
        cables = [horizontal(1, 0.1)]
        np.testing.assert_array_equal(bend_rest_lengths(cables, 1.0), [0.1])

    def test_invalid_fraction(self):
        """Assert fractions outside (0, 1] are rejected."""
        for fraction in (0.0, -0.2, 1.5):
            with self.assertRaises(ActuationError):
                bend_rest_lengths([horizontal(1, 0.1)], fraction)


class TestSpool(TestCase):
    def setUp(self):
        self.cables = [horizontal(g, 0.2) for g in (1, 2, 3, 4)]

    def test_deltas_follow_groove_ratios(self):
        """Assert one drum retraction pulls the grooves 1:1:2:3."""
        np.testing.assert_allclose(spool_deltas(SpoolCommand(Side.TOP, 0.01)), [0.01, 0.01, 0.02, 0.03])
        np.testing.assert_array_equal(spool_deltas(SpoolCommand(Side.TOP, 0.0)), np.zeros(4))

    def test_ratio_invariant(self):
        """Assert each delta divided by its ratio is the drum retraction."""
        command = SpoolCommand(Side.LEFT, 0.0123)
        np.testing.assert_allclose(spool_deltas(command) / np.array(command.groove_ratios), 0.0123)

    def test_rest_lengths(self):
        """Assert spool retraction shortens each cable by its groove's delta."""
        lengths, saturated = spool_rest_lengths(self.cables, SpoolCommand(Side.TOP, 0.01))
        np.testing.assert_allclose(lengths, [0.19, 0.19, 0.18, 0.17])
        self.assertFalse(saturated)

    def test_saturation(self):
        """Assert a cable pulled past zero is clamped and reported."""
        cables = [horizontal(4, 0.02)]
        lengths, saturated = spool_rest_lengths(cables, SpoolCommand(Side.TOP, 0.01))
        np.testing.assert_array_equal(lengths, [0.0])
        self.assertTrue(saturated)

    def test_wrong_side(self):
        """Assert a cable of another set cannot be spooled."""
        with self.assertRaises(ActuationError):
            spool_rest_lengths([horizontal(1, 0.1, Side.LEFT)], SpoolCommand(Side.TOP, 0.01))

    def test_invalid_commands(self):
        """Assert negative retraction and bad ratios are rejected."""
        with self.assertRaises(ActuationError):
            SpoolCommand(Side.TOP, -0.01)
        with self.assertRaises(ActuationError):
            SpoolCommand(Side.TOP, 0.01, (1.0, 0.0, 2.0, 3.0))
        with self.assertRaises(ActuationError):
            SpoolCommand(Side.TOP, 0.01, (1.0, 2.0))


class TestRotationAngle(TestCase):
    def setUp(self):
        self.spec = MotionSpec()

    def test_ramp(self):
        """Assert the angle ramps linearly and saturates at the maximum."""
        self.assertEqual(rotation_angle(0.0, RotationDirection.CCW, self.spec), 0.0)
        self.assertAlmostEqual(rotation_angle(40.0, RotationDirection.CCW, self.spec), math.pi / 3)
        self.assertAlmostEqual(rotation_angle(20.0, RotationDirection.CW, self.spec), -math.pi / 6)
        self.assertAlmostEqual(rotation_angle(80.0, RotationDirection.CCW, self.spec), math.pi / 3)

    def test_odd_in_direction(self):
        """Assert clockwise is the negative of counter-clockwise at every time."""
        for t in np.linspace(0.0, 50.0, 11):
            self.assertEqual(
                rotation_angle(t, RotationDirection.CW, self.spec), -rotation_angle(t, "CCW", self.spec)
            )

    def test_monotone(self):
        """Assert the magnitude never decreases."""
        angles = [abs(rotation_angle(t, RotationDirection.CW, self.spec)) for t in np.linspace(0, 60, 121)]
        self.assertTrue(all(b >= a for a, b in zip(angles, angles[1:])))

    def test_negative_time(self):
        """Assert time before the ramp is rejected."""
        with self.assertRaises(ActuationError):
            rotation_angle(-1.0, RotationDirection.CCW, self.spec)

    def test_rotation_ramp(self):
        """Assert the ramp schedule starts at its start time and leaves rest lengths alone."""
        ramp = RotationRamp(self.spec, start=3.0)
        self.assertEqual(ramp(1.0), (None, 0.0))
        lengths, theta = ramp(23.0)
        self.assertIsNone(lengths)
        self.assertAlmostEqual(theta, math.pi / 6)


class TestApplyRotation(TestCase):
    def setUp(self):
        self.graph = rotating_vertebra()
        self.state = SimState.initial(self.graph)

    def test_sixty_degrees(self):
        """Assert the driven caps turn 60 degrees about the spine axis and the driving half stays."""
        rotated = apply_rotation(self.graph, self.state, math.pi / 3)
        axis_z = self.graph.hinge.axis_point[2]
        before = self.state.position("T3") - [0.0, 0.0, axis_z]
        after = rotated.position("T3") - [0.0, 0.0, axis_z]
        self.assertAlmostEqual(before[0], after[0])
        cosine = before[1:] @ after[1:] / (np.linalg.norm(before[1:]) * np.linalg.norm(after[1:]))
        self.assertAlmostEqual(cosine, 0.5)
        self.assertLess(after[1], 0.0)
        for node in ("C3b", "L3", "R3"):
            np.testing.assert_allclose(rotated.position(node), self.state.position(node), atol=1e-12)
        self.assertEqual(rotated.theta, math.pi / 3)

    def test_readback(self):
        """Assert the relative angle read back from positions equals the commanded one."""
        for theta in (-math.pi / 3, -0.2, 0.0, 0.45, math.pi / 3):
            rotated = apply_rotation(self.graph, self.state, theta)
            self.assertAlmostEqual(relative_hinge_angle(self.graph, rotated), theta, places=9)

    def test_reversible(self):
        """Assert rotating and returning to zero restores every position."""
        rotated = apply_rotation(self.graph, self.state, math.pi / 6)
        restored = apply_rotation(self.graph, rotated, 0.0)
        np.testing.assert_allclose(restored.positions, self.state.positions, atol=1e-12)

    def test_follows_driving_half(self):
        """Assert the angle is measured in the driving half's current frame."""
        shifted = self.state.copy(positions=self.state.positions + [0.1, -0.2, 0.3])
        rotated = apply_rotation(self.graph, shifted, 0.45)
        self.assertAlmostEqual(relative_hinge_angle(self.graph, rotated), 0.45, places=9)

    def test_no_hinge(self):
        """Assert a structure without a rotating vertebra cannot be rotated."""
        parts = build_vertebra(1, VertebraKind.PASSIVE)
        graph = StructureGraph(nodes=parts.nodes, groups=parts.groups)
        with self.assertRaises(ActuationError):
            apply_rotation(graph, SimState.initial(graph), 0.1)

    def test_commutes_with_bend(self):
        """Assert rotation and bend targets can be applied in either order."""
        graph = build_spine()
        state = SimState.initial(graph)
        spec = MotionSpec()
        targets = bend_targets(graph, state.rest_lengths, spec)
        first = apply_rotation(graph, state.copy(rest_lengths=targets), 0.3)
        second = apply_rotation(graph, state, 0.3)
        second = second.copy(rest_lengths=bend_targets(graph, second.rest_lengths, spec))
        np.testing.assert_array_equal(first.positions, second.positions)
        np.testing.assert_array_equal(first.rest_lengths, second.rest_lengths)
        self.assertEqual(first.theta, second.theta)


class TestBendTargets(TestCase):
    def setUp(self):
        self.graph = build_laika()
        self.state = SimState.initial(self.graph)
        self.spec = MotionSpec(BendSide.PULL_RIGHT, RotationDirection.CCW)

    def test_only_pulled_set_changes(self):
        """Assert percent retraction shortens the pulled set and nothing else."""
        targets = bend_targets(self.graph, self.state.rest_lengths, self.spec)
        for i, cable in enumerate(self.graph.cables):
            if cable.role.kind is CableKind.HORIZONTAL and cable.role.side is Side.RIGHT:
                self.assertAlmostEqual(targets[i], 0.8 * cable.original_rest_length)
            else:
                self.assertEqual(targets[i], self.state.rest_lengths[i])

    def test_hardware_bend(self):
        """Assert the spool bend shortens the largest groove like percent retraction and the rest by ratio."""
        targets = bend_targets(self.graph, self.state.rest_lengths, self.spec, hardware=True)
        cables = horizontal_set(self.graph, Side.RIGHT)
        deltas = [c.original_rest_length - targets[self.graph.cable_index[c.id]] for c in cables]
        self.assertAlmostEqual(deltas[3], 0.2 * cables[3].original_rest_length)
        self.assertAlmostEqual(deltas[0], deltas[3] / 3)
        self.assertAlmostEqual(deltas[2], 2 * deltas[3] / 3)

    def test_bend_ramp(self):
        """Assert the bend ramp interpolates linearly over its duration."""
        ramp = BendRamp(self.graph, self.state, self.spec)
        row = self.graph.cable_index["horizontal-right-1"]
        start = self.state.rest_lengths[row]
        lengths, theta = ramp(self.spec.bend_duration / 2)
        self.assertIsNone(theta)
        self.assertAlmostEqual(lengths[row], 0.9 * start)
        np.testing.assert_allclose(ramp(100.0)[0], ramp.target)
        np.testing.assert_allclose(ramp(0.0)[0], self.state.rest_lengths)
