#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_laika-spine
------------

Tests for `laika-spine` structure module.
"""
import math
from dataclasses import replace
from unittest import TestCase

import numpy as np

from laika.exceptions import DegenerateCableError, StructureError
from laika.model import build_laika
from laika.structure import (
    Cable,
    CableKind,
    CableRole,
    Node,
    RigidGroup,
    SimState,
    StructureGraph,
    Weld,
    cable_direction,
    cable_length,
    center_of_mass,
    mirror_label,
    support_polygon_margin,
    validate_structure,
)


def small_graph():
    feet = tuple(
        Node(id=f"foot{foot}", position=position, mass=0.1)
        for foot, position in zip("ABCD", [(0.1, -0.1, 0.0), (0.1, 0.1, 0.0), (-0.1, -0.1, 0.0), (-0.1, 0.1, 0.0)])
    )
    top = Node(id="top", position=(0.0, 0.0, 0.2), mass=0.2)
    cable = Cable(
        id="stay",
        endpoints=("footA", "top"),
        k=237.0,
        c=0.1,
        rest_length=0.2,
        original_rest_length=0.2,
        role=CableRole(CableKind.SADDLE),
    )
    return StructureGraph(
        nodes=feet + (top,),
        cables=(cable,),
        groups=(RigidGroup.from_nodes("base", feet),),
        labels={n.id: n.id for n in feet},
    )


def two_node_state(a, b):
    return SimState(
        node_ids=("a", "b"),
        positions=np.array([a, b], dtype=float),
        velocities=np.zeros((2, 3)),
    )


def cable_between(rest_length=0.1):
    return Cable(
        id="ab",
        endpoints=("a", "b"),
        k=237.0,
        c=0.0,
        rest_length=rest_length,
        original_rest_length=rest_length,
        role=CableRole(CableKind.SADDLE),
    )


class TestValidateStructure(TestCase):
    def setUp(self):
        self.graph = small_graph()

    def test_well_formed_graph(self):
        """Assert a well-formed graph has an empty report."""
        report = validate_structure(self.graph)
        self.assertTrue(report.ok)
        self.assertEqual(len(report), 0)

    def test_default_laika_is_valid(self):
        """Assert the default Laika graph passes validation."""
        self.assertTrue(validate_structure(build_laika()).ok)

    def test_dangling_endpoint(self):
        """Assert a cable to an absent node is the only violation reported."""
        cable = replace(self.graph.cables[0], endpoints=("footA", "ghost"))
        report = validate_structure(self.graph.with_cables([cable]))
        self.assertEqual(report.kinds(), ["dangling endpoint"])

    def test_group_overlap(self):
        """Assert a node in two rigid groups is reported once."""
        extra = RigidGroup(label="extra", members=("footA", "top"))
        graph = replace(self.graph, groups=self.graph.groups + (extra,))
        self.assertEqual(validate_structure(graph).kinds(), ["group overlap"])

    def test_dangling_member(self):
        """Assert a group member that does not exist is a single violation."""
        group = replace(self.graph.groups[0], members=("footA", "footB", "footC", "ghost"))
        graph = replace(self.graph, groups=(group,))
        self.assertEqual(validate_structure(graph).kinds(), ["dangling member"])

    def test_dangling_label(self):
        """Assert a label pointing nowhere is a single violation."""
        labels = dict(self.graph.labels, footA="ghost")
        graph = replace(self.graph, labels=labels)
        self.assertEqual(validate_structure(graph).kinds(), ["dangling label"])

    def test_zero_mass_free_node(self):
        """Assert a free node without mass is reported, an anchored one is not."""
        nodes = self.graph.nodes[:-1] + (replace(self.graph.nodes[-1], mass=0.0),)
        self.assertEqual(validate_structure(replace(self.graph, nodes=nodes)).kinds(), ["zero mass"])
        nodes = self.graph.nodes[:-1] + (replace(self.graph.nodes[-1], mass=0.0, anchored=True),)
        self.assertTrue(validate_structure(replace(self.graph, nodes=nodes)).ok)

    def test_missing_foot_label(self):
        """Assure every foot label is required."""
        labels = {k: v for k, v in self.graph.labels.items() if k != "footD"}
        report = validate_structure(replace(self.graph, labels=labels))
        self.assertEqual(report.kinds(), ["missing foot label"])

    def test_negative_rest_length(self):
        """Assert negative rest lengths are reported."""
        cable = replace(self.graph.cables[0], rest_length=-0.1)
        self.assertEqual(validate_structure(self.graph.with_cables([cable])).kinds(), ["negative rest length"])

    def test_disconnected_groups(self):
        """Assert a group reachable through no cable or joint is reported."""
        island = Node(id="island", position=(1.0, 0.0, 0.0), mass=0.1)
        other = Node(id="other", position=(1.0, 0.1, 0.0), mass=0.1)
        graph = replace(
            self.graph,
            nodes=self.graph.nodes + (island, other),
            groups=self.graph.groups + (RigidGroup.from_nodes("island", (island, other)),),
        )
        self.assertEqual(validate_structure(graph).kinds(), ["disconnected"])
        welded = replace(graph, joints=(Weld(("base", "island")),))
        self.assertTrue(validate_structure(welded).ok)

    def test_validation_never_raises(self):
        """Assert several problems are collected in one report."""
        cable = replace(self.graph.cables[0], endpoints=("top", "top"), k=-1.0)
        report = validate_structure(replace(self.graph.with_cables([cable]), labels={}))
        self.assertIn("degenerate cable", report.kinds())
        self.assertIn("negative coefficient", report.kinds())
        self.assertEqual(report.kinds().count("missing foot label"), 4)


class TestCenterOfMass(TestCase):
    def setUp(self):
        self.graph = StructureGraph(
            nodes=(Node("a", (0.0, 0.0, 0.0), mass=1.0), Node("b", (2.0, 0.0, 0.0), mass=1.0))
        )
        self.state = SimState.initial(self.graph)

    def test_two_equal_masses(self):
        """Assert two equal masses balance at their midpoint."""
        np.testing.assert_allclose(center_of_mass(self.graph, self.state), [1.0, 0.0, 0.0])

    def test_single_node(self):
        """Assert the center of mass of one node is its position."""
        np.testing.assert_allclose(center_of_mass(self.graph, self.state, ["b"]), [2.0, 0.0, 0.0])

    def test_translation_equivariance(self):
        """Assert shifting every node shifts the center of mass by the same vector."""
        shift = np.array([0.3, -1.2, 0.7])
        moved = self.state.copy(positions=self.state.positions + shift)
        np.testing.assert_allclose(
            center_of_mass(self.graph, moved), center_of_mass(self.graph, self.state) + shift, atol=1e-12
        )

    def test_empty_subset(self):
        """Assert an empty subset is rejected."""
        with self.assertRaises(StructureError):
            center_of_mass(self.graph, self.state, [])

    def test_massless_subset(self):
        """Assert a subset without mass is rejected."""
        graph = StructureGraph(nodes=(Node("a", (0.0, 0.0, 0.0), anchored=True),))
        with self.assertRaises(StructureError):
            center_of_mass(graph, SimState.initial(graph))

    def test_laika_is_shoulder_heavy(self):
        """Assert the default robot's center of mass sits slightly toward the shoulders, on the midline."""
        graph = build_laika()
        com = center_of_mass(graph, SimState.initial(graph))
        self.assertGreater(com[0], 0.005)
        self.assertLess(com[0], 0.02)
        self.assertAlmostEqual(com[1], 0.0, places=12)


class TestCableGeometry(TestCase):
    def test_length_and_direction(self):
        """Assert a vertical cable of 0.1 m points straight up."""
        state = two_node_state((0, 0, 0), (0, 0, 0.1))
        cable = cable_between()
        self.assertAlmostEqual(cable_length(cable, state), 0.1)
        np.testing.assert_allclose(cable_direction(cable, state), [0.0, 0.0, 1.0])

    def test_three_four_five(self):
        """Assert the 3-4-5 triangle in centimeters gives 0.05 m."""
        state = two_node_state((0, 0, 0), (0.03, 0.04, 0))
        self.assertAlmostEqual(cable_length(cable_between(), state), 0.05)

    def test_endpoint_swap(self):
        """Assert swapping endpoints keeps the length and negates the direction."""
        state = two_node_state((0.1, 0.2, 0.3), (-0.4, 0.5, 0.05))
        forward = cable_between()
        backward = replace(forward, endpoints=("b", "a"))
        self.assertEqual(cable_length(forward, state), cable_length(backward, state))
        np.testing.assert_allclose(cable_direction(forward, state), -cable_direction(backward, state))

    def test_coincident_endpoints(self):
        """Assert coincident endpoints have no direction."""
        state = two_node_state((0.1, 0.1, 0.1), (0.1, 0.1, 0.1))
        with self.assertRaises(DegenerateCableError):
            cable_direction(cable_between(), state)


class TestSupportPolygon(TestCase):
    def setUp(self):
        self.square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]

    def test_inside(self):
        """Assert the margin is the distance to the nearest edge inside the hull."""
        self.assertAlmostEqual(support_polygon_margin(self.square, (0.5, 0.5)), 0.5)
        self.assertAlmostEqual(support_polygon_margin(self.square, (0.9, 0.5)), 0.1)

    def test_outside(self):
        """Assert points outside the hull have a negative margin."""
        self.assertLess(support_polygon_margin(self.square, (1.5, 0.5)), 0)

    def test_no_polygon(self):
        """Assert fewer than three points or collinear points give no polygon."""
        self.assertEqual(support_polygon_margin(self.square[:2], (0.5, 0.0)), -math.inf)
        self.assertEqual(support_polygon_margin([(0, 0), (1, 0), (2, 0)], (1, 0)), -math.inf)


class TestMirror(TestCase):
    def test_labels(self):
        """Assert left and right labels swap and midline labels stay."""
        self.assertEqual(mirror_label("L3"), "R3")
        self.assertEqual(mirror_label("R1"), "L1")
        self.assertEqual(mirror_label("footA"), "footB")
        self.assertEqual(mirror_label("footD"), "footC")
        self.assertEqual(mirror_label("legC"), "legD")
        self.assertEqual(mirror_label("shoulderL"), "shoulderR")
        self.assertEqual(mirror_label("T2"), "T2")
        self.assertEqual(mirror_label("hipTop"), "hipTop")


class TestTopology(TestCase):
    def test_welds_and_hinge_merge_bodies(self):
        """Assert the robot's welded and hinged groups form five bodies."""
        topo = build_laika().topology
        self.assertEqual(topo.body_count, 5)
        self.assertEqual(len(topo.free_rows), 0)

    def test_local_reference_is_centred(self):
        """Assure body-local reference coordinates have a zero mass-weighted mean."""
        topo = build_laika().topology
        local = topo.local_reference(0.3)
        centroid = topo.aggregate @ (topo.row_mass[:, None] * local)
        np.testing.assert_allclose(centroid, 0.0, atol=1e-14)

    def test_state_copy_is_independent(self):
        """Assert copying a state does not share arrays."""
        graph = small_graph()
        state = SimState.initial(graph)
        other = state.copy()
        other.positions[0, 0] += 1.0
        self.assertNotEqual(state.positions[0, 0], other.positions[0, 0])
        self.assertTrue(state.is_finite())
        other.velocities[1, 2] = np.nan
        self.assertFalse(other.is_finite())
