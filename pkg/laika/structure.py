"""
Structural data model: point-mass nodes, rigid groups, joints and cables.

A :class:`StructureGraph` is immutable once built. Everything that changes during
a simulation lives in :class:`SimState`.
"""
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.transform import Rotation

from .exceptions import DegenerateCableError, StructureError

logger = logging.getLogger(__name__)

FOOT_LABELS = ("footA", "footB", "footC", "footD")
DEGENERATE_LENGTH = 1e-9

Vector = Tuple[float, float, float]


class CableKind(str, Enum):
    HORIZONTAL = "horizontal"
    SADDLE = "saddle"
    STRUCTURAL = "structural-passive"


class Side(str, Enum):
    TOP = "top"
    BOTTOM = "bottom"
    LEFT = "left"
    RIGHT = "right"

    @property
    def cap(self):
        return self.value[0].upper()

    @property
    def mirrored(self):
        return {Side.LEFT: Side.RIGHT, Side.RIGHT: Side.LEFT}.get(self, self)


@dataclass(frozen=True)
class MaterialSpec:
    name: str
    k_mean: float
    k_std: float

    def __post_init__(self):
        if self.k_mean <= 0:
            raise StructureError(f"material {self.name}: mean stiffness must be positive")
        if self.k_std < 0:
            raise StructureError(f"material {self.name}: stiffness deviation must not be negative")


SILICONE = MaterialSpec("silicone", 237.0, 11.0)
BUNA_N = MaterialSpec("buna_n", 810.0, 132.0)
SPRING = MaterialSpec("spring", 187.0, 0.0)
MATERIALS = {m.name: m for m in (SILICONE, BUNA_N, SPRING)}


@dataclass(frozen=True)
class Node:
    id: str
    position: Vector
    velocity: Vector = (0.0, 0.0, 0.0)
    mass: float = 0.0
    anchored: bool = False


@dataclass(frozen=True)
class CableRole:
    kind: CableKind
    side: Optional[Side] = None
    groove: Optional[int] = None

    def __str__(self):
        if self.kind is CableKind.HORIZONTAL:
            return f"{self.kind.value}-{self.side.value}-{self.groove}"
        return self.kind.value


@dataclass(frozen=True)
class Cable:
    id: str
    endpoints: Tuple[str, str]
    k: float
    c: float
    rest_length: float
    original_rest_length: float
    role: CableRole
    material: str = SILICONE.name

    @property
    def actuated(self):
        return self.role.kind is CableKind.HORIZONTAL


@dataclass(frozen=True)
class RigidGroup:
    """
    Node set whose pairwise distances the dynamics preserve.

    The reference frame (origin at the member centroid, basis along the world
    axes) is captured when the group is built.
    """

    label: str
    members: Tuple[str, ...]
    origin: Vector = (0.0, 0.0, 0.0)
    basis: Tuple[Vector, Vector, Vector] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    @classmethod
    def from_nodes(cls, label, nodes):
        origin = np.mean([n.position for n in nodes], axis=0)
        return cls(label=label, members=tuple(n.id for n in nodes), origin=tuple(float(v) for v in origin))


@dataclass(frozen=True)
class Weld:
    """Two rigid groups fused into one body."""

    groups: Tuple[str, str]


@dataclass(frozen=True)
class Hinge:
    """
    Revolute joint between a driving and a driven group.

    The driven group is held at the commanded angle about ``axis_direction``
    through ``axis_point`` (both in build coordinates, relative to the driving group).
    """

    driving: str
    driven: str
    axis_point: Vector
    axis_direction: Vector

    @property
    def groups(self):
        return (self.driving, self.driven)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self):
        return f"{self.kind}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    def add(self, kind, detail):
        self.violations.append(Violation(kind, detail))

    @property
    def ok(self):
        return not self.violations

    def kinds(self):
        return [v.kind for v in self.violations]

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


@dataclass(frozen=True)
class StructureGraph:
    nodes: Tuple[Node, ...]
    cables: Tuple[Cable, ...] = ()
    groups: Tuple[RigidGroup, ...] = ()
    joints: Tuple[object, ...] = ()
    labels: Dict[str, str] = field(default_factory=dict)

    @cached_property
    def index(self):
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def cable_index(self):
        return {c.id: i for i, c in enumerate(self.cables)}

    @cached_property
    def group_index(self):
        return {g.label: i for i, g in enumerate(self.groups)}

    @cached_property
    def node_ids(self):
        return tuple(n.id for n in self.nodes)

    def node(self, name):
        """Look a node up by label (``"footA"``, ``"T2"``) or by id."""
        node_id = self.labels.get(name, name)
        try:
            return self.nodes[self.index[node_id]]
        except KeyError:
            raise StructureError(f"unknown node or label {name}")

    def node_row(self, name):
        return self.index[self.node(name).id]

    def group(self, label):
        try:
            return self.groups[self.group_index[label]]
        except KeyError:
            raise StructureError(f"unknown rigid group {label}")

    def cable(self, cable_id):
        return self.cables[self.cable_index[cable_id]]

    @property
    def hinge(self):
        hinges = [j for j in self.joints if isinstance(j, Hinge)]
        return hinges[0] if hinges else None

    @property
    def total_mass(self):
        return float(sum(n.mass for n in self.nodes))

    def cables_where(self, kind=None, side=None, material=None):
        return [
            c
            for c in self.cables
            if (kind is None or c.role.kind is kind)
            and (side is None or c.role.side is side)
            and (material is None or c.material == material)
        ]

    def with_cables(self, cables):
        return replace(self, cables=tuple(cables))

    @cached_property
    def topology(self):
        return Topology(self)


class Topology:
    """
    Array view of a graph, built once and shared by every step of a simulation.

    Rigid groups joined by welds or a hinge are merged into one body; the hinge's
    driven rows get their reference coordinates re-rotated by the commanded angle.
    """

    def __init__(self, graph):
        index = graph.index
        self.node_count = len(graph.nodes)
        self.reference = np.array([n.position for n in graph.nodes], dtype=float).reshape(-1, 3)
        self.masses = np.array([n.mass for n in graph.nodes], dtype=float)
        self.anchored = np.array([n.anchored for n in graph.nodes], dtype=bool)
        self.inv_mass = np.zeros(self.node_count)
        movable = (~self.anchored) & (self.masses > 0)
        self.inv_mass[movable] = 1.0 / self.masses[movable]

        self.cable_a = np.array([index[c.endpoints[0]] for c in graph.cables], dtype=int)
        self.cable_b = np.array([index[c.endpoints[1]] for c in graph.cables], dtype=int)
        self.k = np.array([c.k for c in graph.cables], dtype=float)
        self.c = np.array([c.c for c in graph.cables], dtype=float)
        cable_count = len(graph.cables)
        self.incidence = np.zeros((self.node_count, cable_count))
        self.incidence[self.cable_a, np.arange(cable_count)] += 1.0
        self.incidence[self.cable_b, np.arange(cable_count)] -= 1.0

        self._build_bodies(graph)

    def _build_bodies(self, graph):
        parent = {g.label: g.label for g in graph.groups}

        def find(label):
            while parent[label] != label:
                parent[label] = parent[parent[label]]
                label = parent[label]
            return label

        for joint in graph.joints:
            a, b = (find(label) for label in joint.groups)
            if a != b:
                parent[b] = a

        roots = sorted({find(g.label) for g in graph.groups}, key=lambda label: graph.group_index[label])
        body_of_root = {root: i for i, root in enumerate(roots)}
        rows, bodies = [], []
        for group in graph.groups:
            for member in group.members:
                rows.append(graph.index[member])
                bodies.append(body_of_root[find(group.label)])
        self.body_rows = np.array(rows, dtype=int)
        self.body_of_row = np.array(bodies, dtype=int)
        self.body_count = len(roots)

        # bodies holding an anchored node stay where they are
        fixed = np.zeros(self.body_count, dtype=bool)
        np.logical_or.at(fixed, self.body_of_row, self.anchored[self.body_rows])
        keep = ~fixed[self.body_of_row]
        self.body_rows = self.body_rows[keep]
        self.body_of_row = self.body_of_row[keep]

        self.in_body = np.zeros(self.node_count, dtype=bool)
        self.in_body[self.body_rows] = True
        self.free_rows = np.flatnonzero(~self.in_body & (self.inv_mass > 0))

        member_count = len(self.body_rows)
        self.aggregate = np.zeros((self.body_count, member_count))
        self.aggregate[self.body_of_row, np.arange(member_count)] = 1.0
        self.body_of_node = np.full(self.node_count, -1)
        self.body_of_node[self.body_rows] = self.body_of_row
        self.row_mass = self.masses[self.body_rows]
        self.body_mass = self.aggregate @ self.row_mass
        self.body_mass[self.body_mass == 0] = 1.0

        self._local = None
        self.hinge_rows = np.zeros(0, dtype=int)
        self.hinge_point = np.zeros(3)
        self.hinge_axis = np.array([1.0, 0.0, 0.0])
        hinge = graph.hinge
        if hinge is not None:
            driven = {graph.index[m] for m in graph.group(hinge.driven).members}
            self.hinge_rows = np.flatnonzero([row in driven for row in self.body_rows])
            self.hinge_point = np.asarray(hinge.axis_point, dtype=float)
            axis = np.asarray(hinge.axis_direction, dtype=float)
            self.hinge_axis = axis / np.linalg.norm(axis)

    def local_reference(self, theta=0.0):
        """Reference coordinates of body members, centred on each body's centroid."""
        if self._local is not None and self._local[0] == theta:
            return self._local[1]
        points = self.reference[self.body_rows].copy()
        if self.hinge_rows.size and theta != 0.0:
            points[self.hinge_rows] = rotate_about_axis(
                points[self.hinge_rows], self.hinge_point, self.hinge_axis, theta
            )
        centroid = (self.aggregate @ (self.row_mass[:, None] * points)) / self.body_mass[:, None]
        local = points - centroid[self.body_of_row]
        local.flags.writeable = False
        self._local = (theta, local)
        return local


def rotate_about_axis(points, axis_point, axis_direction, angle):
    axis = np.asarray(axis_direction, dtype=float)
    rotation = Rotation.from_rotvec(angle * axis / np.linalg.norm(axis))
    return rotation.apply(np.asarray(points, dtype=float) - axis_point) + axis_point


@dataclass
class SimState:
    """
    Positions, velocities, clock and actuation state of one simulation.

    ``rest_lengths`` is aligned with ``graph.cables``; ``theta`` is the commanded
    angle of the rotating vertebra.
    """

    node_ids: Tuple[str, ...]
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0
    rest_lengths: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta: float = 0.0

    @classmethod
    def initial(cls, graph):
        return cls(
            node_ids=graph.node_ids,
            positions=np.array([n.position for n in graph.nodes], dtype=float).reshape(-1, 3),
            velocities=np.array([n.velocity for n in graph.nodes], dtype=float).reshape(-1, 3),
            time=0.0,
            rest_lengths=np.array([c.rest_length for c in graph.cables], dtype=float),
            theta=0.0,
        )

    @cached_property
    def index(self):
        return {node_id: i for i, node_id in enumerate(self.node_ids)}

    def position(self, node_id):
        return self.positions[self.index[node_id]]

    def velocity(self, node_id):
        return self.velocities[self.index[node_id]]

    def copy(self, **changes):
        values = dict(
            node_ids=self.node_ids,
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            time=self.time,
            rest_lengths=self.rest_lengths.copy(),
            theta=self.theta,
        )
        values.update(changes)
        return SimState(**values)

    def is_finite(self):
        return bool(
            np.isfinite(self.positions).all()
            and np.isfinite(self.velocities).all()
            and np.isfinite(self.rest_lengths).all()
            and np.isfinite(self.theta)
        )


def validate_structure(graph):
    """Collect every invariant violation of ``graph``; never raises."""
    report = ValidationReport()
    known = set(graph.index)

    for node in graph.nodes:
        if not node.anchored and node.mass <= 0:
            report.add("zero mass", f"free node {node.id} has mass {node.mass}")

    positions = {n.id: np.asarray(n.position, dtype=float) for n in graph.nodes}
    for cable in graph.cables:
        missing = [e for e in cable.endpoints if e not in known]
        if missing:
            report.add("dangling endpoint", f"cable {cable.id} references {', '.join(missing)}")
            continue
        if cable.endpoints[0] == cable.endpoints[1]:
            report.add("degenerate cable", f"cable {cable.id} connects {cable.endpoints[0]} to itself")
        elif np.linalg.norm(positions[cable.endpoints[1]] - positions[cable.endpoints[0]]) < DEGENERATE_LENGTH:
            report.add("degenerate cable", f"cable {cable.id} has coincident endpoints")
        if cable.rest_length < 0:
            report.add("negative rest length", f"cable {cable.id} rest length {cable.rest_length}")
        if cable.k < 0 or cable.c < 0:
            report.add("negative coefficient", f"cable {cable.id} k={cable.k} c={cable.c}")

    owner = {}
    for group in graph.groups:
        for member in group.members:
            if member not in known:
                report.add("dangling member", f"group {group.label} references {member}")
            elif member in owner:
                report.add("group overlap", f"{member} belongs to {owner[member]} and {group.label}")
            else:
                owner[member] = group.label

    group_labels = set(graph.group_index)
    hinges = 0
    for joint in graph.joints:
        missing = [g for g in joint.groups if g not in group_labels]
        if missing:
            report.add("dangling joint", f"{type(joint).__name__} references group {', '.join(missing)}")
        if isinstance(joint, Hinge):
            hinges += 1
    if hinges > 1:
        report.add("multiple hinges", f"{hinges} hinges, at most one is supported")

    for label, node_id in graph.labels.items():
        if node_id not in known:
            report.add("dangling label", f"label {label} references {node_id}")
    for foot in FOOT_LABELS:
        if foot not in graph.labels:
            report.add("missing foot label", foot)

    _check_connected(graph, owner, group_labels, report)
    return report


def _check_connected(graph, owner, group_labels, report):
    if len(group_labels) < 2:
        return
    neighbours = {label: set() for label in group_labels}
    for joint in graph.joints:
        a, b = joint.groups
        if a in neighbours and b in neighbours:
            neighbours[a].add(b)
            neighbours[b].add(a)
    for cable in graph.cables:
        a, b = (owner.get(e) for e in cable.endpoints)
        if a is not None and b is not None and a != b:
            neighbours[a].add(b)
            neighbours[b].add(a)
    start = graph.groups[0].label
    seen, todo = {start}, [start]
    while todo:
        for other in neighbours[todo.pop()] - seen:
            seen.add(other)
            todo.append(other)
    unreachable = sorted(group_labels - seen)
    if unreachable:
        report.add("disconnected", f"groups unreachable from {start}: {', '.join(unreachable)}")


def center_of_mass(graph, state, subset: Optional[Sequence[str]] = None):
    """Mass-weighted mean position of ``subset`` (node ids or labels), or of every node."""
    if subset is None:
        rows = np.arange(len(graph.nodes))
    else:
        rows = np.array([graph.node_row(name) for name in subset], dtype=int)
        if rows.size == 0:
            raise StructureError("center of mass of an empty node set")
    masses = graph.topology.masses[rows]
    total = masses.sum()
    if total <= 0:
        raise StructureError("center of mass of a massless node set")
    return masses @ state.positions[rows] / total


def cable_vector(cable, state):
    a, b = (state.position(e) for e in cable.endpoints)
    return b - a


def cable_length(cable, state):
    return float(np.linalg.norm(cable_vector(cable, state)))


def cable_direction(cable, state):
    """Unit vector from the cable's first endpoint to its second."""
    vector = cable_vector(cable, state)
    length = np.linalg.norm(vector)
    if length < DEGENERATE_LENGTH:
        raise DegenerateCableError(f"cable {cable.id} has coincident endpoints")
    return vector / length


def support_polygon_margin(points_xy, point_xy):
    """
    Signed distance from ``point_xy`` to the edge of the convex hull of ``points_xy``.

    Positive inside; ``-inf`` when the points do not span a polygon.
    """
    points = np.asarray(points_xy, dtype=float).reshape(-1, 2)
    if len(points) < 3:
        return float("-inf")
    try:
        hull = ConvexHull(points)
    except QhullError:
        return float("-inf")
    normals, offsets = hull.equations[:, :2], hull.equations[:, 2]
    return float(-np.max(normals @ np.asarray(point_xy, dtype=float) + offsets))


_MIRROR_PAIRS = {"A": "B", "B": "A", "C": "D", "D": "C"}


def mirror_label(label):
    """Label of the node mirrored across the sagittal plane."""
    match = re.fullmatch(r"([LR])(\d+)", label)
    if match:
        side = "R" if match.group(1) == "L" else "L"
        return f"{side}{match.group(2)}"
    match = re.fullmatch(r"(foot|leg)([ABCD])", label)
    if match:
        return f"{match.group(1)}{_MIRROR_PAIRS[match.group(2)]}"
    match = re.fullmatch(r"(shoulder|hip)([LR])", label)
    if match:
        return f"{match.group(1)}{'R' if match.group(2) == 'L' else 'L'}"
    return label
