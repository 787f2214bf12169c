"""
Builder for the Laika quadruped: five vertebrae joined by a horizontal and saddle
cable lattice, a rotating center vertebra, shoulder and hip frames and four stiff legs.

Axes: ``x`` points forward (toward the shoulders), ``y`` to the robot's left and
``z`` up. Vertebrae are numbered from the shoulders (1) to the hips (5). Each
vertebra has a center node and four end caps: the top (``T``) and bottom (``B``)
caps face forward, the left (``L``) and right (``R``) caps face backward, so the
rear caps of vertebra ``n`` interleave with the front caps of vertebra ``n + 1``
and carry the saddle cables between them.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from .exceptions import ConfigError, StructureError, config_key
from .structure import (
    BUNA_N,
    FOOT_LABELS,
    MATERIALS,
    SILICONE,
    SPRING,
    Cable,
    CableKind,
    CableRole,
    Hinge,
    Node,
    RigidGroup,
    Side,
    StructureGraph,
    Weld,
    validate_structure,
)

logger = logging.getLogger(__name__)

VERTEBRA_COUNT = 5


class VertebraKind(str, Enum):
    PASSIVE = "passive"
    ACTIVE = "active"
    ROTATING = "rotating"


VERTEBRA_KINDS = {
    1: VertebraKind.PASSIVE,
    2: VertebraKind.ACTIVE,
    3: VertebraKind.ROTATING,
    4: VertebraKind.ACTIVE,
    5: VertebraKind.PASSIVE,
}

DEFAULT_END_CAPS = {
    "T": (0.084, 0.0, 0.11),
    "B": (0.084, 0.0, -0.11),
    "L": (-0.084, 0.11, 0.0),
    "R": (-0.084, -0.11, 0.0),
}
DEFAULT_MASS_FRACTIONS = {"spine": 0.45, "shoulder": 0.20, "hip": 0.15, "legs": 0.20}
DEFAULT_MATERIALS = {
    "top": SILICONE.name,
    "bottom": BUNA_N.name,
    "left": SILICONE.name,
    "right": SILICONE.name,
    "saddle": SILICONE.name,
}
DEFAULT_SPOOLS = {"top": 2, "bottom": 2, "left": 4, "right": 4}
DEFAULT_SADDLE_WIRING = (("L", "T"), ("L", "B"), ("R", "T"), ("R", "B"))

# share of a vertebra's mass on its center node(s); the rest is split over the caps
CENTER_SHARE = 0.4
CAP_SHARE = 0.15


@dataclass(frozen=True)
class LaikaConfig:
    """
    Geometry, masses and materials of the robot. Lengths in m, masses in kg.

    ``hip_height`` is the height of the spine axis and the length of the legs.
    """

    overall_length: float = 0.528
    standing_height: float = 0.414
    hip_height: float = 0.185
    total_mass: float = 1.62
    vertebra_spacing: float = 0.09
    end_caps: Dict[str, Tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_END_CAPS))
    mass_fractions: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MASS_FRACTIONS))
    materials: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MATERIALS))
    spool_vertebra: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_SPOOLS))
    saddle_wiring: Tuple[Tuple[str, str], ...] = DEFAULT_SADDLE_WIRING
    frame_width: float = 0.18
    frame_depth: float = 0.048
    frame_height: float = 0.03
    rotating_half_offset: float = 0.01
    horizontal_pretension: float = 5.5
    cable_damping_ratio: float = 0.2
    obstacle_height: float = 0.075

    def __post_init__(self):
        for key in (
            "overall_length",
            "standing_height",
            "hip_height",
            "total_mass",
            "vertebra_spacing",
            "frame_width",
            "frame_depth",
            "frame_height",
            "rotating_half_offset",
        ):
            if not getattr(self, key) > 0:
                raise ConfigError("must be positive", key=config_key(key))
        if self.obstacle_height < 0:
            raise ConfigError("must not be negative", key="obstacleHeight")
        if not self.horizontal_pretension > 0:
            raise ConfigError("must be positive", key="horizontalPretension")
        if self.cable_damping_ratio < 0:
            raise ConfigError("must not be negative", key="cableDampingRatio")

        if set(self.end_caps) != set(DEFAULT_END_CAPS):
            raise ConfigError("end caps must be exactly T, B, L and R", key="endCaps")
        fractions = self.mass_fractions
        if set(fractions) != set(DEFAULT_MASS_FRACTIONS):
            raise ConfigError(f"expected fractions for {', '.join(DEFAULT_MASS_FRACTIONS)}", key="massFractions")
        if any(v < 0 for v in fractions.values()):
            raise ConfigError("mass fractions must not be negative", key="massFractions")
        if abs(sum(fractions.values()) - 1.0) > 1e-9:
            raise ConfigError(f"mass fractions sum to {sum(fractions.values())}, not 1", key="massFractions")
        if set(self.materials) != set(DEFAULT_MATERIALS):
            raise ConfigError(f"expected materials for {', '.join(DEFAULT_MATERIALS)}", key="materials")
        unknown = sorted(set(self.materials.values()) - set(MATERIALS))
        if unknown:
            raise ConfigError(f"unknown material {', '.join(unknown)}", key="materials")

        if set(self.spool_vertebra) != {side.value for side in Side}:
            raise ConfigError("expected a spool vertebra for top, bottom, left and right", key="spoolVertebra")
        active = [i for i, kind in VERTEBRA_KINDS.items() if kind is VertebraKind.ACTIVE]
        if any(v not in active for v in self.spool_vertebra.values()):
            raise ConfigError(f"spools sit on the active vertebrae {active}", key="spoolVertebra")
        if self.spool_vertebra["left"] != self.spool_vertebra["right"]:
            raise ConfigError("left and right spools must share a vertebra", key="spoolVertebra")
        for rear, front in self.saddle_wiring:
            if rear not in ("L", "R") or front not in ("T", "B"):
                raise ConfigError("saddle cables run from a rear cap to a front cap", key="saddleWiring")

        spine_length = (VERTEBRA_COUNT - 1) * self.vertebra_spacing + self.frame_depth
        if spine_length >= self.overall_length:
            raise ConfigError("spine and frames do not fit the overall length", key="vertebraSpacing")

    @property
    def frame_offset(self):
        """Distance from an end vertebra to the center of its frame."""
        return (self.overall_length - (VERTEBRA_COUNT - 1) * self.vertebra_spacing - self.frame_depth) / 2

    @property
    def shoulder_x(self):
        return self.vertebra_x(1) + self.frame_offset

    @property
    def hip_x(self):
        return self.vertebra_x(VERTEBRA_COUNT) - self.frame_offset

    def vertebra_x(self, index):
        return ((VERTEBRA_COUNT + 1) / 2 - index) * self.vertebra_spacing

    def part_mass(self, part):
        return self.total_mass * self.mass_fractions[part]


@dataclass(frozen=True)
class TensionTestPoint:
    """Silicone and Buna-N stiffness (N/m) used together for one calibration run."""

    name: str
    silicone: float
    buna_n: float

    def __post_init__(self):
        if not (self.silicone > 0 and self.buna_n > 0):
            raise ConfigError(f"tension point {self.name}: stiffness must be positive", key="tension")

    @classmethod
    def from_sigma(cls, n):
        """Table mean shifted by ``n`` standard deviations of both materials."""
        return cls(
            name=f"{n:+g}sigma",
            silicone=SILICONE.k_mean + n * SILICONE.k_std,
            buna_n=BUNA_N.k_mean + n * BUNA_N.k_std,
        )

    @classmethod
    def from_name(cls, name):
        for point in TENSION_POINTS:
            if point.name.lower() == str(name).lower():
                return point
        raise ConfigError(f"unknown tension point {name}", key="tension")


TENSION_POINTS = (
    TensionTestPoint("Low", 216.0, 547.0),
    TensionTestPoint("MedLow", 227.0, 678.0),
    TensionTestPoint("Mean", 237.0, 810.0),
    TensionTestPoint("MedHigh", 248.0, 941.0),
    TensionTestPoint("High", 258.0, 1073.0),
)


@dataclass(frozen=True)
class VertebraParts:
    index: int
    kind: VertebraKind
    nodes: Tuple[Node, ...]
    groups: Tuple[RigidGroup, ...]
    joints: Tuple[object, ...] = ()

    @property
    def caps(self):
        return {n.id[0]: n for n in self.nodes if n.id[0] in DEFAULT_END_CAPS}


def build_vertebra(index, kind, config=None):
    """
    One vertebra: a 5-node rigid group, or for the rotating vertebra two
    3-node halves joined by a hinge along the spine axis.

    The driven (front) half carries the top and bottom caps, the driving (rear)
    half the left and right caps.
    """
    config = config or LaikaConfig()
    kind = VertebraKind(kind)
    if VERTEBRA_KINDS.get(index) is not kind:
        raise StructureError(f"vertebra {index} cannot be {kind.value}")
    x = config.vertebra_x(index)
    h = config.hip_height
    mass = config.part_mass("spine") / VERTEBRA_COUNT

    caps = {
        letter: Node(
            id=f"{letter}{index}",
            position=(x + offset[0], offset[1], h + offset[2]),
            mass=mass * CAP_SHARE,
        )
        for letter, offset in sorted(config.end_caps.items())
    }
    if kind is not VertebraKind.ROTATING:
        center = Node(id=f"C{index}", position=(x, 0.0, h), mass=mass * CENTER_SHARE)
        nodes = (center, caps["T"], caps["B"], caps["L"], caps["R"])
        return VertebraParts(index, kind, nodes, (RigidGroup.from_nodes(f"vertebra-{index}", nodes),))

    half = config.rotating_half_offset
    front = Node(id=f"C{index}f", position=(x + half, 0.0, h), mass=mass * CENTER_SHARE / 2)
    back = Node(id=f"C{index}b", position=(x - half, 0.0, h), mass=mass * CENTER_SHARE / 2)
    driven = RigidGroup.from_nodes(f"vertebra-{index}-driven", (front, caps["T"], caps["B"]))
    driving = RigidGroup.from_nodes(f"vertebra-{index}-driving", (back, caps["L"], caps["R"]))
    hinge = Hinge(
        driving=driving.label,
        driven=driven.label,
        axis_point=(x, 0.0, h),
        axis_direction=(1.0, 0.0, 0.0),
    )
    nodes = (back, front, caps["T"], caps["B"], caps["L"], caps["R"])
    return VertebraParts(index, kind, nodes, (driving, driven), (hinge,))


def _damping(k, mass_a, mass_b, ratio):
    return 2.0 * math.sqrt(k * (mass_a + mass_b) / 2.0) * ratio


def _length(a, b):
    return float(np.linalg.norm(np.subtract(b.position, a.position)))


def _groove_order(spool, others):
    return sorted(others, key=lambda m: (abs(m - spool), m))


def build_spine(config=None):
    """
    Vertebrae, the four horizontal cable sets and the saddle cables.

    Horizontal cables carry ``horizontal_pretension`` at mean material stiffness;
    saddle rest lengths are chosen so that the saddles across each vertebra
    interface balance the axial pull of the horizontal cables crossing it.
    """
    config = config or LaikaConfig()
    parts = {i: build_vertebra(i, kind, config) for i, kind in VERTEBRA_KINDS.items()}
    nodes = {n.id: n for p in parts.values() for n in p.nodes}
    ratio = config.cable_damping_ratio

    cables = []
    pull = np.zeros(VERTEBRA_COUNT - 1)
    for side in Side:
        spool = config.spool_vertebra[side.value]
        material = MATERIALS[config.materials[side.value]]
        others = _groove_order(spool, [i for i in parts if i != spool])
        for groove, other in enumerate(others, start=1):
            a, b = parts[spool].caps[side.cap], parts[other].caps[side.cap]
            length = _length(a, b)
            rest = length - config.horizontal_pretension / material.k_mean
            if rest <= 0:
                raise StructureError(
                    f"cable {a.id}-{b.id} is too short for its pretension; lower horizontalPretension"
                )
            axial = abs(b.position[0] - a.position[0]) / length
            pull[min(spool, other) - 1 : max(spool, other) - 1] += config.horizontal_pretension * axial
            cables.append(
                Cable(
                    id=f"horizontal-{side.value}-{groove}",
                    endpoints=(a.id, b.id),
                    k=material.k_mean,
                    c=_damping(material.k_mean, a.mass, b.mass, ratio),
                    rest_length=rest,
                    original_rest_length=rest,
                    role=CableRole(CableKind.HORIZONTAL, side, groove),
                    material=material.name,
                )
            )

    material = MATERIALS[config.materials["saddle"]]
    for index in range(1, VERTEBRA_COUNT):
        pairs = [(parts[index].caps[rear], parts[index + 1].caps[front]) for rear, front in config.saddle_wiring]
        axial = sum(abs(b.position[0] - a.position[0]) / _length(a, b) for a, b in pairs)
        if axial <= 0:
            raise StructureError(f"saddle cables behind vertebra {index} have no axial component")
        tension = pull[index - 1] / axial
        for a, b in pairs:
            rest = _length(a, b) - tension / material.k_mean
            if rest <= 0:
                raise StructureError(
                    f"saddle {a.id}-{b.id} needs rest length {rest:.4f} m to balance the horizontal cables; "
                    f"lower horizontalPretension"
                )
            cables.append(
                Cable(
                    id=f"saddle-{a.id}-{b.id}",
                    endpoints=(a.id, b.id),
                    k=material.k_mean,
                    c=_damping(material.k_mean, a.mass, b.mass, ratio),
                    rest_length=rest,
                    original_rest_length=rest,
                    role=CableRole(CableKind.SADDLE),
                    material=material.name,
                )
            )

    groups = tuple(g for p in parts.values() for g in p.groups)
    joints = tuple(j for p in parts.values() for j in p.joints)
    labels = {node_id: node_id for node_id in nodes}
    return StructureGraph(
        nodes=tuple(nodes.values()), cables=tuple(cables), groups=groups, joints=joints, labels=labels
    )


def _frame(prefix, x, forward, config):
    h = config.hip_height
    half_width = config.frame_width / 2
    end = "Front" if forward > 0 else "Back"
    nodes = (
        Node(id=f"{prefix}L", position=(x, half_width, h)),
        Node(id=f"{prefix}R", position=(x, -half_width, h)),
        Node(id=f"{prefix}{end}", position=(x + forward * config.frame_depth / 2, 0.0, h)),
        Node(id=f"{prefix}Top", position=(x, 0.0, h + config.frame_height)),
    )
    mass = config.part_mass(prefix) / len(nodes)
    return tuple(replace(n, mass=mass) for n in nodes)


def _leg(foot, x, y, config):
    mass = config.part_mass("legs") / 8
    return (
        Node(id=f"leg{foot}", position=(x, y, config.hip_height / 2), mass=mass),
        Node(id=f"foot{foot}", position=(x, y, 0.0), mass=mass),
    )


def _skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _equilibrium_rows(topo):
    """Map node forces, flattened, to the net force and moment on every body and free node."""
    positions = topo.reference
    weighted = topo.aggregate @ (topo.row_mass[:, None] * positions[topo.body_rows])
    centroid = weighted / topo.body_mass[:, None]
    rows = np.zeros((6 * topo.body_count + 3 * len(topo.free_rows), 3 * topo.node_count))
    for node, body in zip(topo.body_rows, topo.body_of_row):
        rows[6 * body : 6 * body + 3, 3 * node : 3 * node + 3] = np.eye(3)
        rows[6 * body + 3 : 6 * body + 6, 3 * node : 3 * node + 3] = _skew(positions[node] - centroid[body])
    base = 6 * topo.body_count
    for i, node in enumerate(topo.free_rows):
        rows[base + 3 * i : base + 3 * i + 3, 3 * node : 3 * node + 3] = np.eye(3)
    return rows


def balance_rest_lengths(graph, gravity=9.81, tolerance=1e-6):
    """
    Copy of ``graph`` whose cable rest lengths hold it still on its four feet.

    The tensions built into ``graph`` (and an even share of the weight on each
    foot) are the starting point; the least-squares smallest change to them that
    cancels gravity on every body gives the balanced tensions. Rest lengths follow
    from each cable's stiffness. Raises ``StructureError`` when a cable would have
    to push, a rest length would not be positive or no balance exists.
    """
    topo = graph.topology
    positions = topo.reference
    vector = positions[topo.cable_b] - positions[topo.cable_a]
    length = np.linalg.norm(vector, axis=1)
    direction = vector / length[:, None]
    feet = [graph.index[label] for label in FOOT_LABELS]
    cable_count = len(graph.cables)

    loads = np.zeros((3 * topo.node_count, cable_count + len(feet)))
    for j, (a, b) in enumerate(zip(topo.cable_a, topo.cable_b)):
        loads[3 * a : 3 * a + 3, j] += direction[j]
        loads[3 * b : 3 * b + 3, j] -= direction[j]
    for i, foot in enumerate(feet):
        loads[3 * foot + 2, cable_count + i] = 1.0
    weight = np.zeros((topo.node_count, 3))
    weight[:, 2] = -topo.masses * gravity

    rows = _equilibrium_rows(topo)
    matrix = rows @ loads
    target = -rows @ weight.reshape(-1)
    rest = np.array([c.rest_length for c in graph.cables])
    nominal = np.concatenate([topo.k * (length - rest), np.full(len(feet), graph.total_mass * gravity / len(feet))])
    correction, *_ = np.linalg.lstsq(matrix, target - matrix @ nominal, rcond=None)
    solution = nominal + correction
    residual = float(np.abs(matrix @ solution - target).max())
    if residual > tolerance:
        raise StructureError(f"no cable tensions hold the robot still (residual {residual:.2e} N)")

    tension, reaction = solution[:cable_count], solution[cable_count:]
    if (reaction <= 0).any():
        raise StructureError("a foot would have to hold the ground to keep the robot still")
    cables = []
    for cable, t, k, span in zip(graph.cables, tension, topo.k, length):
        if t <= 0:
            raise StructureError(
                f"cable {cable.id} would need {t:.3f} N to hold the robot; raise horizontalPretension"
            )
        balanced = span - t / k
        if balanced <= 0:
            raise StructureError(f"cable {cable.id} needs rest length {balanced:.4f} m; lower horizontalPretension")
        cables.append(replace(cable, rest_length=balanced, original_rest_length=balanced))
    logger.debug(
        f"balanced rest lengths: tensions {tension.min():.2f} to {tension.max():.2f} N, "
        f"feet {', '.join(f'{r:.2f}' for r in reaction)} N, residual {residual:.1e} N"
    )
    return graph.with_cables(cables)


def build_laika(config=None, gravity=9.81):
    """
    The complete robot standing on the ground.

    Feet: A front right, B front left, C back right, D back left. Vertebra 1 and
    the front legs are welded to the shoulder frame, vertebra 5 and the back legs
    to the hip frame. Cable rest lengths are balanced against the robot's weight
    at mean material stiffness.
    """
    config = config or LaikaConfig()
    spine = build_spine(config)
    half_width = config.frame_width / 2

    shoulder = _frame("shoulder", config.shoulder_x, +1, config)
    hip = _frame("hip", config.hip_x, -1, config)
    legs = {
        "A": _leg("A", config.shoulder_x, -half_width, config),
        "B": _leg("B", config.shoulder_x, half_width, config),
        "C": _leg("C", config.hip_x, -half_width, config),
        "D": _leg("D", config.hip_x, half_width, config),
    }
    groups = [RigidGroup.from_nodes("shoulder-frame", shoulder), RigidGroup.from_nodes("hip-frame", hip)]
    groups += [RigidGroup.from_nodes(f"leg-{foot}", nodes) for foot, nodes in legs.items()]
    welds = [
        Weld(("vertebra-1", "shoulder-frame")),
        Weld((f"vertebra-{VERTEBRA_COUNT}", "hip-frame")),
        Weld(("shoulder-frame", "leg-A")),
        Weld(("shoulder-frame", "leg-B")),
        Weld(("hip-frame", "leg-C")),
        Weld(("hip-frame", "leg-D")),
    ]
    nodes = spine.nodes + shoulder + hip + tuple(n for pair in legs.values() for n in pair)
    labels = dict(spine.labels)
    labels.update({n.id: n.id for n in shoulder + hip})
    for foot, (leg, tip) in legs.items():
        labels[leg.id] = leg.id
        labels[tip.id] = tip.id

    graph = StructureGraph(
        nodes=nodes,
        cables=spine.cables,
        groups=spine.groups + tuple(groups),
        joints=spine.joints + tuple(welds),
        labels=labels,
    )
    top = max(n.position[2] for n in graph.nodes)
    if top > config.standing_height:
        raise StructureError(f"model is {top:.3f} m tall, taller than the standing height {config.standing_height} m")
    report = validate_structure(graph)
    if not report.ok:
        raise StructureError("; ".join(str(v) for v in report))
    graph = balance_rest_lengths(graph, gravity)
    logger.info(
        f"built Laika: {len(graph.nodes)} nodes, {len(graph.cables)} cables, "
        f"{len(graph.groups)} rigid groups, {graph.total_mass:.3f} kg"
    )
    return graph


def spine_node_ids(graph):
    return tuple(m for g in graph.groups if g.label.startswith("vertebra-") for m in g.members)


def apply_tension_test_point(graph, point):
    """
    Copy of ``graph`` with silicone and Buna-N cable stiffness set from ``point``.

    Spring cables keep their exact stiffness; damping is rescaled so each cable
    keeps its damping ratio. Rest lengths are unchanged.
    """
    if not (point.silicone > 0 and point.buna_n > 0):
        raise ConfigError(f"tension point {point.name}: stiffness must be positive", key="tension")
    stiffness = {SILICONE.name: point.silicone, BUNA_N.name: point.buna_n, SPRING.name: SPRING.k_mean}
    cables = []
    for cable in graph.cables:
        k = stiffness.get(cable.material, cable.k)
        c = cable.c * math.sqrt(k / cable.k) if cable.k > 0 else cable.c
        cables.append(replace(cable, k=k, c=c))
    logger.debug(f"tension point {point.name}: silicone {point.silicone} N/m, Buna-N {point.buna_n} N/m")
    return graph.with_cables(cables)
