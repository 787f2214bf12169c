"""
Actuation: percent retraction of a horizontal cable set, spool-coupled retraction
and the rotation ramp of the center vertebra.

Commands reach the integrator through schedules, callables ``t -> (rest_lengths,
theta)`` that :func:`laika.dynamics.step_dynamics` evaluates after every step.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np

from .dynamics import fit_rigid
from .exceptions import ActuationError, ConfigError
from .structure import CableKind, Side, rotate_about_axis

logger = logging.getLogger(__name__)

GROOVE_RATIOS = (1.0, 1.0, 2.0, 3.0)


class BendSide(str, Enum):
    """Horizontal set that is pulled; the bend labels follow the hardware naming."""

    PULL_RIGHT = "pullRight"
    PULL_LEFT = "pullLeft"
    PULL_TOP = "pullTop"
    PULL_BOTTOM = "pullBottom"

    @property
    def side(self):
        return Side(self.value[4:].lower())

    @property
    def label(self):
        return {
            BendSide.PULL_RIGHT: "Left Bend",
            BendSide.PULL_LEFT: "Right Bend",
            BendSide.PULL_TOP: "Up Bend",
            BendSide.PULL_BOTTOM: "Down Bend",
        }[self]

    @property
    def pulled(self):
        return f"Horiz. {self.side.value.title()}"

    @property
    def coronal(self):
        return self.side in (Side.LEFT, Side.RIGHT)

    @property
    def mirrored(self):
        return {BendSide.PULL_RIGHT: BendSide.PULL_LEFT, BendSide.PULL_LEFT: BendSide.PULL_RIGHT}.get(self, self)


class RotationDirection(str, Enum):
    CCW = "CCW"
    CW = "CW"

    @property
    def sign(self):
        return 1.0 if self is RotationDirection.CCW else -1.0

    @property
    def mirrored(self):
        return RotationDirection.CW if self is RotationDirection.CCW else RotationDirection.CCW


@dataclass(frozen=True)
class MotionSpec:
    bend_side: BendSide = BendSide.PULL_RIGHT
    rotation_direction: RotationDirection = RotationDirection.CCW
    retraction_fraction: float = 0.8
    ramp_duration: float = 40.0
    max_angle: float = math.pi / 3
    bend_duration: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "bend_side", BendSide(self.bend_side))
        object.__setattr__(self, "rotation_direction", RotationDirection(self.rotation_direction))
        if not 0 < self.retraction_fraction <= 1:
            raise ConfigError("retraction fraction must lie in (0, 1]", key="motion.retractionFraction")
        if not self.ramp_duration > 0:
            raise ConfigError("must be positive", key="motion.rampDuration")
        if not self.max_angle > 0:
            raise ConfigError("must be positive", key="motion.maxAngle")
        if self.bend_duration < 0:
            raise ConfigError("must not be negative", key="motion.bendDuration")

    @property
    def label(self):
        sign = "+" if self.rotation_direction is RotationDirection.CCW else "-"
        return (
            f"{self.bend_side.label} / {self.bend_side.pulled}, ({sign}) {self.rotation_direction.value}"
        )

    @property
    def key(self):
        return f"{self.bend_side.value}-{self.rotation_direction.value}"

    def mirrored(self):
        """The same motion reflected across the sagittal plane."""
        return replace(
            self, bend_side=self.bend_side.mirrored, rotation_direction=self.rotation_direction.mirrored
        )


@dataclass(frozen=True)
class SpoolCommand:
    side: Side
    drum_retraction: float
    groove_ratios: Tuple[float, ...] = GROOVE_RATIOS

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if len(self.groove_ratios) != 4 or min(self.groove_ratios) <= 0:
            raise ActuationError(f"groove ratios must be four positive values, got {self.groove_ratios}")
        if self.drum_retraction < 0:
            raise ActuationError(f"drum retraction must not be negative, got {self.drum_retraction}")


def _check_fraction(fraction):
    if not 0 < fraction <= 1:
        raise ActuationError(f"retraction fraction must lie in (0, 1], got {fraction}")


def bend_rest_lengths(cables, fraction):
    """Rest lengths ``P * r(0)`` for ``cables``."""
    _check_fraction(fraction)
    original = np.array([c.original_rest_length for c in cables], dtype=float)
    return np.maximum(fraction * original, 0.0)


def spool_deltas(command):
    """Length taken in by each groove of the spool, ordered by groove index."""
    return command.drum_retraction * np.asarray(command.groove_ratios, dtype=float)


def spool_rest_lengths(cables, command):
    """
    Rest lengths after retracting ``cables`` (one horizontal set) by the spool.

    Returns the lengths and whether any of them hit zero and was clamped.
    """
    deltas = spool_deltas(command)
    lengths = []
    for cable in cables:
        if cable.role.kind is not CableKind.HORIZONTAL or cable.role.side is not command.side:
            raise ActuationError(f"cable {cable.id} is not on the {command.side.value} spool")
        lengths.append(cable.original_rest_length - deltas[cable.role.groove - 1])
    lengths = np.array(lengths, dtype=float)
    saturated = bool((lengths < 0).any())
    if saturated:
        logger.warning(f"spool {command.side.value} retraction {command.drum_retraction} m saturates a cable")
    return np.maximum(lengths, 0.0), saturated


def rotation_angle(t, direction, spec):
    """Commanded angle at ``t`` seconds into the ramp, saturated at ``spec.max_angle``."""
    if t < 0:
        raise ActuationError(f"rotation ramp time must not be negative, got {t}")
    direction = RotationDirection(direction)
    return direction.sign * min(t / spec.ramp_duration, 1.0) * spec.max_angle


def apply_rotation(graph, state, theta):
    """
    Place the driven half of the rotating vertebra at ``theta`` about the hinge axis,
    measured in the driving half's current frame.
    """
    hinge = graph.hinge
    if hinge is None:
        raise ActuationError("structure has no rotating vertebra")
    topo = graph.topology
    driving = [graph.index[m] for m in graph.group(hinge.driving).members]
    driven = [graph.index[m] for m in graph.group(hinge.driven).members]
    rotation, reference_centroid, current_centroid = fit_rigid(
        topo.reference[driving], state.positions[driving], topo.masses[driving]
    )
    posed = rotate_about_axis(topo.reference[driven], hinge.axis_point, hinge.axis_direction, theta)
    positions = state.positions.copy()
    positions[driven] = rotation.apply(posed - reference_centroid) + current_centroid
    return state.copy(positions=positions, theta=float(theta))


def horizontal_set(graph, side):
    """Cables of one horizontal set ordered by groove index."""
    cables = graph.cables_where(kind=CableKind.HORIZONTAL, side=Side(side))
    return sorted(cables, key=lambda c: c.role.groove)


def bend_targets(graph, rest_lengths, spec, hardware=False):
    """
    Rest lengths of every cable once the bend of ``spec`` is complete.

    With ``hardware`` the set is retracted by its spool, the drum turned until the
    cable on the largest groove shortens as much as percent retraction would shorten it.
    """
    cables = horizontal_set(graph, spec.bend_side.side)
    rows = [graph.cable_index[c.id] for c in cables]
    targets = np.array(rest_lengths, dtype=float)
    if not hardware:
        targets[rows] = bend_rest_lengths(cables, spec.retraction_fraction)
        return targets
    _check_fraction(spec.retraction_fraction)
    longest = max(range(len(cables)), key=lambda i: (GROOVE_RATIOS[cables[i].role.groove - 1], i))
    delta = (1.0 - spec.retraction_fraction) * cables[longest].original_rest_length
    command = SpoolCommand(spec.bend_side.side, delta / GROOVE_RATIOS[cables[longest].role.groove - 1])
    targets[rows], _ = spool_rest_lengths(cables, command)
    return targets


class BendRamp:
    """Linear ramp of rest lengths from their values at ``start`` to the bend targets."""

    def __init__(self, graph, state, spec, hardware=False):
        self.start = state.time
        self.duration = spec.bend_duration
        self.initial = np.array(state.rest_lengths, dtype=float)
        self.target = bend_targets(graph, self.initial, spec, hardware=hardware)

    def fraction(self, t):
        if self.duration == 0:
            return 1.0
        return min(max((t - self.start) / self.duration, 0.0), 1.0)

    def __call__(self, t):
        return self.initial + self.fraction(t) * (self.target - self.initial), None


class RotationRamp:
    def __init__(self, spec, start):
        self.spec = spec
        self.start = start

    def __call__(self, t):
        return None, rotation_angle(max(t - self.start, 0.0), self.spec.rotation_direction, self.spec)

