"""
Foot-lift experiments.

A run stands the robot up, retracts one horizontal cable set, lets it settle and
then ramps the rotation of the center vertebra until a foot leaves the ground.
The calibration sweep repeats this for every motion and tension test point, and
the comparison scores the lift-off angles against the hardware measurements.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from . import settings
from .actuation import BendRamp, BendSide, MotionSpec, RotationDirection, RotationRamp
from .dynamics import Obstacle, SimParams, ground_contact_forces, ground_level, settle, step_dynamics
from .exceptions import ConfigError, ExperimentError
from .model import TENSION_POINTS, LaikaConfig, apply_tension_test_point, build_laika, spine_node_ids
from .structure import SimState, center_of_mass, mirror_label, support_polygon_margin

logger = logging.getLogger(__name__)

FEET = ("A", "B", "C", "D")
FOOT_POSITIONS = {"A": "front right", "B": "front left", "C": "back right", "D": "back left"}

DEFAULT_SAMPLE_PERIOD = 0.05
DEFAULT_HEIGHT_THRESHOLD = 0.002
DEFAULT_HOLD_WINDOW = 0.5
DEFAULT_TOLERANCE = 0.15


def foot_letter(label):
    """``"A"`` for ``"A"`` or ``"footA"``."""
    letter = label[4:] if isinstance(label, str) and label.startswith("foot") else label
    if letter not in FEET:
        raise ExperimentError(f"unknown foot {label}")
    return letter


def mirror_foot(foot):
    return foot_letter(mirror_label(f"foot{foot_letter(foot)}"))


@dataclass(frozen=True)
class HardwareReference:
    """Lift-off angle ranges (rad, absolute values) per foot, measured and previously simulated."""

    hardware: Dict[str, Tuple[float, float]] = field(
        default_factory=lambda: {"A": (0.44, 0.50), "B": (0.57, 0.60), "C": (0.51, 0.54), "D": (0.41, 0.43)}
    )
    simulation: Dict[str, Tuple[float, float]] = field(
        default_factory=lambda: {"A": (0.33, 0.47), "B": (0.35, 0.47), "C": (0.25, 0.44), "D": (0.25, 0.43)}
    )

    def __post_init__(self):
        for name, table in (("hardware", self.hardware), ("simulation", self.simulation)):
            if set(table) != set(FEET):
                raise ExperimentError(f"{name} reference must cover feet {', '.join(FEET)}")
            for foot, (low, high) in table.items():
                if low > high:
                    raise ExperimentError(f"{name} range for foot {foot} is empty: {low} > {high}")

    def interval(self, foot):
        return self.hardware[foot_letter(foot)]


HARDWARE_REFERENCE = HardwareReference()


@dataclass(frozen=True)
class MotionTableRow:
    bend_side: BendSide
    rotation_direction: RotationDirection
    foot: str
    position: str

    @property
    def bend_label(self):
        return self.bend_side.label

    @property
    def pulled(self):
        return self.bend_side.pulled


# the motion combinations and lifted feet as printed for the hardware prototype
MOTION_TABLE = (
    MotionTableRow(BendSide.PULL_RIGHT, RotationDirection.CCW, "A", "Front Right"),
    MotionTableRow(BendSide.PULL_LEFT, RotationDirection.CCW, "C", "Back Left"),
    MotionTableRow(BendSide.PULL_RIGHT, RotationDirection.CW, "B", "Front Left"),
    MotionTableRow(BendSide.PULL_LEFT, RotationDirection.CW, "D", "Back Right"),
)

MOTIONS = tuple(
    MotionSpec(bend_side=row.bend_side, rotation_direction=row.rotation_direction) for row in MOTION_TABLE
)


def _table_row(motion):
    for row in MOTION_TABLE:
        if row.bend_side is motion.bend_side and row.rotation_direction is motion.rotation_direction:
            return row
    return None


def expected_foot(motion):
    """Foot the motion table lists for ``motion``, ``None`` for motions outside it."""
    row = _table_row(motion)
    return None if row is None else row.foot


def mirror_model_foot(motion):
    """
    Foot a robot symmetric across its sagittal plane lifts first, ``None`` for
    motions outside the motion table.

    Counter-clockwise motions take their foot from the motion table; a clockwise
    motion is the mirror image of a counter-clockwise one and lifts the mirrored foot.
    """
    if motion.rotation_direction is RotationDirection.CCW:
        return expected_foot(motion)
    foot = expected_foot(motion.mirrored())
    return None if foot is None else mirror_foot(foot)


def motion_from_text(text, template=None):
    """
    Motion named on the command line: a foot letter (the motion expected to lift
    it) or a ``bend/direction`` pair such as ``pullRight/CCW`` or ``left-bend/cw``.
    """
    template = template or MotionSpec()
    if text in FEET:
        for motion in MOTIONS:
            if expected_foot(motion) == text:
                return replace(template, bend_side=motion.bend_side, rotation_direction=motion.rotation_direction)
    bends = {side.value.lower(): side for side in BendSide}
    bends.update({side.label.replace(" ", "").lower(): side for side in BendSide})
    directions = {d.value.lower(): d for d in RotationDirection}
    parts = [p.replace("-", "").replace(" ", "").lower() for p in str(text).replace(",", "/").split("/")]
    if len(parts) == 2 and parts[0] in bends and parts[1] in directions:
        return replace(template, bend_side=bends[parts[0]], rotation_direction=directions[parts[1]])
    raise ConfigError(f"unknown motion {text}; use a foot letter or bend/direction", key="motion")


@dataclass
class FootLiftTrace:
    """
    Sampled foot heights (above the local ground) against the commanded angle.

    Samples before ``rotation_start`` belong to the bend phase.
    """

    time: np.ndarray
    theta: np.ndarray
    foot_heights: np.ndarray
    contacts: np.ndarray
    spine_com: Optional[np.ndarray] = None
    com_margin: Optional[np.ndarray] = None
    rotation_start: Optional[float] = None
    sample_period: float = DEFAULT_SAMPLE_PERIOD

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float).reshape(-1)
        count = len(self.time)
        self.theta = np.asarray(self.theta, dtype=float).reshape(count)
        self.foot_heights = np.asarray(self.foot_heights, dtype=float).reshape(count, len(FEET))
        self.contacts = np.asarray(self.contacts, dtype=bool).reshape(count, len(FEET))
        if self.spine_com is not None:
            self.spine_com = np.asarray(self.spine_com, dtype=float).reshape(count, 3)
        if self.com_margin is not None:
            self.com_margin = np.asarray(self.com_margin, dtype=float).reshape(count)
        if count > 1 and not (np.diff(self.time) > 0).all():
            raise ExperimentError("trace timestamps must be strictly increasing")
        if count > 1 and not (np.diff(np.abs(self.theta)) >= -1e-12).all():
            raise ExperimentError("trace angle must not decrease in magnitude")

    @classmethod
    def empty(cls):
        return cls(time=np.zeros(0), theta=np.zeros(0), foot_heights=np.zeros((0, 4)), contacts=np.zeros((0, 4)))

    def __len__(self):
        return len(self.time)

    def foot_height(self, foot):
        return self.foot_heights[:, FEET.index(foot_letter(foot))]

    def contact(self, foot):
        return self.contacts[:, FEET.index(foot_letter(foot))]

    def rotation_phase(self):
        if self.rotation_start is None:
            return FootLiftTrace.empty()
        keep = self.time >= self.rotation_start
        return FootLiftTrace(
            time=self.time[keep],
            theta=self.theta[keep],
            foot_heights=self.foot_heights[keep],
            contacts=self.contacts[keep],
            spine_com=None if self.spine_com is None else self.spine_com[keep],
            com_margin=None if self.com_margin is None else self.com_margin[keep],
            rotation_start=self.rotation_start,
            sample_period=self.sample_period,
        )


def _check_detection(height_threshold, hold_window):
    if not height_threshold > 0:
        raise ExperimentError(f"lift-off height threshold must be positive, got {height_threshold}")
    if hold_window < 0:
        raise ExperimentError(f"lift-off hold window must not be negative, got {hold_window}")


def lift_off_index(trace, foot, height_threshold=DEFAULT_HEIGHT_THRESHOLD, hold_window=DEFAULT_HOLD_WINDOW):
    """Sample at which ``foot`` starts a lift held for ``hold_window`` seconds, ``None`` if none."""
    _check_detection(height_threshold, hold_window)
    above = trace.foot_height(foot) > height_threshold
    start = None
    for i, lifted in enumerate(above):
        if not lifted:
            start = None
            continue
        if start is None:
            start = i
        if trace.time[i] - trace.time[start] >= hold_window - 1e-12:
            return start
    return None


def detect_lift_off(
    trace, foot, height_threshold=DEFAULT_HEIGHT_THRESHOLD, hold_window=DEFAULT_HOLD_WINDOW
) -> Optional[float]:
    """
    Smallest ``|theta|`` at which ``foot`` rises above ``height_threshold`` and
    stays there for ``hold_window`` seconds; ``None`` if it never does.
    """
    index = lift_off_index(trace, foot, height_threshold, hold_window)
    return None if index is None else float(abs(trace.theta[index]))


def first_lift_off(trace, height_threshold=DEFAULT_HEIGHT_THRESHOLD, hold_window=DEFAULT_HOLD_WINDOW):
    """
    ``(foot, angle)`` of the foot that lifted first, or ``(None, None)``.

    The first lift must start after the trace's first sample, from a moment when
    the other three feet are down; ``ExperimentError`` otherwise, and also when
    two feet start lifting at the same sample.
    """
    found = {}
    for foot in FEET:
        index = lift_off_index(trace, foot, height_threshold, hold_window)
        if index is not None:
            found[foot] = index
    if not found:
        return None, None
    index = min(found.values())
    first = [foot for foot in FEET if found.get(foot) == index]
    if len(first) > 1:
        raise ExperimentError(f"feet {', '.join(first)} lifted together at sample {index}")
    (foot,) = first
    if index == 0:
        raise ExperimentError(f"foot {foot} was off the ground before the trace began")
    up = [other for i, other in enumerate(FEET) if other != foot and trace.foot_heights[index, i] > height_threshold]
    if up:
        raise ExperimentError(f"foot {foot} lifted while feet {', '.join(up)} were off the ground")
    return foot, float(abs(trace.theta[index]))


class TraceRecorder:
    def __init__(self, graph, params, sample_period=DEFAULT_SAMPLE_PERIOD):
        if not sample_period > 0:
            raise ExperimentError(f"sample period must be positive, got {sample_period}")
        self.graph = graph
        self.params = params
        self.sample_period = sample_period
        self.steps_per_sample = max(1, int(round(sample_period / params.dt)))
        self.feet = [graph.node_row(f"foot{foot}") for foot in FEET]
        self.spine = spine_node_ids(graph)
        self.samples = []

    def record(self, state):
        if self.samples and state.time <= self.samples[-1][0]:
            return
        feet = state.positions[self.feet]
        heights = feet[:, 2] - ground_level(feet[:, :2], self.params)
        _, normal = ground_contact_forces(feet, state.velocities[self.feet], self.params)
        contacts = normal > 0
        com = center_of_mass(self.graph, state)
        margin = support_polygon_margin(feet[contacts, :2], com[:2])
        spine_com = center_of_mass(self.graph, state, self.spine)
        self.samples.append((state.time, state.theta, heights, contacts, spine_com, margin))

    def advance(self, state, command, duration, stop=None):
        """Step for ``duration`` seconds under ``command``, sampling as it goes."""
        total = int(round(duration / self.params.dt))
        done = 0
        while done < total:
            chunk = min(self.steps_per_sample, total - done)
            for _ in range(chunk):
                state = step_dynamics(self.graph, state, self.params, command)
            done += chunk
            self.record(state)
            if stop is not None and stop():
                break
        return state

    def trace(self, rotation_start=None):
        if not self.samples:
            return FootLiftTrace.empty()
        time, theta, heights, contacts, spine_com, margin = zip(*self.samples)
        return FootLiftTrace(
            time=np.array(time),
            theta=np.array(theta),
            foot_heights=np.array(heights),
            contacts=np.array(contacts),
            spine_com=np.array(spine_com),
            com_margin=np.array(margin),
            rotation_start=rotation_start,
            sample_period=self.sample_period,
        )


@dataclass
class FootLiftResult:
    motion: MotionSpec
    tension_point: object
    lifted_foot: Optional[str] = None
    lift_off_angle: Optional[float] = None
    trace: Optional[FootLiftTrace] = None
    error: Optional[str] = None

    def __post_init__(self):
        if (self.lifted_foot is None) != (self.lift_off_angle is None):
            raise ExperimentError("a lifted foot and its lift-off angle go together")
        if self.lifted_foot is not None:
            self.lifted_foot = foot_letter(self.lifted_foot)

    @property
    def expected_foot(self):
        return expected_foot(self.motion)

    @property
    def mirror_model_foot(self):
        return mirror_model_foot(self.motion)

    @property
    def matches_expected(self):
        expected = self.expected_foot
        return self.error is None and expected is not None and self.lifted_foot == expected


def _initial_state(graph, params):
    state = SimState.initial(graph)
    feet = state.positions[[graph.node_row(f"foot{foot}") for foot in FEET]]
    lift = float(np.max(ground_level(feet[:, :2], params)))
    if lift > 0:
        # start above the obstacle and let the robot drop onto it
        state.positions[:, 2] += lift + 0.001
    return state


def check_stance(graph, state, params, phase):
    """Raise ``ExperimentError`` unless all four feet press on the ground."""
    rows = [graph.node_row(f"foot{foot}") for foot in FEET]
    _, normal = ground_contact_forces(state.positions[rows], state.velocities[rows], params)
    off = [foot for foot, force in zip(FEET, normal) if not force > 0]
    if off:
        raise ExperimentError(f"feet {', '.join(off)} off the ground after {phase} at t={state.time:.3f} s")


def run_foot_lift_test(
    motion,
    tension_point,
    params=None,
    config=None,
    *,
    rotate=True,
    full_trace=False,
    hardware_bend=False,
    sample_period=DEFAULT_SAMPLE_PERIOD,
    height_threshold=DEFAULT_HEIGHT_THRESHOLD,
    hold_window=DEFAULT_HOLD_WINDOW,
    graph=None,
    require_stance=True,
):
    """
    Stand, bend, settle, then ramp the rotation until the first foot lifts.

    Runs to the end of the ramp when ``full_trace`` is set. A run in which no
    foot lifts is a valid result with ``lifted_foot`` set to ``None``. With
    ``require_stance`` the robot must stand on all four feet after standing up
    and after the bend, or the run raises ``ExperimentError``. Lift-off is only
    searched in the rotation phase and must happen at a nonzero angle.
    """
    _check_detection(height_threshold, hold_window)
    params = params or SimParams()
    graph = apply_tension_test_point(graph or build_laika(config), tension_point)
    logger.info(f"foot-lift run: {motion.label} at {tension_point.name} tension")

    state = settle(graph, _initial_state(graph, params), params)
    if require_stance:
        check_stance(graph, state, params, "standing up")
    recorder = TraceRecorder(graph, params, sample_period)
    recorder.record(state)

    bend = BendRamp(graph, state, motion, hardware=hardware_bend)
    logger.debug(f"bending: {motion.bend_side.pulled} to {motion.retraction_fraction:.0%} in {motion.bend_duration} s")
    state = recorder.advance(state, bend, motion.bend_duration)
    state = settle(graph, state, params, command=bend)
    if require_stance:
        check_stance(graph, state, params, "the bend")
    recorder.record(state)

    rotation_start = None
    if rotate:
        rotation_start = state.time
        ramp = RotationRamp(motion, rotation_start)

        def lifted():
            phase = recorder.trace(rotation_start).rotation_phase()
            return first_lift_off(phase, height_threshold, hold_window)[0] is not None

        logger.debug(f"rotating {motion.rotation_direction.value} to {motion.max_angle:.3f} rad")
        state = recorder.advance(state, ramp, motion.ramp_duration + hold_window, None if full_trace else lifted)

    trace = recorder.trace(rotation_start)
    foot, angle = first_lift_off(trace.rotation_phase() if rotate else trace, height_threshold, hold_window)
    if foot is None:
        logger.info(f"no foot lifted: {motion.label} at {tension_point.name}")
    elif not angle > 0:
        raise ExperimentError(f"foot {foot} lifted before the rotation turned: {motion.label} at {tension_point.name}")
    else:
        logger.info(f"foot {foot} lifted at {angle:.3f} rad: {motion.label} at {tension_point.name}")
    return FootLiftResult(motion, tension_point, foot, angle, trace)


def _failed(motion, point, error):
    logger.error(f"run {motion.label} at {point.name} failed: {type(error).__name__}: {error}")
    return FootLiftResult(motion, point, error=f"{type(error).__name__}: {error}")


def _run_job(job):
    motion, point, params, config, options = job
    try:
        return run_foot_lift_test(motion, point, params, config, **options)
    except Exception as e:
        return _failed(motion, point, e)


def _collect(future, job):
    try:
        return future.result()
    except Exception as e:
        return _failed(job[0], job[1], e)


def calibration_sweep(params=None, config=None, motions=MOTIONS, points=TENSION_POINTS, workers=None, **options):
    """
    Every motion at every tension point, motion-major with tension ascending.

    Failed runs, including crashed worker processes, are returned with their
    ``error`` set instead of aborting the sweep.
    """
    points = sorted(points, key=lambda p: (p.silicone, p.buna_n))
    jobs = [(motion, point, params, config, options) for motion in motions for point in points]
    workers = settings.WORKERS if workers is None else workers
    if workers > 1:
        logger.info(f"sweeping {len(jobs)} runs on {workers} workers")
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_job, job) for job in jobs]
            results = [_collect(future, job) for future, job in zip(futures, jobs)]
    else:
        logger.info(f"sweeping {len(jobs)} runs")
        results = [_run_job(job) for job in jobs]
    failed = sum(r.error is not None for r in results)
    if failed:
        logger.warning(f"{failed} of {len(results)} sweep runs failed")
    return results


def interval_distance(angle, interval):
    low, high = interval
    return float(max(low - angle, 0.0, angle - high))


@dataclass(frozen=True)
class FootComparison:
    foot: str
    best_tension: str
    angle: float
    distance: float
    hardware: Tuple[float, float]
    simulation: Tuple[float, float]
    passed: bool

    @property
    def inside(self):
        return self.distance == 0.0


@dataclass(frozen=True)
class TensionRanking:
    tension: str
    total_distance: float
    feet: int


@dataclass(frozen=True)
class ComparisonReport:
    feet: Tuple[FootComparison, ...]
    ranking: Tuple[TensionRanking, ...]
    tolerance: float

    @property
    def passed(self):
        return all(f.passed for f in self.feet)

    def foot(self, foot):
        letter = foot_letter(foot)
        return next(f for f in self.feet if f.foot == letter)


def compare_to_hardware(results, reference=HARDWARE_REFERENCE, tolerance=DEFAULT_TOLERANCE):
    """
    Score lift-off angles against the hardware ranges.

    Each foot gets the tension point whose angle lies closest to its hardware
    interval (distance 0 inside it); tension points are ranked by the summed
    distance over the feet they lifted.
    """
    lifted = [r for r in results if r.error is None and r.lifted_foot is not None]
    missing = [foot for foot in FEET if not any(r.lifted_foot == foot for r in lifted)]
    if missing:
        raise ExperimentError(f"no lift-off result for feet {', '.join(missing)}")

    feet = []
    for foot in FEET:
        interval = reference.interval(foot)
        scored = [
            (interval_distance(r.lift_off_angle, interval), i, r)
            for i, r in enumerate(lifted)
            if r.lifted_foot == foot
        ]
        distance, _, best = min(scored, key=lambda item: item[:2])
        feet.append(
            FootComparison(
                foot=foot,
                best_tension=best.tension_point.name,
                angle=best.lift_off_angle,
                distance=distance,
                hardware=tuple(interval),
                simulation=tuple(reference.simulation[foot]),
                passed=distance <= tolerance,
            )
        )

    totals = {}
    for r in lifted:
        name = r.tension_point.name
        distance, covered = totals.get(name, (0.0, set()))
        distance += interval_distance(r.lift_off_angle, reference.interval(r.lifted_foot))
        totals[name] = (distance, covered | {r.lifted_foot})
    order = list(dict.fromkeys(r.tension_point.name for r in lifted))
    ranking = sorted(
        (TensionRanking(name, totals[name][0], len(totals[name][1])) for name in order),
        key=lambda t: (-t.feet, t.total_distance, order.index(t.tension)),
    )
    return ComparisonReport(feet=tuple(feet), ranking=tuple(ranking), tolerance=tolerance)


@dataclass(frozen=True)
class FootSummary:
    foot: str
    runs: int
    min_angle: Optional[float]
    max_angle: Optional[float]


def foot_summaries(results):
    """Smallest and largest lift-off angle per foot over the successful runs."""
    summaries = {}
    for foot in FEET:
        angles = [r.lift_off_angle for r in results if r.error is None and r.lifted_foot == foot]
        summaries[foot] = FootSummary(
            foot=foot,
            runs=len(angles),
            min_angle=min(angles) if angles else None,
            max_angle=max(angles) if angles else None,
        )
    return summaries


@dataclass(frozen=True)
class ObstacleScenarioResult:
    foot: str
    obstacle: Obstacle
    run: FootLiftResult

    @property
    def margins(self):
        return self.run.trace.com_margin

    @property
    def min_margin(self):
        return float(np.min(self.margins)) if len(self.margins) else float("-inf")

    @property
    def supported_fraction(self):
        """Share of samples with the center of mass inside the support polygon."""
        return float(np.mean(self.margins > 0)) if len(self.margins) else 0.0


def run_obstacle_scenario(motion, tension_point, params=None, config=None, foot="A", half_size=0.04, **options):
    """
    Stand with one foot on a box of ``config.obstacle_height`` and run ``motion``
    to the end of its ramp, tracking the center of mass against the support polygon.
    """
    config = config or LaikaConfig()
    foot = foot_letter(foot)
    graph = build_laika(config)
    center = graph.node(f"foot{foot}").position[:2]
    obstacle = Obstacle(center=tuple(center), half_size=(half_size, half_size), height=config.obstacle_height)
    params = replace(params or SimParams(), obstacle=obstacle)
    logger.info(f"obstacle scenario: foot {foot} on a {obstacle.height * 100:.1f} cm box")
    options["full_trace"] = True
    options.setdefault("require_stance", False)
    run = run_foot_lift_test(motion, tension_point, params, config, graph=graph, **options)
    return ObstacleScenarioResult(foot, obstacle, run)
