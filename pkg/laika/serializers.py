"""
CSV traces and JSON reports.

Both formats are written deterministically: the same trace or report always
produces the same bytes.
"""
import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from . import settings
from .actuation import MotionSpec
from .exceptions import OutputError
from .experiments import FEET, FOOT_POSITIONS, HARDWARE_REFERENCE, FootLiftResult, FootLiftTrace, foot_summaries
from .model import TensionTestPoint

logger = logging.getLogger(__name__)


def trace_frame(trace):
    data = {"t_s": trace.time, "theta_rad": trace.theta}
    for i, foot in enumerate(FEET):
        data[f"foot{foot}_z_m"] = trace.foot_heights[:, i]
    for i, foot in enumerate(FEET):
        data[f"contact{foot}"] = trace.contacts[:, i].astype(int)
    return pd.DataFrame(data, columns=settings.TRACE_COLUMNS)


def write_trace(trace, path):
    """Write ``trace`` as CSV with nine significant digits and 0/1 contact flags."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        trace_frame(trace).to_csv(path, index=False, float_format=settings.TRACE_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise OutputError(f"cannot write trace {path}: {e}") from e
    logger.info(f"wrote trace {path} ({len(trace)} samples)")
    return path


def read_trace(path):
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise OutputError(f"cannot read trace {path}: {e}") from e
    if list(frame.columns) != settings.TRACE_COLUMNS:
        raise OutputError(f"{path} is not a foot-lift trace: columns {', '.join(frame.columns)}")
    theta = frame["theta_rad"].to_numpy(dtype=float)
    time = frame["t_s"].to_numpy(dtype=float)
    turning = np.flatnonzero(theta != 0)
    rotation_start = float(time[turning[0] - 1]) if turning.size and turning[0] > 0 else None
    return FootLiftTrace(
        time=time,
        theta=theta,
        foot_heights=frame[[f"foot{foot}_z_m" for foot in FEET]].to_numpy(dtype=float),
        contacts=frame[[f"contact{foot}" for foot in FEET]].to_numpy() != 0,
        rotation_start=rotation_start,
    )


def trace_filename(result):
    return f"trace-{result.motion.key}-{result.tension_point.name.lower()}.csv"


def _plain(value):
    """JSON-safe copy: numpy scalars to Python, tuples to lists, non-finite floats to ``None``."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def motion_entry(motion):
    return {
        "label": motion.label,
        "bendSide": motion.bend_side.value,
        "rotationDirection": motion.rotation_direction.value,
        "retractionFraction": motion.retraction_fraction,
        "rampDuration": motion.ramp_duration,
        "maxAngle": motion.max_angle,
        "bendDuration": motion.bend_duration,
    }


def tension_entry(point):
    return {"name": point.name, "silicone": point.silicone, "bunaN": point.buna_n}


def result_entry(result, trace_file=None):
    return {
        "motion": motion_entry(result.motion),
        "tension": tension_entry(result.tension_point),
        "liftedFoot": result.lifted_foot,
        "liftOffAngle": result.lift_off_angle,
        "tableFoot": result.expected_foot,
        "mirrorModelFoot": result.mirror_model_foot,
        "matchesExpected": result.matches_expected,
        "error": result.error,
        "trace": trace_file,
    }


def comparison_entry(comparison):
    return {
        "tolerance": comparison.tolerance,
        "passed": comparison.passed,
        "feet": {
            f.foot: {
                "bestTension": f.best_tension,
                "angle": f.angle,
                "distance": f.distance,
                "inside": f.inside,
                "passed": f.passed,
                "hardware": f.hardware,
                "simulation": f.simulation,
            }
            for f in comparison.feet
        },
    }


def build_report(config=None, results=(), comparison=None, reference=HARDWARE_REFERENCE, trace_files=None, extra=None):
    """
    Report document: effective configuration, one entry per run, per-foot
    lift-off summaries and the hardware reference, plus the comparison and
    tension ranking when ``comparison`` is given.
    """
    results = list(results)
    trace_files = list(trace_files) if trace_files is not None else [None] * len(results)
    summaries = foot_summaries(results)
    report = {
        "schema": settings.SCHEMA_VERSION,
        "config": config or {},
        "runs": [result_entry(r, f) for r, f in zip(results, trace_files)],
        "feet": {
            foot: {
                "position": FOOT_POSITIONS[foot],
                "runs": summaries[foot].runs,
                "minAngle": summaries[foot].min_angle,
                "maxAngle": summaries[foot].max_angle,
            }
            for foot in FEET
        },
        "hardware": {
            foot: {"hardware": reference.hardware[foot], "simulation": reference.simulation[foot]} for foot in FEET
        },
    }
    if comparison is not None:
        report["comparison"] = comparison_entry(comparison)
        report["ranking"] = [
            {"tension": t.tension, "totalDistance": t.total_distance, "feet": t.feet} for t in comparison.ranking
        ]
    if extra:
        report.update(extra)
    return _plain(report)


def dumps_report(report):
    return json.dumps(_plain(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_report(report), encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write report {path}: {e}") from e
    logger.info(f"wrote report {path}")
    return path


def read_report(path):
    path = Path(path)
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise OutputError(f"cannot read report {path}: {e}") from e
    if not isinstance(report, dict) or report.get("schema") != settings.SCHEMA_VERSION:
        raise OutputError(f"{path} is not a schema {settings.SCHEMA_VERSION} report")
    return report


def results_from_report(report):
    """Run results (without traces) recorded in a report."""
    results = []
    for entry in report.get("runs", []):
        motion = entry["motion"]
        tension = entry["tension"]
        results.append(
            FootLiftResult(
                motion=MotionSpec(
                    bend_side=motion["bendSide"],
                    rotation_direction=motion["rotationDirection"],
                    retraction_fraction=motion["retractionFraction"],
                    ramp_duration=motion["rampDuration"],
                    max_angle=motion["maxAngle"],
                    bend_duration=motion["bendDuration"],
                ),
                tension_point=TensionTestPoint(tension["name"], tension["silicone"], tension["bunaN"]),
                lifted_foot=entry["liftedFoot"],
                lift_off_angle=entry["liftOffAngle"],
                error=entry["error"],
            )
        )
    return results
