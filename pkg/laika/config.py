"""
Run configuration.

The document is JSON with camelCase keys and SI units. Robot geometry sits at
the top level; simulation, motion and experiment parameters live in the ``sim``,
``motion`` and ``experiment`` sections. Every key is optional and unknown keys
are rejected.
"""
import json
import logging
from dataclasses import dataclass, field, fields, replace

from . import settings
from .actuation import BendSide, MotionSpec, RotationDirection
from .dynamics import SimParams
from .exceptions import ConfigError, config_key
from .model import LaikaConfig, TensionTestPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentOptions:
    """Lift-off detection, sampling and comparison settings."""

    sample_period: float = 0.05
    height_threshold: float = 0.002
    hold_window: float = 0.5
    hardware_bend: bool = False
    tolerance: float = 0.15
    obstacle_foot: str = "A"
    obstacle_half_size: float = 0.04

    def __post_init__(self):
        for name in ("sample_period", "height_threshold", "obstacle_half_size"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", key=f"experiment.{config_key(name)}")
        for name in ("hold_window", "tolerance"):
            if getattr(self, name) < 0:
                raise ConfigError("must not be negative", key=f"experiment.{config_key(name)}")
        if self.obstacle_foot not in ("A", "B", "C", "D"):
            raise ConfigError("must be one of A, B, C, D", key="experiment.obstacleFoot")

    def run_options(self):
        return {
            "sample_period": self.sample_period,
            "height_threshold": self.height_threshold,
            "hold_window": self.hold_window,
            "hardware_bend": self.hardware_bend,
        }


@dataclass(frozen=True)
class RunConfig:
    laika: LaikaConfig = field(default_factory=LaikaConfig)
    sim: SimParams = field(default_factory=SimParams)
    motion: MotionSpec = field(default_factory=MotionSpec)
    tension: TensionTestPoint = field(default_factory=lambda: TensionTestPoint.from_name("Mean"))
    experiment: ExperimentOptions = field(default_factory=ExperimentOptions)
    output_dir: str = settings.OUTPUT_DIR
    # reserved; every run is deterministic
    seed: int = 0


def _keys(cls, exclude=()):
    return {config_key(f.name): f.name for f in fields(cls) if f.name not in exclude}


LAIKA_KEYS = _keys(LaikaConfig)
SIM_KEYS = _keys(SimParams, exclude=("obstacle",))
MOTION_KEYS = _keys(MotionSpec)
EXPERIMENT_KEYS = _keys(ExperimentOptions)
SECTIONS = {"sim": SIM_KEYS, "motion": MOTION_KEYS, "experiment": EXPERIMENT_KEYS}
TOP_LEVEL_KEYS = set(LAIKA_KEYS) | set(SECTIONS) | {"tension", "outputDir", "seed"}


def _reject_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise ConfigError("duplicate key", key=key)
        seen[key] = value
    return seen


def _number(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {json.dumps(value)}", key=key)
    return float(value)


def _integer(value, key):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {json.dumps(value)}", key=key)
    return value


def _string(value, key):
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {json.dumps(value)}", key=key)
    return value


def _object(value, key):
    if not isinstance(value, dict):
        raise ConfigError("expected an object", key=key)
    return value


def _strict(document, known, prefix=""):
    for key in document:
        if key not in known:
            raise ConfigError("unknown key", key=f"{prefix}{key}")


def _laika_value(name, value, key):
    if name == "end_caps":
        caps = _object(value, key)
        result = {}
        for cap, offset in caps.items():
            if not isinstance(offset, list) or len(offset) != 3:
                raise ConfigError("expected a list of three numbers", key=f"{key}.{cap}")
            result[cap] = tuple(_number(v, f"{key}.{cap}") for v in offset)
        return result
    if name == "mass_fractions":
        return {part: _number(v, f"{key}.{part}") for part, v in _object(value, key).items()}
    if name == "materials":
        return {role: _string(v, f"{key}.{role}") for role, v in _object(value, key).items()}
    if name == "spool_vertebra":
        return {side: _integer(v, f"{key}.{side}") for side, v in _object(value, key).items()}
    if name == "saddle_wiring":
        if not isinstance(value, list) or not all(isinstance(p, list) and len(p) == 2 for p in value):
            raise ConfigError("expected a list of [rear, front] cap pairs", key=key)
        return tuple((_string(a, key), _string(b, key)) for a, b in value)
    return _number(value, key)


def _motion_value(name, value, key):
    if name == "bend_side":
        options = {side.value: side for side in BendSide}
        if value not in options:
            raise ConfigError(f"expected one of {', '.join(options)}", key=key)
        return options[value]
    if name == "rotation_direction":
        options = {d.value: d for d in RotationDirection}
        if value not in options:
            raise ConfigError(f"expected one of {', '.join(options)}", key=key)
        return options[value]
    return _number(value, key)


def _experiment_value(name, value, key):
    if name == "hardware_bend":
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", key=key)
        return value
    if name == "obstacle_foot":
        return _string(value, key)
    return _number(value, key)


def _tension(value):
    if isinstance(value, str):
        return TensionTestPoint.from_name(value)
    document = _object(value, "tension")
    _strict(document, {"name", "silicone", "bunaN"}, prefix="tension.")
    for key in ("silicone", "bunaN"):
        if key not in document:
            raise ConfigError("missing stiffness", key=f"tension.{key}")
    return TensionTestPoint(
        name=_string(document.get("name", "custom"), "tension.name"),
        silicone=_number(document["silicone"], "tension.silicone"),
        buna_n=_number(document["bunaN"], "tension.bunaN"),
    )


def _section(document, name, keys, convert):
    section = _object(document.get(name, {}), name)
    _strict(section, keys, prefix=f"{name}.")
    return {keys[key]: convert(keys[key], value, f"{name}.{key}") for key, value in section.items()}


def load_config(text):
    """
    Parse and validate a run configuration, filling every missing value with its default.

    Raises :class:`ConfigError` naming the offending key, or the line and column
    of malformed JSON.
    """
    try:
        document = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed configuration: {e.msg}", line=e.lineno, column=e.colno) from e
    document = _object(document, "<root>")
    _strict(document, TOP_LEVEL_KEYS)

    laika = {
        LAIKA_KEYS[key]: _laika_value(LAIKA_KEYS[key], value, key)
        for key, value in document.items()
        if key in LAIKA_KEYS
    }
    sim = _section(document, "sim", SIM_KEYS, lambda name, value, key: _number(value, key))
    motion = _section(document, "motion", MOTION_KEYS, _motion_value)
    experiment = _section(document, "experiment", EXPERIMENT_KEYS, _experiment_value)

    config = RunConfig(
        laika=LaikaConfig(**laika),
        sim=SimParams(**sim),
        motion=MotionSpec(**motion),
        tension=_tension(document["tension"]) if "tension" in document else RunConfig().tension,
        experiment=ExperimentOptions(**experiment),
        output_dir=_string(document.get("outputDir", settings.OUTPUT_DIR), "outputDir"),
        seed=_integer(document.get("seed", 0), "seed"),
    )
    logger.debug(f"loaded configuration: {sorted(document)} set, everything else default")
    return config


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    return load_config(text)


def _plain(value):
    if isinstance(value, (BendSide, RotationDirection)):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def _document(instance, keys):
    return {key: _plain(getattr(instance, name)) for key, name in keys.items()}


def effective_config(config):
    """The configuration document with every default filled in; loads back to an equal RunConfig."""
    document = _document(config.laika, LAIKA_KEYS)
    document.update(
        {
            "sim": _document(config.sim, SIM_KEYS),
            "motion": _document(config.motion, MOTION_KEYS),
            "experiment": _document(config.experiment, EXPERIMENT_KEYS),
            "tension": {
                "name": config.tension.name,
                "silicone": config.tension.silicone,
                "bunaN": config.tension.buna_n,
            },
            "outputDir": config.output_dir,
            "seed": config.seed,
        }
    )
    return document


def with_overrides(config, dt=None, tension=None, motion=None, output_dir=None):
    """Apply command-line overrides on top of a loaded configuration."""
    changes = {}
    if dt is not None:
        changes["sim"] = replace(config.sim, dt=dt)
    if tension is not None:
        changes["tension"] = TensionTestPoint.from_name(tension)
    if motion is not None:
        changes["motion"] = motion
    if output_dir is not None:
        changes["output_dir"] = output_dir
    return replace(config, **changes)
