class LaikaError(Exception):
    """Base class for every error raised by laika-spine."""


class ConfigError(LaikaError, ValueError):
    """Invalid or unparseable run configuration, or an out-of-range parameter."""

    def __init__(self, message, key=None, line=None, column=None):
        self.key = key
        self.line = line
        self.column = column
        context = []
        if key is not None:
            context.append(f"key '{key}'")
        if line is not None:
            context.append(f"line {line}, column {column}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class StructureError(LaikaError):
    """A structure graph or builder contract was violated."""


class DegenerateCableError(StructureError):
    """Cable endpoints coincide, so the cable has no direction."""


class SimulationError(LaikaError):
    pass


class DivergenceError(SimulationError):
    """Non-finite values or runaway velocities in the simulation state."""


class SettleTimeout(SimulationError):
    """The structure did not come to rest before the time limit."""


class ActuationError(LaikaError):
    pass


class ExperimentError(LaikaError):
    pass


class OutputError(LaikaError):
    """A trace or report could not be written or read."""


_KEY_OVERRIDES = {"total_mass": "totalMassKg"}


def config_key(name):
    """Configuration document key for a snake_case parameter name."""
    if name in _KEY_OVERRIDES:
        return _KEY_OVERRIDES[name]
    head, *rest = name.split("_")
    return head + "".join(part.title() for part in rest)
