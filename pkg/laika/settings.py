"""
Process-level settings, read from the environment.

Run-specific parameters live in the run configuration (see :mod:`laika.config`);
this module only holds what belongs to the machine running the experiments.
"""
import environ

env = environ.Env(
    LAIKA_LOG_LEVEL=(str, "INFO"),
    LAIKA_WORKERS=(int, 1),
    LAIKA_OUTPUT_DIR=(str, "laika-output"),
)

LOG_LEVEL = env("LAIKA_LOG_LEVEL")

# worker processes used by the calibration sweep
WORKERS = env("LAIKA_WORKERS")

OUTPUT_DIR = env("LAIKA_OUTPUT_DIR")

# REPORT AND TRACE FORMATS
# ------------------------------------------------------------------------------
SCHEMA_VERSION = 1
TRACE_FLOAT_FORMAT = "%.9g"
TRACE_COLUMNS = [
    "t_s",
    "theta_rad",
    "footA_z_m",
    "footB_z_m",
    "footC_z_m",
    "footD_z_m",
    "contactA",
    "contactB",
    "contactC",
    "contactD",
]
