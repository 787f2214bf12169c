"""
Command line: ``laika-spine run | sweep | compare | scenario-obstacle``.

Exit codes: 0 success, 1 run or I/O error, 2 configuration error.
"""
import argparse
import logging
import sys
from pathlib import Path

from . import __version__, settings
from .config import effective_config, load_config, load_config_file, with_overrides
from .exceptions import ConfigError, LaikaError
from .experiments import (
    HARDWARE_REFERENCE,
    calibration_sweep,
    compare_to_hardware,
    motion_from_text,
    run_foot_lift_test,
    run_obstacle_scenario,
)
from .serializers import (
    build_report,
    read_report,
    results_from_report,
    trace_filename,
    write_report,
    write_trace,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_ERROR = 1
EXIT_CONFIG_ERROR = 2

TENSION_CHOICES = ["low", "medlow", "mean", "medhigh", "high"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="laika-spine", description="Foot-lift experiments on the Laika tensegrity spine."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dt", type=float, help="time step in seconds")
    common.add_argument("--verbose", action="store_true", help="log debug messages")

    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="one motion at one tension point")
    run.add_argument("--motion", help="foot letter (A-D) or bend/direction pair, e.g. pullRight/CCW")
    run.add_argument("--tension", choices=TENSION_CHOICES)
    run.add_argument("--full-trace", action="store_true", help="continue the ramp after lift-off")
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", parents=[common], help="every motion at every tension point")
    sweep.add_argument("--workers", type=int, help="worker processes (default LAIKA_WORKERS)")
    sweep.add_argument("--full-trace", action="store_true")
    sweep.set_defaults(handler=cmd_sweep)

    compare = commands.add_parser("compare", parents=[common], help="sweep and compare against hardware")
    compare.add_argument("--workers", type=int)
    compare.add_argument("--report", help="reuse the runs of an existing sweep report")
    compare.set_defaults(handler=cmd_compare)

    scenario = commands.add_parser(
        "scenario-obstacle", parents=[common], help="stand with one foot on a box and run a motion"
    )
    scenario.add_argument("--motion")
    scenario.add_argument("--tension", choices=TENSION_CHOICES)
    scenario.add_argument("--foot", choices=["A", "B", "C", "D"], help="foot on the box")
    scenario.set_defaults(handler=cmd_scenario_obstacle)
    return parser


def configure_logging(verbose=False):
    level = logging.DEBUG if verbose else getattr(logging, str(settings.LOG_LEVEL).upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _run_config(args):
    config = load_config_file(args.config) if args.config else load_config("{}")
    motion = getattr(args, "motion", None)
    return with_overrides(
        config,
        dt=args.dt,
        tension=getattr(args, "tension", None),
        motion=motion_from_text(motion, config.motion) if motion else None,
        output_dir=args.out,
    )


def _output_dir(config):
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_traces(results, out):
    names = []
    for result in results:
        if result.trace is None:
            names.append(None)
            continue
        name = trace_filename(result)
        write_trace(result.trace, out / name)
        names.append(name)
    return names


def _sweep(args, config):
    return calibration_sweep(
        config.sim,
        config.laika,
        workers=args.workers,
        full_trace=getattr(args, "full_trace", False),
        **config.experiment.run_options(),
    )


def cmd_run(args, config):
    out = _output_dir(config)
    result = run_foot_lift_test(
        config.motion,
        config.tension,
        config.sim,
        config.laika,
        full_trace=args.full_trace,
        **config.experiment.run_options(),
    )
    names = _write_traces([result], out)
    write_report(build_report(effective_config(config), [result], trace_files=names), out / "report.json")
    return EXIT_OK


def cmd_sweep(args, config):
    out = _output_dir(config)
    results = _sweep(args, config)
    names = _write_traces(results, out)
    write_report(build_report(effective_config(config), results, trace_files=names), out / "report.json")
    return EXIT_RUN_ERROR if any(r.error for r in results) else EXIT_OK


def cmd_compare(args, config):
    out = _output_dir(config)
    if args.report:
        source = read_report(args.report)
        results = results_from_report(source)
        names = [run.get("trace") for run in source.get("runs", [])]
        echoed = source.get("config") or effective_config(config)
    else:
        results = _sweep(args, config)
        names = _write_traces(results, out)
        echoed = effective_config(config)
    comparison = compare_to_hardware(results, HARDWARE_REFERENCE, config.experiment.tolerance)
    for foot in comparison.feet:
        logger.info(
            f"foot {foot.foot}: best {foot.best_tension} at {foot.angle:.3f} rad, "
            f"{foot.distance:.3f} rad from hardware {'(pass)' if foot.passed else '(fail)'}"
        )
    report = build_report(echoed, results, comparison=comparison, trace_files=names)
    write_report(report, out / "comparison.json")
    return EXIT_RUN_ERROR if any(r.error for r in results) else EXIT_OK


def cmd_scenario_obstacle(args, config):
    out = _output_dir(config)
    foot = args.foot or config.experiment.obstacle_foot
    scenario = run_obstacle_scenario(
        config.motion,
        config.tension,
        config.sim,
        config.laika,
        foot=foot,
        half_size=config.experiment.obstacle_half_size,
        **config.experiment.run_options(),
    )
    names = _write_traces([scenario.run], out)
    obstacle = scenario.obstacle
    extra = {
        "scenario": {
            "foot": scenario.foot,
            "obstacle": {"center": obstacle.center, "halfSize": obstacle.half_size, "height": obstacle.height},
            "minMargin": scenario.min_margin,
            "supportedFraction": scenario.supported_fraction,
            "margins": scenario.margins,
        }
    }
    report = build_report(effective_config(config), [scenario.run], trace_files=names, extra=extra)
    write_report(report, out / "scenario-obstacle.json")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = _run_config(args)
        return args.handler(args, config)
    except ConfigError as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except (LaikaError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUN_ERROR


if __name__ == "__main__":
    sys.exit(main())
