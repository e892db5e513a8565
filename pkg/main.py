import argparse
import logging
import sys

from config import Config, get_config
from routes import counterexample, functional, lotka, simulation, studies
from routes.common import EXIT_CHECK_FAILED, EXIT_DIVERGENCE, EXIT_USAGE
from utils.errors import DivergenceError, EstimationFailedError, OracleError, SwitchSimError
from utils.run_config import load_run_config

logger = logging.getLogger(__name__)

# argparse destinations that are not [run] keys
_CONTROL_KEYS = ('command', 'handler', 'config', 'check', 'log_level', 'verbose')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='switchsim',
        description='Simulation and verification of switching diffusions with state-dependent switching')
    parser.add_argument('--version', action='version', version=f"%(prog)s {Config.VERSION}")
    parser.add_argument('--log-level', dest='log_level', help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('-v', '--verbose', action='store_true', help='shorthand for --log-level DEBUG')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    # Register subcommands
    for module in (simulation, studies, functional, counterexample, lotka):
        module.register(subparsers)
    return parser


def setup_logging(level: str = None):
    settings = get_config()
    level = (level or settings.LOG_LEVEL).upper()
    logging.basicConfig(format=settings.LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(getattr(logging, level, logging.INFO))


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help and --version exit 0, usage errors exit 2
        return int(e.code or 0)

    setup_logging('DEBUG' if args.verbose else args.log_level)
    overrides = {k: v for k, v in vars(args).items() if k not in _CONTROL_KEYS}

    try:
        cfg = load_run_config(args.command, args.config, overrides, check=args.check)
        logger.info(f"Running {args.command} (seed={cfg.seed}, threads={cfg.threads})")
        return args.handler(cfg)
    except (DivergenceError, EstimationFailedError) as e:
        where = f" (path {e.path_index})" if getattr(e, 'path_index', None) is not None else ''
        print(f"error: {e}{where}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OracleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (SwitchSimError, ValueError) as e:
        key = getattr(e, 'key', None)
        print(f"error: {e}" + (f" [key: {key}]" if key else ''), file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(run())
