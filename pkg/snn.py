"""
Command-line entry point for the spiking-network toolkit.

    python3 snn.py [--config run.json] [--set key=value ...] <command> [options]

Commands are discovered from ./commands: every module there exposes
setup(subparsers) and registers a handler(args, config) -> exit code.

Exit codes: 0 success, 1 validation error (bad config, shapes, files), 2 runtime error.
"""
import argparse
import importlib
import os
import sys
from os import listdir

from dotenv import load_dotenv

from core.config import Config
from core.error_handler import EXIT_RUNTIME, EXIT_VALIDATION, handle_command_error
from utils.experiment import DEFAULT_CONFIG

# Logging setup
import logging
from logging.handlers import RotatingFileHandler

load_dotenv()


def log_level(name) -> int:
    """Numeric level for a name such as 'debug'; unknown names fall back to INFO."""
    level = logging.getLevelName(str(name or 'INFO').strip().upper())
    return level if isinstance(level, int) else logging.INFO


# Ensure logs directory exists
os.makedirs('logs', exist_ok=True)
LOG_LEVEL = os.getenv('SNN_LOG_LEVEL', 'INFO')
logging.basicConfig(level=log_level(LOG_LEVEL),
    format='%(asctime)s %(levelname)s:%(name)s: %(message)s',
    handlers=[
        RotatingFileHandler('logs/snn.log', maxBytes=5*1024*1024, backupCount=5),
        logging.StreamHandler()
    ])
logger = logging.getLogger(__name__)
if not isinstance(logging.getLevelName(LOG_LEVEL.strip().upper()), int):
    logger.warning(f"Unknown SNN_LOG_LEVEL {LOG_LEVEL!r}, using INFO")


def load_commands(subparsers, directory: str = None):
    """Import every module in ./commands and let it register its subparser."""
    directory = directory or os.path.join(os.path.dirname(os.path.abspath(__file__)), "commands")
    failed_commands = []

    for filename in sorted(listdir(directory)):
        # Skip non-python & dunder/hidden modules like __init__.py
        if not filename.endswith('.py') or filename.startswith('_'):
            continue

        module_name = f"commands.{filename[:-3]}"
        try:
            module = importlib.import_module(module_name)
            module.setup(subparsers)
            logger.debug(f"Loaded {module_name}")
        except Exception as e:
            logger.error(f"Failed to load {module_name}: {e}", exc_info=True)
            failed_commands.append({
                'name': module_name,
                'error': str(e),
                'type': type(e).__name__
            })

    return failed_commands


def build_parser():
    parser = argparse.ArgumentParser(prog="snn", description="Discrete-time spiking network training toolkit")
    parser.add_argument("--config", help="JSON configuration document (merged over the defaults)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a configuration key, e.g. --set train.learning_rate=0.0001")
    subparsers = parser.add_subparsers(dest="command")
    failed = load_commands(subparsers)
    return parser, failed


def main(argv=None) -> int:
    parser, failed = build_parser()
    args = parser.parse_args(argv)
    if failed:
        logger.warning(f"{len(failed)} command module(s) failed to load: "
                       + ", ".join(f"{f['name']} ({f['type']})" for f in failed))
    if not getattr(args, "handler", None):
        parser.print_help()
        return EXIT_VALIDATION

    try:
        config = Config.load(args.config, defaults=DEFAULT_CONFIG) if args.config else Config(defaults=DEFAULT_CONFIG)
        config.apply_overrides(args.set)
        logger.info(f"Command {args.command} started (config={args.config or 'defaults'}, overrides={args.set})")
        code = args.handler(args, config)
        logger.info(f"Command {args.command} completed")
        return code
    except KeyboardInterrupt:
        logger.warning(f"Command {args.command} interrupted")
        return EXIT_RUNTIME
    except Exception as e:
        return handle_command_error(logger, args.command, e)


if __name__ == "__main__":
    sys.exit(main())
