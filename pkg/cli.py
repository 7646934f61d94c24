import argparse
import importlib
import logging
import os
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

from shared import AVSEError, ENV_JOBS, ENV_LOG_FILE
from utils.command import Command, RunContext
from utils.config import load_config
from utils.runinfo import default_jobs
from utils.train import TrainingDiverged

load_dotenv()

COMMANDS_DIR = Path(__file__).parent / 'commands'
DEFAULT_LOG_FILE = 'avse.log'

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_INTERRUPT = 130


# ===== LOGGING CONFIGURATION =====
def setup_logging(log_file: Optional[str] = None, verbose: bool = False) -> logging.Logger:
    """Configure logging to a rotating file and the console. Safe to call again."""
    logger = logging.getLogger('avse')
    logger.setLevel(logging.DEBUG)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    file_formatter = logging.Formatter(
        '%(asctime)s | %(levelname)-8s | %(name)-20s | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    console_formatter = logging.Formatter(
        '%(asctime)s | %(levelname)-8s | %(message)s',
        datefmt='%H:%M:%S'
    )

    # File handler - rotating to manage size (5MB max, keep 3 backups)
    file_handler = RotatingFileHandler(
        log_file or os.getenv(ENV_LOG_FILE) or DEFAULT_LOG_FILE,
        maxBytes=5*1024*1024,
        backupCount=3,
        encoding='utf-8'
    )
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(file_formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(console_formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    logger.propagate = False
    return logger


logger = logging.getLogger('avse')


def _jobs_default() -> int:
    value = os.getenv(ENV_JOBS)
    return int(value) if value else default_jobs()


class AVSECli:
    """Argument parser plus the registry of loaded command modules."""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog='avse',
            description='Audio-visual speech enhancement: corpus, features, training, enhancement, evaluation.',
        )
        self.parser.add_argument('--config', help='key=value config file (default: $AVSE_CONFIG)')
        self.parser.add_argument('--seed', type=int, help='override the configured seed')
        self.parser.add_argument('--jobs', type=int, default=_jobs_default(), help='worker processes')
        self.parser.add_argument('--verbose', '-v', action='store_true', help='debug output on the console')
        self.parser.add_argument('--log-file', help=f'log file (default: ${ENV_LOG_FILE} or {DEFAULT_LOG_FILE})')
        self.subparsers = self.parser.add_subparsers(dest='command', metavar='COMMAND')
        self.subparsers.required = True
        self.commands: Dict[str, Command] = {}

    def add_command(self, command: Command):
        sub = self.subparsers.add_parser(command.name, help=command.help, description=command.help)
        command.add_arguments(sub)
        sub.set_defaults(handler=command)
        self.commands[command.name] = command

    def load_commands(self):
        for filename in sorted(os.listdir(COMMANDS_DIR)):
            if filename.endswith('.py') and not filename.startswith('_'):
                try:
                    module = importlib.import_module(f'commands.{filename[:-3]}')
                    module.setup(self)
                    logger.debug(f'Loaded command module: {filename[:-3]}')
                except Exception as e:
                    logger.error(f'Failed to load command module {filename[:-3]}: {type(e).__name__}: {e}')

    def run(self, argv: Optional[List[str]] = None) -> int:
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code in (0, None) else EXIT_USAGE

        setup_logging(args.log_file, args.verbose)
        try:
            ctx = RunContext(config=load_config(args.config), seed=args.seed, jobs=max(1, args.jobs))
            logger.info(f'CMD | {args.command} | {" ".join(argv if argv is not None else sys.argv[1:])}')
            started = datetime.now()
            args.handler.run(args, ctx)
            logger.info(f'CMD | {args.command} finished in {(datetime.now() - started).total_seconds():.1f}s')
            return EXIT_OK
        except TrainingDiverged as e:
            logger.error(f'CMD_ERR | {args.command} | {type(e).__name__}: {e}')
            return EXIT_DIVERGED
        except AVSEError as e:
            logger.error(f'CMD_ERR | {args.command} | {type(e).__name__}: {e}')
            return EXIT_ERROR
        except KeyboardInterrupt:
            logger.warning(f'CMD | {args.command} interrupted')
            return EXIT_INTERRUPT


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    cli = AVSECli()
    cli.load_commands()
    return cli.run(argv)


if __name__ == '__main__':
    sys.exit(main())
