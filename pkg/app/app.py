import argparse
import json
import logging
import os
import sys

# --- START FIX ---
# Get the absolute path to the directory containing app.py
current_app_dir = os.path.dirname(os.path.abspath(__file__))

# The project root is the parent of 'app'; putting it on sys.path lets
# `python app/app.py ...` resolve the `app` and `data` packages.
project_root_dir = os.path.dirname(current_app_dir)
if project_root_dir not in sys.path:
    sys.path.insert(0, project_root_dir)
# --- END FIX ---

from app.pages import annotate, augment, bench, evaluate, featurize, stream, sweep, synth, train  # noqa: E402
from app.pages.common import add_common_arguments  # noqa: E402
from app.util import util  # noqa: E402
from app.util.config import load_config, parse_overrides  # noqa: E402
from app.util.errors import PipelineError  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

COMMANDS = {
    'synth': synth,
    'annotate': annotate,
    'featurize': featurize,
    'augment': augment,
    'train': train,
    'eval': evaluate,
    'sweep': sweep,
    'bench': bench,
    'stream': stream,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='teethtap',
        description='Teeth-click detection pipeline. Unrecognized --key value pairs override config keys '
                    '(--section.key value for a single section).')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, page in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(page.__doc__ or '').strip().splitlines()[0])
        add_common_arguments(sub)
        page.add_arguments(sub)
    return parser


def _error_line(record: dict) -> None:
    sys.stderr.write(json.dumps(record, sort_keys=True, default=str) + "\n")


def run(command: str, args: list) -> int:
    """
    Dispatches one subcommand.

    Args:
        command (str): Subcommand name.
        args (list): Remaining command-line tokens.

    Returns:
        int: 0 on success, 1 on a pipeline failure (one JSON error line on stderr),
            2 on a usage error.
    """
    parser = build_parser()
    try:
        ns, extra = parser.parse_known_args([command, *args])
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    util.setup_logger(ns.verbosity)
    try:
        cfg = load_config(ns.config, parse_overrides(extra), ns.preset)
        COMMANDS[ns.command].run(ns, cfg)
    except PipelineError as e:
        logger.error("%s failed: %s", ns.command, e)
        _error_line(e.to_record())
        return EXIT_FAILURE
    except OSError as e:
        logger.error("%s failed: %s", ns.command, e)
        _error_line({'error': type(e).__name__, 'message': e.strerror or str(e), 'path': e.filename})
        return EXIT_FAILURE
    except ValueError as e:
        logger.error("%s failed: %s", ns.command, e)
        _error_line({'error': type(e).__name__, 'message': str(e), 'path': None})
        return EXIT_FAILURE
    return EXIT_OK


def main() -> None:
    if len(sys.argv) < 2:
        build_parser().print_help(sys.stderr)
        sys.exit(EXIT_USAGE)
    sys.exit(run(sys.argv[1], sys.argv[2:]))


if __name__ == '__main__':
    main()
