"""Main entry point for the LQ game inverse solver."""

import argparse
import logging
import sys
from typing import List, Optional

from lq_inverse.exceptions import LQGameError
from lq_inverse.session import MODES, load_session, run_session, validate_session
from lq_inverse.utils import configure, get_config, resolve_output_dir, save_json

logger = logging.getLogger("lq_inverse")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lq-inverse",
                                     description="Forward and inverse solvers for linear-quadratic N-player games",
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("mode", choices=MODES, help="What to run")
    parser.add_argument("--config", "-c", type=str, required=True, help="Session file (JSON)")
    parser.add_argument("--out", "-o", type=str,
                        help="Output directory (overrides LQ_INVERSE_OUTPUT_DIR and output.dir in the session file)")
    parser.add_argument("--seed", type=int, help="Seed for probing noise (overrides the session file)")
    parser.add_argument("--validate-only", action="store_true",
                        help="Validate the session file and exit without computing anything")

    # Add logging level option
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--verbose", action="store_true", help="Show progress bars for long iterations")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    log_level = logging.DEBUG if args.debug else logging.INFO
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    out_dir = None
    config = None
    error = None
    try:
        config = load_session(args.config, mode=args.mode, seed=args.seed)
        validate_session(config)
    except LQGameError as e:
        error = e
    if config is not None:
        out_dir = resolve_output_dir(args.out, config.output.dir)
    else:
        out_dir = resolve_output_dir(args.out)
    if not args.validate_only:
        out_dir.mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(out_dir / get_config().log_file))
    logging.basicConfig(level=log_level,
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                        handlers=handlers)
    # Set the level for the named logger too
    logger.setLevel(log_level)
    configure(output_dir=out_dir, progress=args.verbose)

    if error is not None:
        logger.error(f"Configuration error [{error.code}]: {error.message}")
        if not args.validate_only:
            save_json({"mode": args.mode, "error": error.to_dict()}, out_dir / "error.json")
        return error.exit_code
    if args.validate_only:
        logger.info(f"{args.config} is a valid {config.mode} session")
        return 0

    code = run_session(config)
    logger.info(f"{config.mode} finished with exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
