import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from flows.commands import COMMANDS
from flows.run_config import load_config
from knowledge.artifact_store import ArtifactStore
from tools.errors import Bands2DError, ConfigError

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

# =============================================================================
# ARGUMENTS
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bands2d",
        description="Band structures of 2D periodic Hartree systems: atom, kernel, plane waves, SCF and tight binding",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="what to compute")
    parser.add_argument("--config", default=None, help="YAML or JSON run config (defaults when omitted)")
    parser.add_argument("--out", default=None, help="output directory (env BANDS2D_OUT, default runs/<command>)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for k-point sweeps (env BANDS2D_THREADS)")
    parser.add_argument("--log-level", default=None, help="logging level (env BANDS2D_LOG_LEVEL, default INFO)")
    return parser


def _threads(flag: Optional[int], configured: Optional[int]) -> int:
    if flag is not None:
        return max(flag, 1)
    env = os.getenv("BANDS2D_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigError(f"BANDS2D_THREADS must be an integer, got {env!r}")
    return configured or 1


# =============================================================================
# ENTRY POINT
# =============================================================================


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.getenv("BANDS2D_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO))

    try:
        config = load_config(args.config, args.command)
        threads = _threads(args.threads, config.threads)
        out_dir = args.out or os.getenv("BANDS2D_OUT") or config.out or os.path.join("runs", args.command)
        store = ArtifactStore(out_dir, config.model_dump(mode="json"), args.command)
        logger.info(f"🚀 Running {args.command} into {out_dir} with {threads} thread(s)")
        COMMANDS[args.command](config, store, threads)
        store.write_manifest()
    except (ConfigError, ValidationError) as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return EXIT_CONFIG
    except Bands2DError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return EXIT_SOLVER

    logger.info(f"✅ {args.command} finished")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
