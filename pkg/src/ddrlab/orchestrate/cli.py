"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 missing/stale artifacts, 4 numerical
failure. DDR_OUT sets the default output root.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import __version__
from ..autonet.training import NonFiniteLossError
from .config import ConfigError, ExperimentConfig
from .runner import STAGES, ArtifactError, list_recipes, recipe_path, run


def _resolve_config(token: str) -> Path:
    path = Path(token)
    if path.exists():
        return path
    if "/" not in token and "\\" not in token:
        return recipe_path(token)
    raise ConfigError(f"config file {token} does not exist")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ddrlab",
        description="Train toy SR networks and measure degradation clustering in their features.",
    )
    parser.add_argument(
        "--config",
        required=False,
        help="config file path, or the bare name of a shipped recipe",
    )
    parser.add_argument("--stage", default="all", choices=list(STAGES) + ["all"])
    parser.add_argument("--out", default=None, help="output root (default: $DDR_OUT or ./out)")
    parser.add_argument("--seed-override", type=int, default=None, metavar="N",
                        help="shift every configured seed by N")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--list-recipes", action="store_true", help="list shipped recipes and exit")
    parser.add_argument("--version", action="version", version=f"ddrlab {__version__}")
    args = parser.parse_args(argv)

    if args.list_recipes:
        for name in list_recipes():
            print(name)
        return 0
    if not args.config:
        parser.error("--config is required (or use --list-recipes)")

    try:
        cfg = ExperimentConfig.from_file(_resolve_config(args.config))
        manifest = run(
            cfg,
            stage=args.stage,
            out_root=args.out,
            seed_override=args.seed_override,
            threads=args.threads,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 3
    except (NonFiniteLossError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4

    ran = ", ".join(manifest.executed) if manifest.executed else "nothing (all stages current)"
    print(f"config {manifest.config_hash}: executed {ran}")
    print(f"artifacts: {len(manifest.all_artifacts())}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
