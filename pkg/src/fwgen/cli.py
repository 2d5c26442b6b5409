"""Command-line entry point for the future-work pipeline."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import GROUND_TRUTH_CHOICES, RunConfig, load_config
from .gateway import GatewayError
from .pipeline import cmd_evaluate, cmd_extract, cmd_generate, cmd_index, cmd_report

logger = logging.getLogger(__name__)

_MODE_ALIASES = {
    "top3": "top3_sections",
    "all": "all_sections",
    "top3_sections": "top3_sections",
    "all_sections": "all_sections",
}

_COMMANDS = {
    "extract": cmd_extract,
    "index": cmd_index,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}

_PIPELINE_ORDER = ("extract", "index", "generate", "evaluate", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fwgen",
        description="Extract, generate, and evaluate future-work suggestions for papers.",
    )
    parser.add_argument("command", choices=list(_COMMANDS) + ["run"],
                        help="pipeline stage to run ('run' executes all stages in order)")
    parser.add_argument("--config", help="YAML config file; flags below override its values")
    parser.add_argument("--ground-truth", choices=GROUND_TRUTH_CHOICES,
                        help="reference text: author future work, reviewer goals, or the merge")
    parser.add_argument("--mode", choices=sorted(_MODE_ALIASES),
                        help="prompt context: top3 (ranked sections) or all (every section)")
    parser.add_argument("--cassette", choices=("record", "replay", "passthrough"),
                        help="record/replay model responses, or call the provider directly")
    parser.add_argument("--cassette-path", help="cassette file for record/replay modes")
    parser.add_argument("--seed", type=int, help="corpus split seed")
    parser.add_argument("--max-refinements", type=int, choices=(0, 1, 2),
                        help="extra generation rounds after a failing judgment")
    parser.add_argument("--output-dir", help="run artifact directory")
    parser.add_argument("--papers-dir", help="directory of paper JSON files")
    parser.add_argument("--reviews-path", help="JSONL file of peer reviews")
    parser.add_argument("--workers", type=int, help="parallel papers during generation")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.ground_truth:
        config.ground_truth = args.ground_truth
    if args.mode:
        config.mode = _MODE_ALIASES[args.mode]
    if args.cassette:
        config.cassette_mode = args.cassette
    if args.cassette_path:
        config.cassette_path = args.cassette_path
    if args.seed is not None:
        config.seed = args.seed
    if args.max_refinements is not None:
        config.max_refinements = args.max_refinements
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.papers_dir:
        config.papers_dir = args.papers_dir
    if args.reviews_path:
        config.reviews_path = args.reviews_path
    if args.workers is not None:
        config.workers = args.workers
    config.validate()
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        commands = _PIPELINE_ORDER if args.command == "run" else (args.command,)
        for name in commands:
            logger.info("stage: %s", name)
            _COMMANDS[name](config)
    except (ValueError, FileNotFoundError, GatewayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
