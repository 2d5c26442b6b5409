#!/usr/bin/env python3
"""End-to-end demo on a synthetic corpus with the offline provider.

Synthesizes papers and reviews, writes a run config, executes every
pipeline stage, and prints the final report summary. No network access
or credentials are needed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from fwgen import cli
from fwgen.demo import synthetic_corpus, write_demo_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="runs/demo", help="corpus and artifact directory")
    parser.add_argument("--count", type=int, default=12, help="number of synthetic papers")
    parser.add_argument("--seed", type=int, default=13, help="corpus and split seed")
    parser.add_argument("--mode", default="top3", choices=("top3", "all"),
                        help="prompt context: ranked top sections or every section")
    args = parser.parse_args()

    workdir = Path(args.workdir)
    papers, reviews = synthetic_corpus(count=args.count, seed=args.seed)
    papers_dir, reviews_path = write_demo_corpus(workdir / "corpus", papers, reviews)
    out_dir = workdir / "artifacts"

    config = {
        "papers_dir": str(papers_dir),
        "reviews_path": str(reviews_path),
        "output_dir": str(out_dir),
        "seed": args.seed,
        "index_size": max(2, args.count // 3),
        "chunk_size": 128,
        "retrieval_k": 3,
        "mode": "top3_sections" if args.mode == "top3" else "all_sections",
        "max_refinements": 1,
        "provider": "offline",
    }
    config_path = workdir / "config.yaml"
    config_path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")

    status = cli.main(["run", "--config", str(config_path)])
    if status != 0:
        return status

    summary = json.loads((out_dir / "report_summary.json").read_text(encoding="utf-8"))
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"\nfull tables: {out_dir}/report_*.tsv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
