#!/usr/bin/env python3
"""Write a synthetic paper corpus with peer reviews in the loader formats."""

from __future__ import annotations

import argparse
import sys

from fwgen.demo import synthetic_corpus, write_demo_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/demo", help="corpus directory")
    parser.add_argument("--count", type=int, default=20, help="number of papers")
    parser.add_argument("--seed", type=int, default=13, help="corpus seed")
    args = parser.parse_args()

    papers, reviews = synthetic_corpus(count=args.count, seed=args.seed)
    papers_dir, reviews_path = write_demo_corpus(args.out, papers, reviews)
    print(f"wrote {len(papers)} papers to {papers_dir}")
    print(f"wrote reviews to {reviews_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
