#!/usr/bin/env python3
"""Regenerate the 80-dataset corpus and print the SAT vs VAR comparison table
next to the published numbers.

Usage:
  python scripts/reproduce_table.py --out runs/table --jobs 4
"""
import argparse
from pathlib import Path

from satgc import pipeline, sat

PUBLISHED = {  # D: (SAT AUC, SAT F1, VAR AUC, VAR F1)
    4: (0.77, 0.72, 0.47, 0.63),
    5: (0.71, 0.69, 0.49, 0.51),
    6: (0.70, 0.63, 0.67, 0.66),
    10: (0.78, 0.65, 0.63, 0.62),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, default=Path("runs/table"))
    parser.add_argument("--count", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0, help="corpus base seed")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    corpus = args.out / "corpus"
    if not corpus.exists():
        pipeline.generate_corpus(corpus, pipeline.PAPER_GROUPS, args.count, args.seed)
    report = pipeline.run_bench(corpus, sat.SATConfig(), jobs=args.jobs)
    pipeline.write_bench(report, args.out / "bench")
    print(pipeline.format_table(report))

    means = pipeline.group_means(report)
    print(f"{'D':>3} | {'SAT AUC':>15} {'SAT F1':>15} | {'VAR AUC':>15} {'VAR F1':>15}   (ours / published)")
    for D, pub in PUBLISHED.items():
        m = means[D]
        ours = (m["sat"]["auc"], m["sat"]["f1"], m["var"]["auc"], m["var"]["f1"])
        cells = [f"{o:.3f} / {p:.2f}" for o, p in zip(ours, pub)]
        print(f"{D:>3} | {cells[0]:>15} {cells[1]:>15} | {cells[2]:>15} {cells[3]:>15}")


if __name__ == "__main__":
    main()
