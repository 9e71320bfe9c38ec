#!/usr/bin/env python3
"""Where does the temporal stage look, and does changing it matter?

Prints how often each window position is selected (position 2k-1 is lag 1),
then the mean SAT AUC per group for a few model variants on the same corpus.

Usage:
  python scripts/selection_ablation.py --count 10
"""
import argparse
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from satgc import datagen, pipeline, sat

VARIANTS = {
    "default": {},
    "no positional encoding": {"use_positional_encoding": False},
    "raw scale (no standardize)": {"standardize": False},
    "straight-through": {"straight_through": True},
    "newest-first tokens": {"recent_first": True},
}


def selection_histogram(D: int, seeds: range, cfg: sat.SATConfig) -> np.ndarray:
    counts = np.zeros(cfg.window)
    for seed in seeds:
        data, _ = datagen.generate(datagen.GeneratorConfig(D=D, seed=seed))
        model = sat.SATModel(D, replace(cfg, seed=seed))
        for w in sat.make_windows(sat.standardize(data.values), cfg.k):
            counts[model.forward(w.input).selected] += 1
    return counts / counts.sum() * cfg.k


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--count", type=int, default=10, help="datasets per group")
    parser.add_argument("--groups", default="4,5,6,10")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    groups = [int(g) for g in args.groups.split(",")]

    print("selection frequency by window position (oldest ... newest):")
    for D in groups:
        hist = selection_histogram(D, range(5), sat.SATConfig())
        print(f"  D={D:<3}", " ".join(f"{v:.2f}" for v in hist))

    with tempfile.TemporaryDirectory() as tmp:
        corpus = Path(tmp)
        pipeline.generate_corpus(corpus, groups, args.count)
        print(f"\nmean AUC over {args.count} datasets per group")
        print(f"{'variant':<28}" + "".join(f"{'D=' + str(D):>8}" for D in groups))
        var_row = None
        for name, overrides in VARIANTS.items():
            report = pipeline.run_bench(corpus, sat.SATConfig(**overrides), jobs=args.jobs)
            means = pipeline.group_means(report)
            print(f"{'SAT ' + name:<28}" + "".join(f"{means[D]['sat']['auc']:8.3f}" for D in groups), flush=True)
            var_row = means
        print(f"{'VAR lag 20':<28}" + "".join(f"{var_row[D]['var']['auc']:8.3f}" for D in groups))


if __name__ == "__main__":
    main()
