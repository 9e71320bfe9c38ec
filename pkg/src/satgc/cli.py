"""Command-line entry point: ``satgc {generate,analyze,baseline,bench,roc-export}``.

Exit codes: 0 success, 2 bad configuration, 3 bad or missing data,
4 numeric divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, datagen, granger, metrics, pipeline, sat

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

OUTPUT_ENV = "SATGC_OUTPUT_DIR"

log = logging.getLogger("satgc")


class ConfigError(ValueError):
    pass


def _default_out() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace("D=", "").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _sat_config(args) -> sat.SATConfig:
    return sat.SATConfig(
        k=args.k, d_k1=args.d_k1, d_k2=args.d_k2, epochs=args.epochs, lr=args.lr, seed=args.seed,
        use_positional_encoding=not args.no_positional_encoding, straight_through=args.straight_through,
        standardize=not args.no_standardize, recent_first=args.recent_first,
    )


def _manifest(command: str, args, **extra) -> dict:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    return {"command": command, "version": __version__, "args": resolved, **extra}


def _load_dataset(path: Path) -> datagen.TimeSeriesDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no dataset at {path}")
    return datagen.load_dataset(path)


def cmd_generate(args) -> int:
    out = args.out or _default_out()
    overrides = dict(T=args.t, max_lag=args.max_lag, edge_prob=args.edge_prob, noise_std=args.noise_std,
                     min_abs_weight=args.min_abs_weight, weight_range=(-args.max_weight, args.max_weight),
                     autocorr=not args.no_autocorr)
    if args.group:
        paths = pipeline.generate_corpus(out, args.group, args.count, args.seed, **overrides)
        pipeline.dump_json(_manifest("generate", args, datasets=[str(p.relative_to(out)) for p in paths]),
                           Path(out) / "manifest.json")
        print(f"wrote {len(paths)} datasets under {out}")
    else:
        cfg = datagen.GeneratorConfig(D=args.d, seed=args.seed, **overrides)
        data, graph = datagen.generate(cfg)
        datagen.save(data, graph, cfg, out)
        pipeline.dump_json(_manifest("generate", args, generator=cfg.to_dict()), Path(out) / "manifest.json")
        print(f"wrote {out}/data.csv and {out}/graph.json")
    return EXIT_OK


def cmd_analyze(args) -> int:
    data = _load_dataset(args.dataset)
    cfg = _sat_config(args)
    cm, model = pipeline.analyze(data, cfg)
    out = args.out or _default_out() / "sat.json"
    pipeline.dump_json(cm.to_dict(), out)
    pipeline.dump_json(_manifest("analyze", args, sat_config=asdict(cfg)), Path(out).with_suffix(".manifest.json"))
    if args.checkpoint:
        Path(args.checkpoint).parent.mkdir(parents=True, exist_ok=True)
        Path(args.checkpoint).write_text(model.to_json())
    print(np.array2string(cm.scores, precision=3, suppress_small=True))
    return EXIT_OK


def cmd_baseline(args) -> int:
    data = _load_dataset(args.dataset)
    cm = pipeline.baseline(data, args.lag, args.ridge)
    out = args.out or _default_out() / "var.json"
    pipeline.dump_json(cm.to_dict(), out)
    pipeline.dump_json(_manifest("baseline", args), Path(out).with_suffix(".manifest.json"))
    print(np.array2string(cm.scores, precision=3, suppress_small=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _sat_config(args)
    report = pipeline.run_bench(args.corpus, cfg, args.lag, args.ridge, args.threshold,
                                not args.exclude_diagonal, args.jobs)
    out = args.out or _default_out() / "bench"
    pipeline.write_bench(report, out)
    pipeline.dump_json(_manifest("bench", args, sat_config=asdict(cfg)), Path(out) / "manifest.json")
    print(pipeline.format_table(report), end="")
    return EXIT_OK


def cmd_roc_export(args) -> int:
    cm = granger.CausationMatrix.from_json(Path(args.matrix).read_text())
    graph, _ = datagen.load_graph(args.graph)
    pts = metrics.roc_curve(cm.scores, graph.adjacency, not args.exclude_diagonal)
    text = metrics.roc_to_csv(pts)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_sat_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("SAT model")
    g.add_argument("--k", type=int, default=10, help="lag budget; window is 2k (default 10)")
    g.add_argument("--d-k1", type=int, default=32)
    g.add_argument("--d-k2", type=int, default=32)
    g.add_argument("--epochs", type=int, default=50)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--seed", type=int, default=0, help="model initialisation seed")
    g.add_argument("--no-positional-encoding", action="store_true")
    g.add_argument("--straight-through", action="store_true",
                   help="let gradients reach the temporal projections through the selection")
    g.add_argument("--no-standardize", action="store_true")
    g.add_argument("--recent-first", action="store_true", help="newest-first token order in the temporal stage")


def _add_var_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lag", type=int, default=20)
    p.add_argument("--ridge", type=float, default=1e-3)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satgc", description="Sparse-attention Granger causal discovery")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesise datasets with known causal graphs")
    p.add_argument("--d", type=int, default=4, help="number of variables")
    p.add_argument("--t", type=int, default=150)
    p.add_argument("--max-lag", type=int, default=10)
    p.add_argument("--edge-prob", type=float, default=0.3)
    p.add_argument("--max-weight", type=float, default=0.8)
    p.add_argument("--min-abs-weight", type=float, default=0.2)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--no-autocorr", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", type=_int_list, default=None, help="e.g. 4,5,6,10 for a corpus")
    p.add_argument("--count", type=int, default=20, help="datasets per group")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="SAT causation matrix for one dataset")
    p.add_argument("dataset", type=Path, help="data.csv or a directory holding it")
    _add_sat_flags(p)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("baseline", help="VAR Granger causation matrix for one dataset")
    p.add_argument("dataset", type=Path)
    _add_var_flags(p)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("bench", help="both methods over a generated corpus")
    p.add_argument("corpus", type=Path)
    _add_sat_flags(p)
    _add_var_flags(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--exclude-diagonal", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("roc-export", help="ROC points of a causation matrix as CSV")
    p.add_argument("matrix", type=Path)
    p.add_argument("graph", type=Path)
    p.add_argument("--exclude-diagonal", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_roc_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (sat.TrainingDivergedError, FloatingPointError, datagen.InstabilityError, datagen.GenerationError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, datagen.DataFormatError, metrics.DegenerateLabelsError,
            sat.InsufficientDataError, json.JSONDecodeError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
