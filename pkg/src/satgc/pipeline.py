"""End-to-end runs: corpus generation, per-dataset analysis, benchmark table."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import datagen, granger, metrics, sat
from .datagen import GeneratorConfig

log = logging.getLogger(__name__)

PAPER_GROUPS = (4, 5, 6, 10)


def dump_json(obj, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def corpus_seed(base: int, D: int, index: int) -> int:
    return base + 1000 * D + index


def generate_corpus(outdir: Path, groups=PAPER_GROUPS, count: int = 20, base_seed: int = 0,
                    **overrides) -> list[Path]:
    """Write ``count`` datasets per group under ``outdir/D{d}/ds{i:02d}``."""
    outdir = Path(outdir)
    written = []
    for D in groups:
        for i in range(count):
            cfg = GeneratorConfig(D=D, seed=corpus_seed(base_seed, D, i), **overrides)
            data, graph = datagen.generate(cfg)
            path = outdir / f"D{D}" / f"ds{i:02d}"
            datagen.save(data, graph, cfg, path)
            written.append(path)
    return written


def analyze(data, config: sat.SATConfig) -> tuple[granger.CausationMatrix, sat.SATModel]:
    run = sat.fit_and_probe(data, config)
    cm = granger.causation_from_predictions(run.unrestricted, run.restricted, run.targets,
                                            method="sat", config=asdict(config))
    return cm, run.model


def baseline(data, lag: int = 20, ridge: float = 1e-3) -> granger.CausationMatrix:
    return granger.var_granger_matrix(data, lag=lag, ridge=ridge)


def find_datasets(corpus: Path) -> list[Path]:
    return sorted(p.parent for p in Path(corpus).rglob("graph.json"))


def _bench_one(args) -> dict:
    path, corpus, sat_cfg, lag, ridge, threshold, include_diagonal = args
    name = str(Path(path).relative_to(corpus))
    out = {"name": name}
    try:
        data = datagen.load_dataset(path)
        graph, gcfg = datagen.load_graph(path)
    except (OSError, datagen.DataFormatError) as exc:
        out["error"] = f"load: {exc}"
        return out
    out["D"] = graph.D
    out["seed"] = gcfg.seed
    for method in ("sat", "var"):
        try:
            if method == "sat":
                cm, _ = analyze(data, sat_cfg)
            else:
                cm = baseline(data, lag, ridge)
            m = metrics.evaluate(name, cm.scores, graph.adjacency, threshold, include_diagonal, gcfg.seed)
            out[method] = m.to_dict()
            out[method]["scores"] = cm.scores.tolist()
        except Exception as exc:  # recorded per dataset; the bench keeps going
            out[f"{method}_error"] = f"{type(exc).__name__}: {exc}"
    return out


def run_bench(corpus: Path, sat_cfg: sat.SATConfig | None = None, lag: int = 20, ridge: float = 1e-3,
              threshold: float = 0.5, include_diagonal: bool = True, jobs: int = 1) -> dict:
    corpus = Path(corpus)
    sat_cfg = sat_cfg or sat.SATConfig()
    paths = find_datasets(corpus)
    if not paths:
        raise FileNotFoundError(f"no datasets (graph.json) found under {corpus}")
    tasks = [(p, corpus, sat_cfg, lag, ridge, threshold, include_diagonal) for p in paths]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_bench_one, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_bench_one(t))
            log.info("done %s", results[-1]["name"])

    groups: dict[str, dict] = {}
    for D in sorted({r["D"] for r in results if "D" in r}):
        rows = [r for r in results if r.get("D") == D]
        entry = {}
        for method in ("sat", "var"):
            ok = [r[method] for r in rows if method in r]
            failures = {r["name"]: r.get(f"{method}_error", r.get("error", "")) for r in rows if method not in r}
            ds = [metrics.DatasetMetrics(d["name"], d["auc"], d["f1"], d["best_f1"], d["best_threshold"],
                                         [tuple(p) for p in d["roc"]], d["seed"]) for d in ok]
            if ds:
                rep = metrics.aggregate(f"D={D}", ds, threshold, include_diagonal)
            else:
                rep = metrics.MetricsReport(f"D={D}", [], threshold, include_diagonal)
            rep.failures = failures
            summary = rep.to_dict()
            summary["pooled_roc"] = metrics.pooled_roc(ds) if ds else []
            entry[method] = summary
        groups[str(D)] = entry
    return {
        "corpus": str(corpus),
        "sat_config": asdict(sat_cfg),
        "var": {"lag": lag, "ridge": ridge},
        "threshold": threshold,
        "include_diagonal": include_diagonal,
        "groups": groups,
        "load_errors": {r["name"]: r["error"] for r in results if "error" in r},
    }


def format_table(report: dict) -> str:
    """Text table laid out like the paper's comparison table."""
    head = f"{'No. of variables':>16} | {'SAT AUC':>8} {'SAT F1':>7} {'SAT F1*':>8} | " \
           f"{'VAR AUC':>8} {'VAR F1':>7} {'VAR F1*':>8} | {'n':>3}"
    lines = [head, "-" * len(head)]
    for D, g in sorted(report["groups"].items(), key=lambda kv: int(kv[0])):
        s, v = g["sat"], g["var"]
        lines.append(f"{D:>16} | {s['mean_auc']:8.3f} {s['mean_f1']:7.3f} {s['mean_best_f1']:8.3f} | "
                     f"{v['mean_auc']:8.3f} {v['mean_f1']:7.3f} {v['mean_best_f1']:8.3f} | {s['n']:>3}")
    lines.append(f"F1 at threshold {report['threshold']}; F1* = best F1 over thresholds; "
                 f"diagonal {'included' if report['include_diagonal'] else 'excluded'}")
    return "\n".join(lines) + "\n"


def write_bench(report: dict, outdir: Path) -> None:
    outdir = Path(outdir)
    dump_json(report, outdir / "report.json")
    (outdir / "table.txt").write_text(format_table(report))
    for D, g in report["groups"].items():
        for method in ("sat", "var"):
            pts = g[method]["pooled_roc"]
            (outdir / "roc").mkdir(parents=True, exist_ok=True)
            (outdir / "roc" / f"D{D}_{method}.csv").write_text(
                metrics.roc_to_csv([(f, t, float("nan")) for f, t in pts]))


def group_means(report: dict) -> dict[int, dict[str, dict[str, float]]]:
    return {int(D): {m: {"auc": g[m]["mean_auc"], "f1": g[m]["mean_f1"], "best_f1": g[m]["mean_best_f1"]}
                     for m in ("sat", "var")} for D, g in report["groups"].items()}


def single_edge_dataset(seed: int, D: int = 4, weight: float = 0.9, noise_std: float = 0.05,
                        T: int = 150, max_lag: int = 10):
    """A graph with exactly one edge i -> j (i != j), delay drawn uniformly in 1..max_lag."""
    rng = np.random.default_rng(seed)
    i, j = (int(v) for v in rng.choice(D, size=2, replace=False))
    delay = int(rng.integers(1, max_lag + 1))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    adjacency = np.zeros((D, D), dtype=np.int64)
    coeffs = np.zeros((D, D, max_lag))
    delays = np.zeros((D, D), dtype=np.int64)
    adjacency[i, j] = 1
    coeffs[i, j, delay - 1] = sign * weight
    delays[i, j] = delay
    graph = datagen.GroundTruthGraph(adjacency, coeffs, delays)
    cfg = GeneratorConfig(D=D, T=T, max_lag=max_lag, noise_std=noise_std, seed=seed, edge_prob=1.0 / (D * D))
    data = datagen.simulate(graph, cfg, np.random.default_rng(rng.integers(2**63)))
    return data, graph, (i, j)


def off_diagonal_rank(scores: np.ndarray, edge: tuple[int, int]) -> int:
    """1-based rank of ``scores[edge]`` among off-diagonal entries (ties count against it)."""
    s = np.asarray(scores)
    mask = ~np.eye(s.shape[0], dtype=bool)
    return int(np.sum(s[mask] >= s[edge]))
