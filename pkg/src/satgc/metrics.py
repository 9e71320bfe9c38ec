"""ROC / AUC / F1 scoring of causation matrices against a ground-truth graph."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateLabelsError(ValueError):
    pass


def _flatten(scores, truth, include_diagonal: bool) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    t = np.asarray(truth).astype(bool)
    if s.shape != t.shape:
        raise ValueError(f"scores {s.shape} and truth {t.shape} differ in shape")
    if s.ndim == 2 and not include_diagonal:
        keep = ~np.eye(s.shape[0], dtype=bool)
        return s[keep], t[keep]
    return s.ravel(), t.ravel()


def roc_curve(scores, truth, include_diagonal: bool = True) -> list[tuple[float, float, float]]:
    """(FPR, TPR, threshold) points, sweeping distinct scores from high to low.

    Starts at (0, 0, +inf) and ends at (1, 1, min score).
    """
    s, t = _flatten(scores, truth, include_diagonal)
    P, N = int(t.sum()), int((~t).sum())
    if P == 0 or N == 0:
        raise DegenerateLabelsError(f"need both labels, got {P} positives and {N} negatives")
    points = [(0.0, 0.0, float("inf"))]
    for thr in np.unique(s)[::-1]:
        pred = s >= thr
        points.append((float(np.sum(pred & ~t) / N), float(np.sum(pred & t) / P), float(thr)))
    if points[-1][:2] != (1.0, 1.0):
        points.append((1.0, 1.0, float(s.min())))
    return points


def auc(points) -> float:
    """Trapezoidal area under an ROC polyline."""
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def f1_at_threshold(scores, truth, threshold: float = 0.5, include_diagonal: bool = True) -> float:
    s, t = _flatten(scores, truth, include_diagonal)
    pred = s >= threshold
    tp = int(np.sum(pred & t))
    fp = int(np.sum(pred & ~t))
    fn = int(np.sum(~pred & t))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def best_f1(scores, truth, include_diagonal: bool = True) -> tuple[float, float]:
    """Highest F1 over all distinct score thresholds; returns (f1, threshold)."""
    s, _ = _flatten(scores, truth, include_diagonal)
    best = (0.0, float("inf"))
    for thr in np.unique(s)[::-1]:
        f = f1_at_threshold(scores, truth, float(thr), include_diagonal)
        if f > best[0]:
            best = (f, float(thr))
    return best


@dataclass
class DatasetMetrics:
    name: str
    auc: float
    f1: float
    best_f1: float
    best_threshold: float
    roc: list[tuple[float, float, float]]
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "auc": self.auc,
            "f1": self.f1,
            "best_f1": self.best_f1,
            "best_threshold": self.best_threshold,
            "roc": [list(p) for p in self.roc],
        }


def evaluate(name: str, scores, truth, threshold: float = 0.5, include_diagonal: bool = True,
             seed: int | None = None) -> DatasetMetrics:
    roc = roc_curve(scores, truth, include_diagonal)
    bf, bt = best_f1(scores, truth, include_diagonal)
    return DatasetMetrics(name, auc(roc), f1_at_threshold(scores, truth, threshold, include_diagonal),
                          bf, bt, roc, seed)


@dataclass
class MetricsReport:
    group: str
    datasets: list[DatasetMetrics]
    threshold: float = 0.5
    include_diagonal: bool = True
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def mean_auc(self) -> float:
        return _mean([d.auc for d in self.datasets])

    @property
    def mean_f1(self) -> float:
        return _mean([d.f1 for d in self.datasets])

    @property
    def mean_best_f1(self) -> float:
        return _mean([d.best_f1 for d in self.datasets])

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "n": len(self.datasets),
            "mean_auc": self.mean_auc,
            "mean_f1": self.mean_f1,
            "mean_best_f1": self.mean_best_f1,
            "threshold": self.threshold,
            "include_diagonal": self.include_diagonal,
            "failures": dict(sorted(self.failures.items())),
            "datasets": [d.to_dict() for d in self.datasets],
        }


def _mean(xs: list[float]) -> float:
    return float(sum(xs) / len(xs)) if xs else float("nan")


def aggregate(group: str, reports: list[DatasetMetrics], threshold: float = 0.5,
              include_diagonal: bool = True) -> MetricsReport:
    if not reports:
        raise ValueError("aggregate needs at least one dataset report")
    return MetricsReport(group, list(reports), threshold, include_diagonal)


def pooled_roc(reports: list[DatasetMetrics]) -> list[tuple[float, float]]:
    """Vertical average of per-dataset ROC curves on a fixed FPR grid."""
    grid = np.linspace(0.0, 1.0, 101)
    tprs = []
    for r in reports:
        fpr = np.array([p[0] for p in r.roc])
        tpr = np.array([p[1] for p in r.roc])
        # right-continuous step lookup: best TPR reachable at each FPR
        tprs.append(np.array([tpr[fpr <= g].max() for g in grid]))
    mean = np.mean(tprs, axis=0)
    return list(zip(grid.tolist(), mean.tolist()))


def roc_to_csv(points) -> str:
    lines = ["fpr,tpr,threshold"]
    for p in points:
        thr = p[2] if len(p) > 2 else float("nan")
        lines.append(f"{p[0]!r},{p[1]!r},{thr!r}")
    return "\n".join(lines) + "\n"
