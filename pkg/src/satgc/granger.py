"""Granger causality indices from restricted/unrestricted predictions, and a
ridge-regularised VAR baseline."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import TimeSeriesDataset

VAR_FLOOR = 1e-300


@dataclass
class ResidualStats:
    variances: np.ndarray  # (D,)
    n: int


@dataclass
class CausationMatrix:
    scores: np.ndarray  # (D, D) in [0, 1]; [i, j] scores i -> j
    raw_cgci: np.ndarray
    method: str = "sat"
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "scores": self.scores.tolist(),
            "raw_cgci": self.raw_cgci.tolist(),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CausationMatrix":
        doc = json.loads(text)
        return cls(np.array(doc["scores"], dtype=float), np.array(doc["raw_cgci"], dtype=float),
                   doc.get("method", "unknown"), doc.get("config", {}))


def residual_variances(predictions, targets) -> ResidualStats:
    """Mean squared residual per variable (residual mean is not removed)."""
    if len(predictions) == 0 or len(predictions) != len(targets):
        raise ValueError("need equal-length, non-empty prediction and target lists")
    p = np.stack([np.asarray(a, dtype=float).ravel() for a in predictions])
    t = np.stack([np.asarray(a, dtype=float).ravel() for a in targets])
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} differs from target shape {t.shape}")
    r = t - p
    return ResidualStats(np.mean(r * r, axis=0), p.shape[0])


def cgci(var_restricted: float, var_unrestricted: float) -> float:
    """ln(restricted / unrestricted residual variance)."""
    if var_unrestricted <= VAR_FLOOR:
        return math.log(var_restricted / VAR_FLOOR) if var_restricted > 0 else 0.0
    if var_restricted <= 0:
        # restricted fit is perfect while the unrestricted one is not
        return math.log(VAR_FLOOR / var_unrestricted)
    return math.log(var_restricted / var_unrestricted)


def normalize(raw: np.ndarray) -> np.ndarray:
    clamped = np.maximum(np.asarray(raw, dtype=float), 0.0)
    top = clamped.max() if clamped.size else 0.0
    if top > 0:
        return clamped / top
    return np.zeros_like(clamped)


def causation_from_stats(unrestricted: ResidualStats, restricted: list[ResidualStats],
                         method: str = "sat", config: dict | None = None) -> CausationMatrix:
    """Row l holds the indices obtained by masking variable l."""
    D = unrestricted.variances.size
    if len(restricted) != D:
        raise ValueError(f"need one restricted fit per variable ({D}), got {len(restricted)}")
    raw = np.array([[cgci(restricted[l].variances[m], unrestricted.variances[m]) for m in range(D)]
                    for l in range(D)])
    return CausationMatrix(normalize(raw), raw, method, dict(config or {}))


def causation_from_predictions(unrestricted, restricted, targets, method: str = "sat",
                               config: dict | None = None) -> CausationMatrix:
    """Same as :func:`causation_from_stats` but starting from raw prediction lists."""
    u = residual_variances(unrestricted, targets)
    r = [residual_variances(preds, targets) for preds in restricted]
    return causation_from_stats(u, r, method, config)


# --- VAR baseline ---------------------------------------------------------


@dataclass
class VARFit:
    coefs: np.ndarray  # (lag, D_eff, D): coefs[l, a, j] weights X^{cols[a]}_{t-l-1} for target j
    intercept: np.ndarray  # (D,)
    stats: ResidualStats
    columns: list[int]
    ridge: float
    warning: str | None = None


def lagged_design(values: np.ndarray, lag: int, columns: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Regressor rows [X_{t-1}, ..., X_{t-lag}] (restricted to ``columns``) for t >= lag."""
    T = values.shape[0]
    if T <= lag:
        raise ValueError(f"need T > lag, got T={T}, lag={lag}")
    blocks = [values[lag - l - 1:T - l - 1][:, columns] for l in range(lag)]
    return np.hstack(blocks), values[lag:]


def _ridge_solve(Z: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    # last column of Z is the unpenalised intercept
    G = Z.T @ Z
    pen = np.full(G.shape[0], lam)
    pen[-1] = 0.0
    G[np.diag_indices_from(G)] += pen
    if lam == 0.0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise np.linalg.LinAlgError("singular normal equations")
    return np.linalg.solve(G, Z.T @ Y)


def var_fit(data: TimeSeriesDataset | np.ndarray, lag: int, exclude: int | None = None,
            ridge: float = 1e-3) -> VARFit:
    values = data.values if isinstance(data, TimeSeriesDataset) else np.asarray(data, dtype=float)
    D = values.shape[1]
    if exclude is not None and not 0 <= exclude < D:
        raise ValueError(f"exclude={exclude} outside [0, {D})")
    columns = [c for c in range(D) if c != exclude]
    X, Y = lagged_design(values, lag, columns)
    Z = np.hstack([X, np.ones((X.shape[0], 1))])
    warning = None
    try:
        B = _ridge_solve(Z, Y, ridge)
    except np.linalg.LinAlgError:
        if ridge != 0.0:
            raise
        warning = "singular normal equations; retried with ridge 1e-6"
        ridge = 1e-6
        B = _ridge_solve(Z, Y, ridge)
    resid = Y - Z @ B
    stats = ResidualStats(np.mean(resid * resid, axis=0), Y.shape[0])
    coefs = B[:-1].reshape(lag, len(columns), D)
    return VARFit(coefs, B[-1], stats, columns, ridge, warning)


def var_granger_matrix(data: TimeSeriesDataset | np.ndarray, lag: int = 20, ridge: float = 1e-3) -> CausationMatrix:
    values = data.values if isinstance(data, TimeSeriesDataset) else np.asarray(data, dtype=float)
    D = values.shape[1]
    full = var_fit(values, lag, None, ridge)
    restricted = [var_fit(values, lag, i, ridge).stats for i in range(D)]
    return causation_from_stats(full.stats, restricted, "var", {"lag": lag, "ridge": ridge})
