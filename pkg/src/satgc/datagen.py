"""Synthetic linear time series with randomly delayed causal links.

Each ordered pair of variables gets a link with some probability; a link
carries one uniformly drawn coefficient and one uniformly drawn delay. The
series is produced by iterating the resulting lagged linear recurrence with
Gaussian innovations.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

DIVERGENCE_LIMIT = 1e6
MAX_RESCALES = 50
RESCALE_FACTOR = 0.9


class InstabilityError(RuntimeError):
    pass


class GenerationError(RuntimeError):
    pass


class DataFormatError(ValueError):
    """Malformed or invalid dataset/graph file."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class GeneratorConfig:
    D: int = 4
    T: int = 150
    max_lag: int = 10
    edge_prob: float = 0.3
    weight_range: tuple[float, float] = (-0.8, 0.8)
    min_abs_weight: float = 0.2
    noise_std: float = 0.1
    autocorr: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weight_range", tuple(float(w) for w in self.weight_range))
        self.validate()

    def validate(self) -> None:
        lo, hi = self.weight_range
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")
        if self.max_lag < 1:
            raise ValueError("max_lag must be >= 1")
        if self.T <= 3 * self.max_lag:
            raise ValueError(f"T={self.T} must exceed 3*max_lag={3 * self.max_lag}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if lo > hi:
            raise ValueError("weight_range must be (low, high) with low <= high")
        if self.min_abs_weight < 0 or self.min_abs_weight > max(abs(lo), abs(hi)):
            raise ValueError("min_abs_weight is unreachable inside weight_range")

    @property
    def burn_in(self) -> int:
        return 5 * self.max_lag

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weight_range"] = list(self.weight_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["weight_range"] = tuple(d["weight_range"])
        return cls(**d)


@dataclass
class GroundTruthGraph:
    adjacency: np.ndarray  # (D, D) int, [i, j] = 1 iff i -> j
    coeffs: np.ndarray  # (D, D, max_lag); [i, j, l] weights X^i_{t-l-1} in X^j_t
    delays: np.ndarray  # (D, D) int, lag in 1..max_lag per edge, 0 where no edge

    @property
    def D(self) -> int:
        return self.adjacency.shape[0]

    @property
    def max_lag(self) -> int:
        return self.coeffs.shape[2]

    def copy(self) -> "GroundTruthGraph":
        return GroundTruthGraph(self.adjacency.copy(), self.coeffs.copy(), self.delays.copy())

    def companion_radius(self) -> float:
        """Spectral radius of the VAR companion matrix (< 1 means stationary)."""
        D, L = self.D, self.max_lag
        if not self.coeffs.any():
            return 0.0
        comp = np.zeros((D * L, D * L))
        for lag in range(L):
            comp[:D, lag * D:(lag + 1) * D] = self.coeffs[:, :, lag].T
        comp[D:, :-D] = np.eye(D * (L - 1))
        return float(np.max(np.abs(np.linalg.eigvals(comp))))


@dataclass
class TimeSeriesDataset:
    values: np.ndarray  # (T, D)
    config: GeneratorConfig | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]


def sample_graph(cfg: GeneratorConfig, rng: np.random.Generator) -> GroundTruthGraph:
    D, L = cfg.D, cfg.max_lag
    adjacency = np.zeros((D, D), dtype=np.int64)
    coeffs = np.zeros((D, D, L))
    delays = np.zeros((D, D), dtype=np.int64)
    lo, hi = cfg.weight_range
    for i in range(D):
        for j in range(D):
            if i == j and not cfg.autocorr:
                continue
            if rng.random() >= cfg.edge_prob:
                continue
            delay = int(rng.integers(1, L + 1))
            w = _sample_weight(rng, lo, hi, cfg.min_abs_weight)
            adjacency[i, j] = 1
            delays[i, j] = delay
            coeffs[i, j, delay - 1] = w
    return GroundTruthGraph(adjacency, coeffs, delays)


def _sample_weight(rng: np.random.Generator, lo: float, hi: float, min_abs: float) -> float:
    # uniform on [lo, hi] minus the open band (-min_abs, min_abs)
    neg = (lo, min(hi, -min_abs)) if lo <= -min_abs else None
    pos = (max(lo, min_abs), hi) if hi >= min_abs else None
    pieces = [p for p in (neg, pos) if p is not None]
    if min_abs == 0.0:
        pieces = [(lo, hi)]
    widths = np.array([b - a for a, b in pieces])
    if widths.sum() == 0.0:
        a, _ = pieces[int(rng.integers(len(pieces)))]
        return float(a)
    k = int(rng.choice(len(pieces), p=widths / widths.sum()))
    a, b = pieces[k]
    return float(rng.uniform(a, b))


def simulate(
    graph: GroundTruthGraph,
    cfg: GeneratorConfig,
    rng: np.random.Generator,
    burn_in: int | None = None,
    init: np.ndarray | None = None,
) -> TimeSeriesDataset:
    """Iterate the lagged recurrence and keep the last ``cfg.T`` steps.

    ``init`` overrides the innovation-only first ``max_lag`` steps.
    """
    D, L = cfg.D, cfg.max_lag
    if graph.D != D or graph.max_lag != L:
        raise ValueError(f"graph is {graph.D} vars / lag {graph.max_lag}, config {D} / {L}")
    burn = cfg.burn_in if burn_in is None else burn_in
    total = burn + cfg.T
    if total < L:
        raise ValueError("burn_in + T must cover max_lag initial steps")
    eps = rng.normal(0.0, 1.0, size=(total, D)) * cfg.noise_std
    x = np.zeros((total, D))
    if init is not None:
        x[:L] = np.asarray(init, dtype=np.float64).reshape(L, D)
    else:
        x[:L] = eps[:L]
    # lagged[l] is the (D, D) map from X_{t-l-1} to X_t
    lagged = [graph.coeffs[:, :, lag] for lag in range(L)]
    active = [lag for lag in range(L) if lagged[lag].any()]
    for t in range(L, total):
        acc = eps[t].copy()
        for lag in active:
            acc += x[t - lag - 1] @ lagged[lag]
        x[t] = acc
        if not np.all(np.abs(acc) <= DIVERGENCE_LIMIT):
            raise InstabilityError(f"simulation diverged at step {t}")
    values = x[burn:]
    return TimeSeriesDataset(values=values, config=cfg, seed=cfg.seed)


def stabilize(graph: GroundTruthGraph, cfg: GeneratorConfig, rng: np.random.Generator) -> GroundTruthGraph:
    """Shrink all coefficients by 0.9 until the process is stationary and a
    trial run stays bounded. Adjacency and delays are untouched."""
    g = graph.copy()
    for _ in range(MAX_RESCALES + 1):
        if _is_stable(g, cfg, rng):
            return g
        g.coeffs *= RESCALE_FACTOR
    raise GenerationError(f"graph still unstable after {MAX_RESCALES} rescales")


def _is_stable(graph: GroundTruthGraph, cfg: GeneratorConfig, rng: np.random.Generator) -> bool:
    if graph.companion_radius() >= 1.0:
        return False
    try:
        simulate(graph, cfg, rng)
    except InstabilityError:
        return False
    return True


def generate(cfg: GeneratorConfig) -> tuple[TimeSeriesDataset, GroundTruthGraph]:
    """Graph + series for ``cfg``, deterministic in ``cfg.seed``."""
    graph_ss, trial_ss, noise_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    graph = sample_graph(cfg, np.random.default_rng(graph_ss))
    graph = stabilize(graph, cfg, np.random.default_rng(trial_ss))
    data = simulate(graph, cfg, np.random.default_rng(noise_ss))
    return data, graph


# --- file formats ---------------------------------------------------------


def dataset_to_csv(data: TimeSeriesDataset) -> str:
    buf = io.StringIO()
    buf.write(",".join(f"x{j + 1}" for j in range(data.D)) + "\n")
    for row in data.values:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def dataset_from_csv(text: str) -> TimeSeriesDataset:
    lines = text.splitlines()
    if not lines:
        raise DataFormatError("empty dataset file", line=1)
    header = next(csv.reader([lines[0]]))
    D = len(header)
    if D == 0 or any(not h.strip() for h in header):
        raise DataFormatError("bad header", line=1)
    rows = []
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row:
            continue
        if len(row) != D:
            raise DataFormatError(f"expected {D} fields, found {len(row)}", line=lineno, column=len(row) + 1)
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(f"not a number: {cell!r}", line=lineno, column=col) from None
            if not math.isfinite(v):
                raise DataFormatError(f"non-finite value {cell!r}", line=lineno, column=col)
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise DataFormatError("dataset has no rows", line=2)
    return TimeSeriesDataset(values=np.array(rows, dtype=np.float64))


def graph_to_json(graph: GroundTruthGraph, cfg: GeneratorConfig) -> str:
    doc = {
        "adjacency": graph.adjacency.tolist(),
        "coeffs": graph.coeffs.tolist(),
        "delays": graph.delays.tolist(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
    }
    return json.dumps(doc, indent=1) + "\n"


def graph_from_json(text: str) -> tuple[GroundTruthGraph, GeneratorConfig]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    try:
        adjacency = np.array(doc["adjacency"], dtype=np.int64)
        coeffs = np.array(doc["coeffs"], dtype=np.float64)
        delays = np.array(doc["delays"], dtype=np.int64)
        cfg = GeneratorConfig.from_dict(doc["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"graph file missing or bad field: {exc}") from None
    D = adjacency.shape[0]
    if adjacency.shape != (D, D) or coeffs.shape[:2] != (D, D) or delays.shape != (D, D):
        raise DataFormatError("graph arrays have inconsistent shapes")
    return GroundTruthGraph(adjacency, coeffs, delays), cfg


def save(data: TimeSeriesDataset, graph: GroundTruthGraph, cfg: GeneratorConfig, outdir: Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "data.csv").write_text(dataset_to_csv(data))
    (outdir / "graph.json").write_text(graph_to_json(graph, cfg))


def load_dataset(path: Path) -> TimeSeriesDataset:
    path = Path(path)
    if path.is_dir():
        path = path / "data.csv"
    return dataset_from_csv(path.read_text())


def load_graph(path: Path) -> tuple[GroundTruthGraph, GeneratorConfig]:
    path = Path(path)
    if path.is_dir():
        path = path / "graph.json"
    return graph_from_json(path.read_text())
