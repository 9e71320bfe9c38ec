"""Sparse Attention Transformer for Granger-causal discovery.

A window of the last ``2k`` observations goes through causally masked
temporal attention. The ``k`` time instances with the largest attention
column sums are kept, transposed so that every variable becomes a token,
and a second (inter-variable) attention layer predicts the next
observation. Masking one column of the inter-variable attention gives the
restricted model used for the Granger index.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor
from .datagen import TimeSeriesDataset


class InsufficientDataError(ValueError):
    pass


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, sample: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}, sample {sample}")
        self.epoch = epoch
        self.sample = sample


@dataclass(frozen=True)
class SATConfig:
    k: int = 10
    d_k1: int = 32
    d_k2: int = 32
    epochs: int = 50
    lr: float = 1e-3
    seed: int = 0
    use_positional_encoding: bool = True
    straight_through: bool = False
    with_value1: bool = False  # allocate the temporal value projection (never consumed)
    standardize: bool = True  # z-score each variable before windowing
    recent_first: bool = False  # feed the temporal stage newest-first (ablation only)

    def __post_init__(self):
        if self.k < 1 or self.d_k1 < 1 or self.d_k2 < 1:
            raise ValueError("k, d_k1 and d_k2 must all be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def window(self) -> int:
        return 2 * self.k


@dataclass
class WindowSample:
    input: np.ndarray  # (2k, D)
    target: np.ndarray  # (D, 1)
    t: int  # 0-based row index of the target


def make_windows(data: TimeSeriesDataset | np.ndarray, k: int) -> list[WindowSample]:
    values = data.values if isinstance(data, TimeSeriesDataset) else np.asarray(data, dtype=np.float64)
    T, w = values.shape[0], 2 * k
    if T <= w:
        raise InsufficientDataError(f"need T > 2k, got T={T}, k={k}")
    return [WindowSample(values[i:i + w], values[i + w].reshape(-1, 1), i + w) for i in range(T - w)]


def positional_table(length: int, width: int) -> np.ndarray:
    """Sinusoidal table: sin on even channels, cos on odd ones."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    ch = np.arange(width)
    freq = np.power(10000.0, -(2 * (ch // 2)) / width)
    angles = pos * freq[None, :]
    return np.where(ch % 2 == 0, np.sin(angles), np.cos(angles))


def positional_encode(x: np.ndarray) -> np.ndarray:
    return x + positional_table(*x.shape)


def causal_mask(n: int) -> np.ndarray:
    """0 on and below the diagonal, NEG_INF above."""
    return np.triu(np.full((n, n), ad.NEG_INF), k=1)


def column_mask(D: int, col: int) -> np.ndarray:
    if not 0 <= col < D:
        raise ValueError(f"variable mask {col} outside [0, {D})")
    m = np.zeros((D, D))
    m[:, col] = ad.NEG_INF
    return m


def column_scores(A_t: np.ndarray) -> np.ndarray:
    return np.asarray(A_t).sum(axis=0)


def topk_select(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores in ascending order.

    Ties go to the larger (more recent) index.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if not 0 <= k <= s.size:
        raise ValueError(f"cannot select {k} of {s.size} scores")
    # stable sort on -s over reversed positions: equal scores keep later index first
    rev = s[::-1]
    order = np.argsort(-rev, kind="stable")[:k]
    return np.sort(s.size - 1 - order)


@dataclass
class ForwardTrace:
    A_t: np.ndarray
    scores: np.ndarray
    selected: np.ndarray
    A_d: Tensor
    y: Tensor


class SATModel:
    def __init__(self, D: int, config: SATConfig | None = None):
        self.D = D
        self.config = config or SATConfig()
        c = self.config
        rng = np.random.default_rng(c.seed)

        def init(rows, cols, name):
            bound = 1.0 / math.sqrt(rows)
            return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True, name=name)

        self.params: dict[str, Tensor] = {
            "W_Q1": init(D, c.d_k1, "W_Q1"),
            "W_K1": init(D, c.d_k1, "W_K1"),
            "W_Q2": init(c.k, c.d_k2, "W_Q2"),
            "W_K2": init(c.k, c.d_k2, "W_K2"),
            "W_V2": init(c.k, 1, "W_V2"),
        }
        if c.with_value1:
            self.params["W_V1"] = init(D, c.d_k1, "W_V1")
        self.adam = AdamState(lr=c.lr)
        self.loss_trace: list[float] = []
        # test hook, called as hook(scores, k, selected) on every selection
        self.selection_hook: Callable[[np.ndarray, int, np.ndarray], None] | None = None

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def _encode(self, window: np.ndarray) -> np.ndarray:
        if self.config.use_positional_encoding:
            return positional_encode(window)
        return np.asarray(window, dtype=np.float64)

    def temporal_attention(self, window: np.ndarray) -> Tensor:
        x = Tensor(self._encode(window))
        return self._temporal(x)

    def _temporal(self, x: Tensor) -> Tensor:
        q = ad.matmul(x, self.params["W_Q1"])
        kk = ad.matmul(x, self.params["W_K1"])
        logits = ad.scale(ad.matmul(q, ad.transpose(kk)), 1.0 / math.sqrt(self.config.d_k1))
        return ad.masked_row_softmax(logits, causal_mask(x.shape[0]))

    def variable_attention(self, selected: Tensor | np.ndarray, variable_mask: int | None = None) -> tuple[Tensor, Tensor]:
        """Returns (A_d, y') for a k x D block of selected rows."""
        if not isinstance(selected, Tensor):
            selected = Tensor(selected)
        if selected.shape != (self.config.k, self.D):
            raise ad.ShapeError(f"selected block must be {(self.config.k, self.D)}, got {selected.shape}")
        xt = ad.transpose(selected)  # D x k: one token per variable
        q = ad.matmul(xt, self.params["W_Q2"])
        kk = ad.matmul(xt, self.params["W_K2"])
        v = ad.matmul(xt, self.params["W_V2"])
        logits = ad.scale(ad.matmul(q, ad.transpose(kk)), 1.0 / math.sqrt(self.config.d_k2))
        mask = None if variable_mask is None else column_mask(self.D, variable_mask)
        A_d = ad.masked_row_softmax(logits, mask)
        return A_d, ad.matmul(A_d, v)

    def forward(self, window: np.ndarray, variable_mask: int | None = None) -> ForwardTrace:
        c = self.config
        if window.shape != (c.window, self.D):
            raise ad.ShapeError(f"window must be {(c.window, self.D)}, got {window.shape}")
        order = np.arange(c.window)[::-1] if c.recent_first else np.arange(c.window)
        x = Tensor(self._encode(window[order]))
        A_t = self._temporal(x)
        s = column_scores(A_t.data)
        # scores and indices below are in chronological position
        s_chrono = s[order] if c.recent_first else s
        idx = topk_select(s_chrono, c.k)
        if self.selection_hook is not None:
            self.selection_hook(s_chrono, c.k, idx)
        pos = order[idx]  # chronological index -> token position (order is its own inverse)
        rows = ad.select_rows(x, pos)
        if c.straight_through:
            # forward value unchanged (gate == 1); gradient reaches the temporal projections
            picked = ad.select_rows(ad.transpose(ad.column_sum(A_t)), pos)
            gate = ad.divide_const(picked, picked.data)
            rows = ad.scale_rows(rows, gate)
        A_d, y = self.variable_attention(rows, variable_mask)
        return ForwardTrace(A_t.data, s_chrono, idx, A_d, y)

    def predict(self, window: np.ndarray, variable_mask: int | None = None) -> np.ndarray:
        return self.forward(window, variable_mask).y.data.copy()

    def train_step(self, sample: WindowSample) -> float:
        trace = self.forward(sample.input)
        loss = ad.mse_loss(trace.y, Tensor(sample.target))
        value = loss.item()
        if not math.isfinite(value):
            raise FloatingPointError("non-finite loss")
        ad.backward(loss)
        ad.adam_step(self.params, self.adam)
        return value

    # --- checkpoints ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "config": asdict(self.config),
            "seed": self.config.seed,
            "params": {n: p.data.tolist() for n, p in self.params.items()},
            "adam_step": self.adam.step,
            "loss_trace": list(self.loss_trace),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "SATModel":
        model = cls(doc["D"], SATConfig(**doc["config"]))
        for name, values in doc["params"].items():
            model.params[name].data[...] = np.array(values, dtype=np.float64)
        model.adam.step = int(doc.get("adam_step", 0))
        model.loss_trace = list(doc.get("loss_trace", []))
        return model


def train(model: SATModel, samples: list[WindowSample], epochs: int | None = None) -> list[float]:
    """Per-sample Adam over ``samples`` in order; returns mean loss per epoch."""
    if not samples:
        raise InsufficientDataError("training needs at least one sample")
    epochs = model.config.epochs if epochs is None else epochs
    trace = []
    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(model, samples, epochs, trace)
    model.loss_trace.extend(trace)
    return trace


def _run_epochs(model: SATModel, samples: list[WindowSample], epochs: int, trace: list[float]) -> None:
    for epoch in range(epochs):
        total = 0.0
        for i, sample in enumerate(samples):
            try:
                total += model.train_step(sample)
            except (FloatingPointError, ad.NumericError) as exc:
                raise TrainingDivergedError(epoch, i, str(exc)) from exc
        trace.append(total / len(samples))


def predict_all(model: SATModel, samples: list[WindowSample], variable_mask: int | None = None) -> list[np.ndarray]:
    return [model.predict(s.input, variable_mask) for s in samples]


@dataclass
class SATRun:
    model: SATModel
    samples: list[WindowSample]
    unrestricted: list[np.ndarray]
    restricted: list[list[np.ndarray]] = field(default_factory=list)

    @property
    def targets(self) -> list[np.ndarray]:
        return [s.target for s in self.samples]


def standardize(values: np.ndarray) -> np.ndarray:
    """Per-variable z-score; constant columns are only centred."""
    values = np.asarray(values, dtype=np.float64)
    sd = values.std(axis=0)
    return (values - values.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def fit_and_probe(data: TimeSeriesDataset | np.ndarray, config: SATConfig | None = None) -> SATRun:
    """Train on every window, then predict with no mask and with each variable masked."""
    config = config or SATConfig()
    values = data.values if isinstance(data, TimeSeriesDataset) else np.asarray(data, dtype=np.float64)
    if config.standardize:
        values = standardize(values)
    samples = make_windows(values, config.k)
    model = SATModel(values.shape[1], config)
    train(model, samples)
    run = SATRun(model, samples, predict_all(model, samples))
    run.restricted = [predict_all(model, samples, variable_mask=l) for l in range(model.D)]
    return run
