import numpy as np
import pytest

from satgc import autodiff as ad

ACCEPTANCE_LINES: list[str] = []


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (x is perturbed in place and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_grads(build, leaves: list[ad.Tensor], h: float = 1e-5) -> float:
    """Max relative error over ``leaves`` of d build()/d leaf, analytic vs numeric.

    ``build`` returns a scalar Tensor built from ``leaves``.
    """
    for t in leaves:
        t.zero_grad()
    loss = build()
    ad.backward(loss)
    worst = 0.0
    for t in leaves:
        analytic = t.grad.copy()
        num = numeric_grad(lambda: build().item(), t.data, h)
        worst = max(worst, rel_error(analytic, num))
    return worst


def param(rng, *shape) -> ad.Tensor:
    return ad.Tensor(rng.normal(size=shape), requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
