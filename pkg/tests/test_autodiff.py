import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from satgc import autodiff as ad
from satgc.autodiff import Tensor

from conftest import check_grads, param


def test_matmul_identity():
    out = ad.matmul(Tensor(np.eye(2)), Tensor([[1, 2], [3, 4]]))
    np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])


def test_matmul_dot():
    assert ad.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).item() == 11


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradcheck(rng):
    a, b = param(rng, 3, 4), param(rng, 4, 2)
    target = Tensor(rng.normal(size=(3, 2)))
    err = check_grads(lambda: ad.mse_loss(ad.matmul(a, b), target), [a, b])
    assert err < 1e-6


def test_softmax_symmetric_row():
    np.testing.assert_array_equal(ad.masked_row_softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])


def test_softmax_single_visible_entry():
    out = ad.masked_row_softmax(Tensor([[5.0, 7.0]]), np.array([[0.0, -np.inf]]))
    assert out.data.tolist() == [[1.0, 0.0]]


def test_softmax_direct_formula():
    e = [math.exp(1.0), math.exp(2.0), math.exp(3.0)]
    expected = [v / sum(e) for v in e]
    out = ad.masked_row_softmax(Tensor([[1.0, 2.0, 3.0]]))
    np.testing.assert_allclose(out.data[0], expected, rtol=0, atol=1e-12)


def test_softmax_fully_masked_row():
    with pytest.raises(ad.DegenerateRowError):
        ad.masked_row_softmax(Tensor(np.zeros((2, 2))), np.array([[0.0, 0.0], [ad.NEG_INF, ad.NEG_INF]]))


def test_softmax_mask_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        ad.masked_row_softmax(Tensor(np.zeros((2, 2))), np.zeros((2, 3)))


def test_transpose():
    x = Tensor([[1, 2], [3, 4]])
    assert ad.transpose(x).data.tolist() == [[1, 3], [2, 4]]
    np.testing.assert_array_equal(ad.transpose(ad.transpose(x)).data, x.data)


def test_transpose_gradcheck(rng):
    x = param(rng, 3, 5)
    w = Tensor(rng.normal(size=(3, 2)))
    target = Tensor(rng.normal(size=(5, 2)))
    assert check_grads(lambda: ad.mse_loss(ad.matmul(ad.transpose(x), w), target), [x]) < 1e-6


def test_mse_values(rng):
    x = Tensor([[1.0], [2.0]])
    assert ad.mse_loss(x, Tensor([[1.0], [2.0]])).item() == 0.0
    assert ad.mse_loss(Tensor([[1.0], [0.0]]), Tensor([[0.0], [0.0]])).item() == 0.5
    p, t = rng.normal(size=(5, 1)), rng.normal(size=(5, 1))
    direct = sum((p[i, 0] - t[i, 0]) ** 2 for i in range(5)) / 5
    assert abs(ad.mse_loss(Tensor(p), Tensor(t)).item() - direct) < 1e-12


def test_mse_shape_error():
    with pytest.raises(ad.ShapeError):
        ad.mse_loss(Tensor(np.zeros((2, 1))), Tensor(np.zeros((3, 1))))


def test_adam_zero_gradient():
    p = Tensor([[0.3, -1.2]], requires_grad=True)
    state = ad.AdamState()
    ad.adam_step({"p": p}, state)
    assert p.data.tolist() == [[0.3, -1.2]]
    assert state.step == 1


def _adam_scalar(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return theta


@pytest.mark.parametrize("grads", [[0.7], [0.7, -2.5]])
def test_adam_matches_scalar_recurrence(grads):
    p = Tensor([[1.5]], requires_grad=True)
    state = ad.AdamState()
    for g in grads:
        p.grad[...] = g
        ad.adam_step({"p": p}, state)
        assert p.grad[0, 0] == 0.0
    assert abs(p.item() - _adam_scalar(1.5, grads)) < 1e-12
    assert state.step == len(grads)


def test_adam_non_finite_gradient_names_parameter():
    p = Tensor([[1.0]], requires_grad=True)
    p.grad[...] = np.nan
    with pytest.raises(ad.NumericError) as info:
        ad.adam_step({"W_Q2": p}, ad.AdamState())
    assert info.value.name == "W_Q2"


def test_backward_identical_values_zero_grad(rng):
    w = param(rng, 3, 1)
    x = Tensor(rng.normal(size=(2, 3)))
    out = ad.matmul(x, w)
    loss = ad.mse_loss(out, out.detach())
    ad.backward(loss)
    assert not w.grad.any()


def test_backward_non_scalar():
    with pytest.raises(ValueError):
        ad.backward(Tensor(np.ones((2, 1)), requires_grad=True))


def test_backward_softmax_matmul_composite(rng):
    x = Tensor(rng.normal(size=(4, 3)))
    wq, wk, wv = param(rng, 3, 2), param(rng, 3, 2), param(rng, 3, 1)
    mask = np.triu(np.full((4, 4), ad.NEG_INF), 1)
    target = Tensor(rng.normal(size=(4, 1)))

    def build():
        logits = ad.scale(ad.matmul(ad.matmul(x, wq), ad.transpose(ad.matmul(x, wk))), 1 / math.sqrt(2))
        return ad.mse_loss(ad.matmul(ad.masked_row_softmax(logits, mask), ad.matmul(x, wv)), target)

    assert check_grads(build, [wq, wk, wv]) < 1e-4


def test_unreachable_parameter_has_zero_grad(rng):
    used, unused = param(rng, 2, 1), param(rng, 2, 2)
    loss = ad.mse_loss(ad.matmul(Tensor(rng.normal(size=(3, 2))), used), Tensor(np.zeros((3, 1))))
    ad.backward(loss)
    assert used.grad.any()
    assert np.array_equal(unused.grad, np.zeros((2, 2)))


def test_shared_node_accumulates(rng):
    # x used twice: d/dx mse(x x^T, 0) checks accumulation through both operands
    x = param(rng, 3, 2)
    target = Tensor(np.zeros((3, 3)))
    assert check_grads(lambda: ad.mse_loss(ad.matmul(x, ad.transpose(x)), target), [x]) < 1e-6


def _random_op_graph(seed: int):
    rng = np.random.default_rng(seed)
    m, n, p = (int(v) for v in rng.integers(3, 7, size=3))
    a, b = param(rng, m, n), param(rng, n, p)
    s = param(rng, m, 1)
    rows = rng.integers(0, m, size=m)
    mask = np.where(rng.random((m, p)) < 0.3, ad.NEG_INF, 0.0)
    mask[:, 0] = 0.0
    target = Tensor(rng.normal(size=(p, m)))

    def build():
        h = ad.matmul(a, b)
        h = ad.masked_row_softmax(ad.scale(h, 0.7), mask)
        h = ad.scale_rows(ad.select_rows(h, rows), s)
        h = ad.divide_const(h, np.full(h.shape, 1.3))
        h = ad.add(h, ad.scale(ad.matmul(a, b), 0.1))
        cs = ad.column_sum(h)
        h = ad.add(h, ad.matmul(Tensor(np.ones((m, 1))), cs))
        return ad.mse_loss(ad.transpose(h), target)

    return build, [a, b, s]


def test_gradcheck_all_ops_100_seeds():
    worst = max(check_grads(*_random_op_graph(seed)) for seed in range(100))
    assert worst < 1e-4


def test_backward_deterministic():
    grads = []
    for _ in range(2):
        build, leaves = _random_op_graph(7)
        ad.backward(build())
        grads.append([t.grad.copy() for t in leaves])
    for g1, g2 in zip(*grads):
        assert np.array_equal(g1, g2)


rows = arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False))


@given(rows)
def test_softmax_rows_stochastic(x):
    p = ad.masked_row_softmax(Tensor(x)).data
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


@given(rows, st.floats(-1e3, 1e3))
def test_softmax_shift_invariant(x, c):
    p = ad.masked_row_softmax(Tensor(x)).data
    q = ad.masked_row_softmax(Tensor(x + c)).data
    np.testing.assert_allclose(p, q, atol=1e-12)


@settings(max_examples=50)
@given(rows, st.data())
def test_softmax_masked_entries_exactly_zero(x, data):
    hidden = data.draw(arrays(bool, x.shape))
    hidden[:, 0] = False
    mask = np.where(hidden, -np.inf, 0.0)
    p = ad.masked_row_softmax(Tensor(x), mask).data
    assert np.all(p[hidden] == 0.0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
