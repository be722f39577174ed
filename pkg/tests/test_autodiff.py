import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graph2seq import autodiff as ad
from graph2seq.autodiff import Tensor, backward
from graph2seq.errors import ContractError


def param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def test_sum_of_squares_gradient():
    x = param([1.0, 2.0, 3.0])
    loss = (x * x).sum()
    backward(loss)
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])


def test_inactive_relu_gradient_is_zero():
    w = param([-0.5])
    loss = ad.relu(w).sum()
    backward(loss)
    np.testing.assert_allclose(w.grad, [0.0])


def test_backward_requires_scalar():
    x = param([1.0, 2.0])
    with pytest.raises(ContractError):
        backward(x * x)


def test_backward_twice_raises():
    x = param([1.0])
    loss = (x * x).sum()
    backward(loss)
    with pytest.raises(ContractError):
        backward(loss)


def test_gradient_accumulation_is_additive():
    x1 = param([1.0, -2.0, 0.5])
    loss_a = (x1 * x1).sum()
    loss_b = (x1 * 3.0).sum()
    backward(loss_a + loss_b)
    combined = x1.grad.copy()

    x2 = param([1.0, -2.0, 0.5])
    backward((x2 * x2).sum())
    backward((x2 * 3.0).sum())
    np.testing.assert_allclose(x2.grad, combined)


def finite_diff(fn, x, eps=1e-6):
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn().data)
        flat[i] = orig - eps
        fm = float(fn().data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


OPS = {
    "matmul": lambda a, b: (a @ b).sum(),
    "mul": lambda a, b: (a * b).sum(),
    "add": lambda a, b: (a + b).sum(),
    "sub": lambda a, b: (a - b).sum(),
    "tanh": lambda a, b: ad.tanh(a @ b).sum(),
    "sigmoid": lambda a, b: ad.sigmoid(a @ b).sum(),
    "exp": lambda a, b: ad.exp(a * 0.3).sum() + (b * 0.0).sum(),
    "softmax_dot": lambda a, b: (ad.softmax(ad.row(a, 0)) * ad.row(b, 0)).sum(),
    "concat": lambda a, b: ad.concat([a, b], axis=1).sum(),
    "narrow": lambda a, b: ad.narrow(a, 1, 1, 2).sum() + b.sum(),
    "take_rows": lambda a, b: ad.take_rows(a, [0, 2, 0]).sum() + b.sum(),
    "stack_rows": lambda a, b: ad.stack_rows([ad.row(a, 0), ad.row(a, 2)]).sum() + b.sum(),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % (2 ** 32))
    a = param(rng.normal(size=(3, 3)))
    b = param(rng.normal(size=(3, 3)))
    fn = lambda: OPS[name](a, b)
    loss = fn()
    backward(loss)
    for t in (a, b):
        analytic = t.grad.copy()
        t.zero_grad()
        numeric = finite_diff(fn, t)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_two_layer_composition_matches_finite_differences():
    rng = np.random.default_rng(42)
    W1 = param(rng.normal(size=(4, 5)))
    W2 = param(rng.normal(size=(5, 3)))
    x = Tensor(rng.normal(size=4))

    def fn():
        h = ad.tanh(x @ W1)
        return ad.sigmoid(h @ W2).sum()

    backward(fn())
    for t in (W1, W2):
        analytic = t.grad.copy()
        t.zero_grad()
        numeric = finite_diff(fn, t, eps=1e-5)
        err = np.abs(analytic - numeric) / np.maximum.reduce(
            [np.abs(analytic), np.abs(numeric), np.full_like(analytic, 1e-8)])
        assert err.max() < 1e-4


def test_scatter_add_merges_duplicates_and_backprops():
    w = param([0.7, 0.2, 0.1])
    out = ad.scatter_add(w, [2, 0, 2], 4)
    np.testing.assert_allclose(out.data, [0.2, 0.0, 0.8, 0.0])
    backward((out * Tensor([1.0, 10.0, 100.0, 1000.0])).sum())
    np.testing.assert_allclose(w.grad, [100.0, 1.0, 100.0])


def test_clamp_min_blocks_gradient_below_floor():
    x = param([1e-15, 0.5])
    loss = ad.log(ad.clamp_min(x, 1e-12)).sum()
    backward(loss)
    assert x.grad[0] == 0.0
    np.testing.assert_allclose(x.grad[1], 2.0)


@settings(max_examples=50)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
def test_softmax_is_a_distribution(vals):
    p = ad.softmax(Tensor(np.asarray(vals))).data
    assert (p >= 0).all()
    assert abs(p.sum() - 1.0) < 1e-6


def test_softmax_2d_rows_normalized():
    m = ad.softmax(Tensor(np.random.default_rng(0).normal(size=(4, 6)))).data
    np.testing.assert_allclose(m.sum(axis=1), np.ones(4), atol=1e-12)
