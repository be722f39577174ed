import numpy as np
import pytest

from graph2seq import autodiff as ad
from graph2seq.autodiff import Tensor
from graph2seq.errors import ContractError
from graph2seq.optim import (AdamState, ParamStore, adam_step, dropout,
                             grad_check, load_checkpoint, named_rng,
                             save_checkpoint)


def make_store(values):
    store = ParamStore(seed=0)
    theta = store.vector("theta", len(values))
    theta.data[:] = values
    return store, theta


def test_adam_first_step_is_sign_update():
    store, theta = make_store([1.0, -1.0])
    theta.grad[:] = [10.0, -10.0]
    state = AdamState(lr=0.001)
    adam_step(state, store)
    np.testing.assert_allclose(theta.data, [1.0 - 0.001, -1.0 + 0.001], atol=1e-6)
    assert state.t == 1
    np.testing.assert_allclose(theta.grad, 0.0)


def test_adam_zero_gradient_leaves_params():
    store, theta = make_store([0.3, 0.7])
    state = AdamState()
    adam_step(state, store)
    np.testing.assert_allclose(theta.data, [0.3, 0.7])
    assert state.t == 1


def test_adam_descends_on_quadratic():
    store, theta = make_store([1.0])
    state = AdamState(lr=0.001)
    values = [1.0]
    for _ in range(2):
        store.zero_grads()
        loss = (theta * theta).sum()
        ad.backward(loss)
        adam_step(state, store)
        values.append(float(theta.data[0]))
    assert values[0] > values[1] > values[2]


def test_adam_shape_mismatch():
    store, theta = make_store([1.0])
    theta.grad = np.zeros(3)
    with pytest.raises(ContractError):
        adam_step(AdamState(), store)


def test_dropout_eval_mode_is_identity():
    x = Tensor(np.ones(10))
    out = dropout(x, 0.5, training=False, rng=named_rng(0, "d"))
    assert out is x


def test_dropout_rate_zero_is_identity():
    x = Tensor(np.ones(10))
    assert dropout(x, 0.0, training=True, rng=named_rng(0, "d")) is x


def test_dropout_rate_one_rejected():
    with pytest.raises(ContractError):
        dropout(Tensor(np.ones(3)), 1.0, training=True, rng=named_rng(0, "d"))


def test_dropout_statistics():
    rng = named_rng(7, "dropout")
    x = Tensor(np.ones(1_000_000))
    out = dropout(x, 0.3, training=True, rng=rng).data
    zero_frac = (out == 0).mean()
    assert abs(zero_frac - 0.3) < 0.01
    assert abs(out.mean() - 1.0) < 0.01


def test_grad_check_quadratic():
    store = ParamStore(seed=0)
    theta = store.scalar("theta", 3.0)
    result = grad_check(lambda: theta * theta, store)
    assert result.max_rel_error["theta"] < 1e-9


def test_grad_check_flags_relu_kink():
    store = ParamStore(seed=0)
    theta = store.scalar("theta", 0.0)  # exactly on the ReLU kink
    result = grad_check(lambda: ad.relu(theta) * 1.0, store)
    assert result.skipped.get("theta", 0) == 1
    assert result.max_rel_error["theta"] == 0.0


def test_grad_check_fault_hook_reports_parameter():
    store = ParamStore(seed=0)
    theta = store.scalar("theta", 2.0)

    def corrupt(analytic):
        analytic["theta"] += 1.0

    result = grad_check(lambda: theta * theta, store, fault_hook=corrupt)
    assert not result.passed(1e-4)
    assert result.max_rel_error["theta"] > 1e-2


def test_clip_global_norm():
    store = ParamStore(seed=0)
    v = store.vector("v", 2)
    v.grad[:] = [3.0, 4.0]
    total = store.clip_global_norm(1.0)
    assert total == pytest.approx(5.0)
    assert np.linalg.norm(v.grad) == pytest.approx(1.0)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    store = ParamStore(seed=3)
    store.matrix("W", 4, 5)
    store.vector("b", 5, init="uniform")
    before = {name: t.data.copy() for name, t in store}
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, store, extra={"note": "x"})

    other = ParamStore(seed=99)
    other.matrix("W", 4, 5)
    other.vector("b", 5, init="uniform")
    extra = load_checkpoint(path, other)
    assert extra == {"note": "x"}
    for name, t in other:
        assert (t.data == before[name]).all()


def test_checkpoint_name_mismatch(tmp_path):
    store = ParamStore(seed=0)
    store.vector("a", 2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, store)
    other = ParamStore(seed=0)
    other.vector("different", 2)
    with pytest.raises(ContractError):
        load_checkpoint(path, other)


def test_named_rng_streams_are_independent_and_stable():
    a1 = named_rng(5, "shuffle").random(4)
    a2 = named_rng(5, "shuffle").random(4)
    b = named_rng(5, "dropout").random(4)
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(a1, b)
