import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

import graphsr.autodiff as ad
from graphsr.autodiff import (
    Adam,
    AdamState,
    CheckpointError,
    ShapeError,
    Tensor,
    adam_step,
    glorot_uniform,
    grad_check,
    load_checkpoint,
    save_checkpoint,
)


def param(r, *shape):
    return Tensor(r.standard_normal(shape), requires_grad=True)


def test_sigmoid_value_and_derivative():
    x = Tensor([[0.0]], requires_grad=True)
    y = ad.sigmoid(x)
    y.backward()
    assert y.item() == 0.5
    assert x.grad[0, 0] == pytest.approx(0.25)


def test_linear_gradient_is_broadcast_input(rng):
    w = param(rng, 3, 4)
    x = rng.standard_normal((4, 1))
    ad.sum(ad.matmul(w, Tensor(x))).backward()
    assert_allclose(w.grad, np.tile(x.T, (3, 1)))


def test_three_layer_composite_matches_finite_differences(rng):
    w1, w2 = param(rng, 5, 6), param(rng, 6, 1)
    x = Tensor(rng.standard_normal((7, 5)))

    def f():
        return ad.mean(ad.sigmoid(ad.matmul(ad.relu(ad.matmul(x, w1)), w2)))
    assert grad_check(f, [w1, w2], eps=1e-5) <= 1e-4


def test_constant_loss_leaves_zero_grads(rng):
    w = param(rng, 2, 2)
    loss = ad.sum(Tensor(np.ones((2, 2))))
    loss.backward()
    assert_array_equal(w.grad, 0.0)


def test_squared_norm_gradient(rng):
    w = param(rng, 3, 2)
    ad.sum(ad.mul(w, w)).backward()
    assert_allclose(w.grad, 2 * w.value)


def test_unused_parameter_gets_zero(rng):
    w, unused = param(rng, 2, 2), param(rng, 2, 2)
    ad.sum(w).backward()
    assert_array_equal(unused.grad, 0.0)


def test_backward_needs_scalar(rng):
    with pytest.raises(ShapeError):
        param(rng, 2, 2).backward()


def test_shape_errors_name_op(rng):
    with pytest.raises(ShapeError, match="add"):
        ad.add(param(rng, 2, 3), param(rng, 3, 2))
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(param(rng, 2, 3), param(rng, 2, 3))


def test_log_clamps_nonpositive_input():
    x = Tensor([[0.0, -1.0, 1.0]], requires_grad=True)
    y = ad.log(x)
    assert_allclose(y.value, [[np.log(1e-12), np.log(1e-12), 0.0]])
    ad.sum(y).backward()
    assert_allclose(x.grad, [[0.0, 0.0, 1.0]])


def test_quadratic_grad_check_tight(rng):
    w = param(rng, 4, 3)
    assert grad_check(lambda: ad.sum(ad.mul(w, w)), [w]) <= 1e-9


def test_sigmoid_chain_grad_check(rng):
    w = param(rng, 4, 3)
    assert grad_check(lambda: ad.mean(ad.sigmoid(ad.sigmoid(ad.scale(w, 0.7)))), [w]) <= 1e-6


def test_relu_grad_check_away_from_kink(rng):
    w = Tensor(rng.uniform(0.5, 1.0, (4, 3)) * rng.choice([-1, 1], (4, 3)), requires_grad=True)
    assert grad_check(lambda: ad.sum(ad.mul(ad.relu(w), w)), [w]) <= 1e-5


def test_intermediate_grads_are_released(rng):
    w = param(rng, 3, 3)
    mid = ad.relu(w)
    ad.sum(mid).backward()
    assert mid.grad is not None
    assert w.grad.shape == (3, 3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_random_composite_graph(seed):
    r = np.random.default_rng(seed)
    w1, w2, b = param(r, 4, 5), param(r, 5, 3), param(r, 1, 3)
    x = Tensor(r.standard_normal((6, 4)))
    idx = r.integers(0, 6, size=8)
    op = r.standard_normal((6, 6))

    def f():
        h = ad.add(ad.matmul(ad.apply_linear(op, x), w1), 0.1)        # 3
        h = ad.row_softmax(ad.matmul(ad.exp(ad.scale(h, 0.2)), w2))   # 7
        h = ad.add(h, b)
        g = ad.gather_rows(h, idx)                                   # 9
        z = ad.concat_cols([ad.sigmoid(g), ad.log_sigmoid(g)])       # 12
        z = ad.row_log_softmax(ad.sub(z, ad.transpose(ad.transpose(z))))
        z = ad.div(ad.mul(z, z), ad.add(ad.sum_rows(ad.sigmoid(z)), 1.0))
        return ad.add(ad.mean(z), ad.take(w1, 1, 2))
    assert grad_check(f, [w1, w2, b]) <= 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-2, 2), c=st.floats(-2, 2))
def test_gradient_linearity(seed, a, c):
    r = np.random.default_rng(seed)
    w = param(r, 3, 3)

    def f():
        return ad.sum(ad.sigmoid(ad.matmul(w, w)))

    def g():
        return ad.mean(ad.exp(ad.scale(w, 0.3)))

    def grad_of(fn):
        w.zero_grad()
        fn().backward()
        return w.grad.copy()
    combined = grad_of(lambda: ad.add(ad.scale(f(), a), ad.scale(g(), c)))
    assert_allclose(combined, a * grad_of(f) + c * grad_of(g), atol=1e-10)


def test_non_finite_values_raise():
    with pytest.raises(FloatingPointError):
        ad.exp(Tensor([[1000.0]]))


def test_adam_first_step_is_lr_sized():
    params = {"w": np.array([[1.0, -2.0]])}
    new, state = adam_step(params, {"w": np.array([[3.0, -0.5]])}, AdamState(), lr=0.1)
    assert_allclose(new["w"] - params["w"], [[-0.1, 0.1]], atol=1e-6)
    assert state.step == 1


def test_adam_zero_grad_keeps_params():
    params = {"w": np.array([[1.0, 2.0]])}
    new, _ = adam_step(params, {"w": np.zeros((1, 2))}, AdamState(), lr=0.1)
    assert_array_equal(new["w"], params["w"])


def test_adam_decreases_quadratic():
    w = Tensor([[1.0]], requires_grad=True)
    opt = Adam({"w": w}, lr=0.1)
    opt.zero_grad()
    ad.sum(ad.mul(w, w)).backward()
    opt.step()
    assert abs(w.value[0, 0]) < 1.0
    with pytest.raises(ValueError):
        adam_step({"w": w.value}, {"w": w.grad}, AdamState(), lr=0.0)


def test_training_is_bitwise_deterministic():
    def run():
        r = np.random.default_rng(3)
        w = glorot_uniform(r, 4, 2)
        x = Tensor(r.standard_normal((10, 4)))
        opt = Adam({"w": w}, lr=0.05)
        for _ in range(20):
            opt.zero_grad()
            ad.mean(ad.mul(ad.matmul(x, w), ad.matmul(x, w))).backward()
            opt.step()
        return w.value
    assert_array_equal(run(), run())


def test_glorot_bounds():
    w = glorot_uniform(np.random.default_rng(0), 30, 20)
    assert np.abs(w.value).max() <= np.sqrt(6 / 50)
    assert w.requires_grad


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = {"a": rng.standard_normal((3, 4)), "b.c": rng.standard_normal((1, 1)), "v": rng.standard_normal(5)}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, arrays)
    back = load_checkpoint(path)
    assert list(back) == list(arrays)
    for k in arrays:
        assert_array_equal(back[k], arrays[k])
    raw = path.read_bytes()
    assert raw[:8] == b"GSRCKPT1"


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    good = tmp_path / "t.ckpt"
    save_checkpoint(good, {"a": np.ones((4, 4))})
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(good)
