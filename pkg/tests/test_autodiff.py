import numpy as np
import pytest

from splatfuse import autodiff as ad
from splatfuse.autodiff import Tensor, backward
from splatfuse.nn import AdamState, MlpBlock, adam_step
from splatfuse.rng import stream

from fd import central_diff, rel_err


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    y = ad.mul(x, x)
    backward(y)
    assert x.grad == pytest.approx(6.0)


def test_constant_has_zero_gradient():
    x = Tensor(3.0, requires_grad=True)
    c = Tensor(5.0)
    loss = ad.mul(c, c)
    (gx,) = backward(loss, leaves=[x])
    assert gx == pytest.approx(0.0)


def test_nonscalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ad.GraphError):
        backward(ad.mul(x, x))


def test_two_layer_mlp_matches_finite_differences():
    rng = stream(11, "test.mlp")
    mlp = MlpBlock([4, 8, 1], activation="relu", rng=rng)
    x = Tensor(rng.normal(size=(5, 4)))

    def loss_value():
        return ad.tsum(mlp(x)).item()

    loss = ad.tsum(mlp(x))
    ad.zero_grad(mlp.params)
    grads = backward(loss, leaves=mlp.params)
    fd = central_diff(loss_value, [p.data for p in mlp.params])
    for g, f in zip(grads, fd):
        assert rel_err(g, f) < 1e-4


def _random_composed_graph(rng):
    """Exercises every supported op in one scalar-valued function."""
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    v = Tensor(rng.normal(size=4), requires_grad=True)
    w = Tensor(rng.normal(size=3), requires_grad=True)
    params = [a, b, v, w]

    def build():
        m = ad.matmul(a, b)                                  # (3,3)
        m = ad.add(m, ad.outer(w, w))
        m = ad.sub(m, ad.tanh(m))
        m = ad.mul(m, ad.softmax(m, axis=-1))
        row = ad.take(m, (slice(0, 2), slice(None)))         # (2,3)
        joined = ad.concat([row, ad.outer(Tensor(np.ones(1)), w)], axis=0)
        s = ad.tsum(ad.relu(joined)) + ad.tmean(ad.softplus(m))
        s = s + ad.tsum(ad.exp(ad.mul(v, 0.1)))
        s = s + ad.tsum(ad.log(ad.add(ad.power(v, 2.0), 1.5)))
        s = s + ad.tsum(ad.matmul(v, b))
        return s

    return params, build


@pytest.mark.parametrize("restart", range(10))
def test_composed_graph_matches_finite_differences(restart):
    rng = stream(100 + restart, "test.composed")
    params, build = _random_composed_graph(rng)
    ad.zero_grad(params)
    grads = backward(build(), leaves=params)
    fd = central_diff(lambda: build().item(), [p.data for p in params])
    for g, f in zip(grads, fd):
        assert rel_err(g, f) < 1e-4


def test_gradient_of_sum_of_losses_is_sum_of_gradients():
    rng = stream(21, "test.linear")
    x = Tensor(rng.normal(size=6), requires_grad=True)

    def l1():
        return ad.tsum(ad.power(x, 2.0))

    def l2():
        return ad.tsum(ad.tanh(x))

    ad.zero_grad([x])
    backward(l1())
    g1 = x.grad.copy()
    ad.zero_grad([x])
    backward(l2())
    g2 = x.grad.copy()
    ad.zero_grad([x])
    backward(ad.add(l1(), l2()))
    np.testing.assert_allclose(x.grad, g1 + g2, rtol=1e-12)


def test_softplus_output_strictly_positive():
    rng = stream(31, "test.softplus")
    x = Tensor(np.concatenate([rng.normal(scale=50.0, size=100), [-745.0, 745.0, 0.0]]))
    y = ad.softplus(x)
    assert np.all(y.data > 0)
    assert np.all(np.isfinite(y.data))


def test_batched_matmul_matches_finite_differences():
    rng = stream(41, "test.batched")
    x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 3, 2)), requires_grad=True)

    def build():
        return ad.tsum(ad.power(ad.matmul(x, w), 2.0))

    ad.zero_grad([x, w])
    grads = backward(build(), leaves=[x, w])
    fd = central_diff(lambda: build().item(), [x.data, w.data])
    for g, f in zip(grads, fd):
        assert rel_err(g, f) < 1e-4


def test_finiteness_check():
    t = Tensor([1.0, np.inf])
    assert not t.is_finite()
    with pytest.raises(FloatingPointError):
        t.check_finite()
    Tensor([1.0, 2.0]).check_finite()


# -- Adam ---------------------------------------------------------------------


def test_adam_zero_gradients_leave_params_unchanged():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    state = AdamState.for_params([p], lr=0.1)
    adam_step([p], [np.zeros(2)], state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    np.testing.assert_array_equal(state.m[0], 0.0)
    np.testing.assert_array_equal(state.v[0], 0.0)


def test_adam_first_step_magnitude():
    # lr=0.1, g=1: bias-corrected update is lr * 1 / (1 + eps)
    p = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState.for_params([p], lr=0.1)
    adam_step([p], [np.array([1.0])], state)
    assert p.data[0] == pytest.approx(-0.1 / (1.0 + 1e-8), abs=1e-12)
    assert state.step == 1


def test_adam_deterministic():
    def run():
        rng = stream(5, "test.adam")
        p = Tensor(rng.normal(size=8), requires_grad=True)
        state = AdamState.for_params([p], lr=0.01)
        for i in range(25):
            g = np.sin(p.data + i)
            adam_step([p], [g], state)
        return p.data.copy()

    np.testing.assert_array_equal(run(), run())


def test_adam_shape_mismatch_rejected():
    p = Tensor(np.zeros(3), requires_grad=True)
    state = AdamState.for_params([p])
    with pytest.raises(ValueError):
        adam_step([p], [np.zeros(4)], state)
