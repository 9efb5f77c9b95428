"""Layer-stack correctness: flat vector plumbing and gradient checks."""

import numpy as np
import pytest

from fplab.nn import (
    Adam,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Dense,
    Flatten,
    LeakyReLU,
    ReLU,
    Sequential,
    Sgd,
    Sigmoid,
    Tanh,
    softmax_cross_entropy,
)

from helpers import assert_grads_close, central_diff_grad


def small_net():
    return Sequential(
        [
            Conv2d(2, 3, 3, stride=2, pad=1),
            ReLU(),
            Flatten(),
            Dense(3 * 4 * 4, 5),
        ]
    )


def test_param_vector_roundtrip(rng):
    net = small_net().init_params(rng)
    vec = net.param_vector()
    assert vec.shape == (net.num_params,)
    net.set_param_vector(np.zeros_like(vec))
    assert np.all(net.param_vector() == 0)
    net.set_param_vector(vec)
    np.testing.assert_array_equal(net.param_vector(), vec)
    with pytest.raises(ValueError):
        net.set_param_vector(vec[:-1])


def test_state_vector_roundtrip(rng):
    net = Sequential([Conv2d(1, 2, 3, 2, 1), BatchNorm2d(2), ReLU(), Flatten(), Dense(2 * 4 * 4, 3)])
    net.init_params(rng)
    net.forward(rng.normal(size=(4, 1, 8, 8)), train=True)  # move the running stats
    state = net.state_vector()
    assert state.shape == (net.num_params + net.num_buffers,)
    twin = Sequential([Conv2d(1, 2, 3, 2, 1), BatchNorm2d(2), ReLU(), Flatten(), Dense(2 * 4 * 4, 3)])
    twin.set_state_vector(state)
    x = rng.normal(size=(5, 1, 8, 8))
    np.testing.assert_array_equal(twin.forward(x, train=False), net.forward(x, train=False))


def _loss_through(net, x, h=None):
    """Deterministic scalar readout for finite-difference checks."""
    weights = np.linspace(0.5, 1.5, int(np.prod(net.forward(x, train=True).shape)))

    def f(theta):
        net.set_param_vector(theta)
        y = net.forward(x, train=True)
        return float((y.reshape(-1) * weights).sum())

    def analytic(theta):
        net.set_param_vector(theta)
        y = net.forward(x, train=True)
        net.zero_grad()
        net.backward(weights.reshape(y.shape))
        return net.grad_vector.copy()

    return f, analytic


@pytest.mark.parametrize(
    "layers,in_shape",
    [
        ([Dense(6, 4)], (3, 6)),
        ([Conv2d(2, 3, 3, 1, 1), ReLU(), Flatten(), Dense(3 * 6 * 6, 2)], (2, 2, 6, 6)),
        ([ConvTranspose2d(3, 2, 4, 2, 1), Tanh(), Flatten(), Dense(2 * 8 * 8, 2)], (2, 3, 4, 4)),
        ([Conv2d(1, 4, 3, 2, 1), BatchNorm2d(4), LeakyReLU(0.2), Flatten(), Dense(4 * 4 * 4, 3)], (4, 1, 8, 8)),
        ([ConvTranspose2d(2, 3, 4, 1, 0), BatchNorm2d(3), ReLU(), Flatten(), Dense(3 * 4 * 4, 2)], (3, 2, 1, 1)),
        ([Conv2d(2, 2, 4, 2, 1), Sigmoid(), Flatten(), Dense(2 * 4 * 4, 1)], (2, 2, 8, 8)),
    ],
)
def test_layer_gradients_match_finite_differences(layers, in_shape, rng):
    net = Sequential(layers).init_params(rng)
    x = rng.normal(size=in_shape)
    f, analytic = _loss_through(net, x)
    theta = net.param_vector()
    assert_grads_close(analytic(theta), central_diff_grad(f, theta), rel_tol=1e-6, abs_tol=1e-7)


def test_input_gradient_matches_finite_differences(rng):
    net = Sequential([Conv2d(2, 3, 3, 2, 1), ReLU(), Flatten(), Dense(3 * 3 * 3, 2)])
    net.init_params(rng)
    x = rng.normal(size=(2, 2, 5, 5))
    w = np.linspace(-1, 1, 4)
    y = net.forward(x, train=True)
    net.zero_grad()
    gx = net.backward(w.reshape(y.shape))
    num = np.zeros_like(x)
    h = 1e-6
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        num[idx] = (
            (net.forward(xp, train=True).reshape(-1) * w).sum()
            - (net.forward(xm, train=True).reshape(-1) * w).sum()
        ) / (2 * h)
    assert_grads_close(gx.reshape(-1), num.reshape(-1), rel_tol=1e-6, abs_tol=1e-7)


def test_batchnorm_train_vs_eval(rng):
    net = Sequential([BatchNorm2d(3)]).init_params(rng)
    x = rng.normal(loc=2.0, scale=3.0, size=(16, 3, 4, 4))
    y = net.forward(x, train=True)
    # train mode normalizes with batch statistics
    assert abs(y.mean()) < 1e-10
    assert abs(y.var() - 1.0) < 1e-2
    # eval mode uses the (partially updated) running stats: deterministic, repeatable
    e1 = net.forward(x, train=False)
    e2 = net.forward(x, train=False)
    np.testing.assert_array_equal(e1, e2)


def test_softmax_cross_entropy_gradient(rng):
    logits = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, size=5)
    _, grad = softmax_cross_entropy(logits, labels)

    def f(vec):
        return softmax_cross_entropy(vec.reshape(5, 4), labels)[0]

    num = central_diff_grad(f, logits.reshape(-1))
    assert_grads_close(grad.reshape(-1), num, rel_tol=1e-7, abs_tol=1e-9)


def test_softmax_cross_entropy_known_value():
    logits = np.zeros((2, 4))
    loss, _ = softmax_cross_entropy(logits, np.array([0, 3]))
    assert np.isclose(loss, np.log(4.0))


def test_sgd_and_adam_step(rng):
    net = Sequential([Dense(3, 2)]).init_params(rng)
    theta = net.param_vector()
    net.zero_grad()
    net._grads[...] = 1.0
    Sgd(net, 0.1).step()
    np.testing.assert_allclose(net.param_vector(), theta - 0.1, atol=1e-15)

    net.set_param_vector(theta)
    opt = Adam(net, 0.1)
    net.zero_grad()
    net._grads[...] = 3.0
    opt.step()
    # first Adam step has magnitude ~lr regardless of gradient scale
    np.testing.assert_allclose(net.param_vector(), theta - 0.1 * 3.0 / (3.0 + 1e-8), atol=1e-12)
