import numpy as np
import pytest

from snnexplain.layers import LayerSpec, ShapeError
from snnexplain.network import (backward, build_network, forward, grad_check,
                                l2_regularizer, max_rel_err_vs_fd, zero_grads)


def identity_dense(n):
    net = build_network([LayerSpec("Dense", units=n)], (n,), 0)
    net.params[0][0][:] = np.eye(n)
    net.params[0][1][:] = 0.0
    return net


def test_identity_dense_forward():
    net = identity_dense(3)
    x = np.array([0.3, -1.2, 2.0])
    np.testing.assert_array_equal(forward(net, x)[-1], x)


def test_dense_gradient_outer_product():
    # For loss = g . (Wx + b), dL/dW = x g^T and dL/db = g exactly.
    net = build_network([LayerSpec("Dense", units=2)], (3,), 5)
    x = np.array([1.0, -2.0, 0.5])
    g = np.array([0.7, -0.3])
    acts = forward(net, x)
    grads, gx = backward(net, acts, g)
    np.testing.assert_allclose(grads[0][0], np.outer(x, g), rtol=0, atol=1e-15)
    np.testing.assert_allclose(grads[0][1], g, rtol=0, atol=1e-15)
    np.testing.assert_allclose(gx, net.params[0][0] @ g, rtol=0, atol=1e-15)


def test_grad_check_small_conv_net():
    net = build_network([LayerSpec("Conv2D", filters=2), LayerSpec("ReLU"),
                         LayerSpec("MaxPool2D"), LayerSpec("Flatten"),
                         LayerSpec("Dense", units=3), LayerSpec("Sigmoid")],
                        (4, 4, 1), 11)
    x = np.random.default_rng(0).uniform(size=(4, 4, 1))
    err = grad_check(net, lambda out: float(np.sum(out ** 2)), x, 1e-5)
    assert err <= 1e-4


def test_grad_check_linear_is_tight():
    net = build_network([LayerSpec("Dense", units=2)], (3,), 1)
    x = np.array([0.1, 0.2, -0.3])
    err = grad_check(net, lambda out: float(np.sum(out)), x, 1e-5)
    assert err <= 1e-9


def test_grad_check_rejects_zero_step():
    net = identity_dense(2)
    with pytest.raises(ValueError, match="step"):
        grad_check(net, lambda out: float(np.sum(out)), np.zeros(2), 0.0)


def test_grad_check_rejects_nonfinite_loss():
    net = identity_dense(2)
    with pytest.raises(ValueError, match="finite"):
        grad_check(net, lambda out: float("nan"), np.zeros(2), 1e-5)


def test_l2_regularizer_values():
    net = build_network([LayerSpec("Dense", units=2)], (2,), 0)
    net.params[0][0][:] = [[1.0, 2.0], [0.0, -1.0]]
    net.params[0][1][:] = [10.0, -10.0]  # biases must not contribute
    value, grads = l2_regularizer(net)
    assert value == 6.0
    np.testing.assert_array_equal(grads[0][0], 2.0 * net.params[0][0])
    np.testing.assert_array_equal(grads[0][1], 0.0)


def test_l2_regularizer_zero_weights():
    net = build_network([LayerSpec("Dense", units=3)], (4,), 0)
    net.params[0][0][:] = 0.0
    assert l2_regularizer(net)[0] == 0.0


def test_max_rel_err_atol_skips_exact_zeros():
    # Constant objective: analytic gradient identically zero must pass.
    net = build_network([LayerSpec("Dense", units=2)], (2,), 0)
    analytic = zero_grads(net)
    err = max_rel_err_vs_fd(net, lambda: 1.0, analytic, 1e-5, atol=1e-8)
    assert err == 0.0


def test_forward_rejects_wrong_input_shape():
    net = identity_dense(3)
    with pytest.raises(ShapeError, match="shape"):
        forward(net, np.zeros(4))


def test_backward_rejects_wrong_activation_count():
    net = identity_dense(3)
    acts = forward(net, np.zeros(3))
    with pytest.raises(ShapeError, match="activations"):
        backward(net, acts[:-1], np.zeros(3))


def test_batch_matches_loop_of_singles():
    net = build_network([LayerSpec("Dense", units=4), LayerSpec("ReLU"),
                         LayerSpec("Dense", units=2)], (3,), 3)
    xs = np.random.default_rng(4).normal(size=(5, 3))
    batched = forward(net, xs)[-1]
    singles = np.stack([forward(net, x)[-1] for x in xs])
    # BLAS may reorder the batched matmul; agreement is to machine precision.
    np.testing.assert_allclose(batched, singles, rtol=0, atol=1e-12)


def test_init_is_seeded_and_bounded():
    a = build_network([LayerSpec("Dense", units=8)], (16,), 42)
    b = build_network([LayerSpec("Dense", units=8)], (16,), 42)
    c = build_network([LayerSpec("Dense", units=8)], (16,), 43)
    assert (a.params[0][0] == b.params[0][0]).all()
    assert not (a.params[0][0] == c.params[0][0]).all()
    limit = np.sqrt(6.0 / 16)
    assert np.abs(a.params[0][0]).max() <= limit
    assert (a.params[0][1] == 0.0).all()
