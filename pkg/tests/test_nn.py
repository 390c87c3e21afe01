import numpy as np
import pytest

from secure_lawn._validation import InputError
from secure_lawn.nn import Adam, Mlp, soft_update


def _naive_forward(net, x):
    """Explicit-loop matrix arithmetic, independent of numpy matmul."""
    out = []
    for row in x:
        h = list(row)
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            z = [sum(h[k] * w[k, j] for k in range(w.shape[0])) + b[j] for j in range(w.shape[1])]
            h = z if i == len(net.weights) - 1 else [max(v, 0.0) for v in z]
        out.append(h)
    return np.array(out)


def test_zero_net_outputs_zero():
    net = Mlp([5, 8, 3])
    np.testing.assert_array_equal(net(np.ones((2, 5))), np.zeros((2, 3)))


def test_identity_linear_layer():
    net = Mlp([3, 3])
    net.weights[0][...] = np.eye(3)
    x = np.array([[1.0, -2.0, 3.5]])
    np.testing.assert_array_equal(net(x), x)


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(0)
    net = Mlp([6, 16, 16, 4], rng)
    x = rng.normal(size=(5, 6))
    np.testing.assert_allclose(net(x), _naive_forward(net, x), rtol=1e-12, atol=1e-12)


def test_input_width_checked():
    with pytest.raises(InputError):
        Mlp([3, 2])(np.ones((1, 4)))
    with pytest.raises(InputError):
        Mlp([3])


def test_linear_unit_gradient_example():
    net = Mlp([1, 1])
    net.weights[0][0, 0] = 1.0
    x = np.array([[2.0]])
    y, cache = net.forward(x, keep=True)
    # L = (w x - 0)^2 -> dL/dw = 2 (w x) x = 8
    grads, _ = net.backward(cache, 2.0 * y)
    assert grads[0][0, 0] == 8.0


def test_zero_loss_gives_zero_gradients():
    rng = np.random.default_rng(1)
    net = Mlp([4, 8, 2], rng)
    _, cache = net.forward(rng.normal(size=(3, 4)), keep=True)
    grads, _ = net.backward(cache, np.zeros((3, 2)))
    assert all(np.all(g == 0) for g in grads)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(2)
    net = Mlp([10, 128, 128, 3], rng)
    x = rng.normal(size=(16, 10))
    target = rng.normal(size=(16, 3))

    def loss():
        return float(np.mean((net(x) - target) ** 2))

    y, cache = net.forward(x, keep=True)
    grads, g_in = net.backward(cache, 2.0 * (y - target) / y.size, need_input_grad=True)
    h = 1e-5
    for p, g in zip(net.params, grads):
        flat = p.reshape(-1)
        for i in rng.choice(flat.size, size=min(20, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + h
            up = loss()
            flat[i] = old - h
            down = loss()
            flat[i] = old
            num = (up - down) / (2 * h)
            assert abs(num - g.reshape(-1)[i]) <= 1e-4 * max(abs(num), abs(g.reshape(-1)[i]), 1e-6)
    # input gradient too
    for i, j in [(0, 0), (3, 7), (15, 9)]:
        old = x[i, j]
        x[i, j] = old + h
        up = loss()
        x[i, j] = old - h
        down = loss()
        x[i, j] = old
        num = (up - down) / (2 * h)
        assert abs(num - g_in[i, j]) <= 1e-4 * max(abs(num), 1e-6)


def test_soft_update_examples():
    rng = np.random.default_rng(3)
    online = Mlp([2, 3, 1], rng)
    target = Mlp([2, 3, 1])
    soft_update(target, online, 1.0)
    assert all(np.array_equal(a, b) for a, b in zip(target.params, online.params))

    target, online = Mlp([2, 3, 1]), Mlp([2, 3, 1])
    for p in online.params:
        p[...] = 1.0
    soft_update(target, online, 0.005)
    assert all(np.allclose(p, 0.005, rtol=0, atol=1e-16) for p in target.params)
    with pytest.raises(InputError):
        soft_update(target, online, 0.0)
    with pytest.raises(InputError):
        soft_update(target, Mlp([2, 4, 1]), 0.5)


def test_copy_is_independent():
    net = Mlp([2, 3, 1], np.random.default_rng(4))
    clone = net.copy()
    clone.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != clone.weights[0][0, 0]


def test_load_state_in_place():
    rng = np.random.default_rng(5)
    a, b = Mlp([3, 4, 2], rng), Mlp([3, 4, 2], rng)
    before = a.weights[0]
    a.load_state(b.state())
    assert a.weights[0] is before
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))


def test_adam_first_step_moves_by_lr():
    p = np.array([1.0, -2.0])
    opt = Adam([p], lr=0.1)
    opt.step([np.array([3.0, -0.5])])
    # bias-corrected first step is lr * sign(g) up to eps
    np.testing.assert_allclose(p, [0.9, -1.9], atol=1e-8)


def test_adam_minimizes_quadratic():
    p = np.array([5.0])
    opt = Adam([p], lr=0.05)
    for _ in range(2000):
        opt.step([2 * p])
    assert abs(p[0]) < 1e-2
