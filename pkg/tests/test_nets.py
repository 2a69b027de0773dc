import numpy as np
import pytest

from caora.nets import Adam, MlpNet


def _loss_and_grads(net, x, g):
    """Linear functional sum(output * g); backward's exact contract."""
    y, cache = net.forward_cached(x)
    grads, grad_in = net.backward(cache, g)
    return float((y * g).sum()), grads, grad_in


def _fd_param(net, x, g, layer, which, index, h=1e-6):
    arr = net.weights[layer] if which == "w" else net.biases[layer]
    orig = arr[index]
    arr[index] = orig + h
    up = float((net.forward(x) * g).sum())
    arr[index] = orig - h
    down = float((net.forward(x) * g).sum())
    arr[index] = orig
    return (up - down) / (2 * h)


def test_zero_network_gives_zero_output():
    net = MlpNet([3, 4, 2], rng=np.random.default_rng(0))
    for w in net.weights:
        w[...] = 0.0
    x = np.ones((5, 3))
    assert np.all(net.forward(x) == 0.0)


def test_single_layer_identity_passes_input_through():
    net = MlpNet([3, 3], rng=np.random.default_rng(0))
    net.weights[0][...] = np.eye(3)
    net.biases[0][...] = 0.0
    x = np.random.default_rng(1).normal(size=(4, 3))
    assert np.allclose(net.forward(x), x)


def test_forward_matches_independent_matrix_product_oracle():
    rng = np.random.default_rng(5)
    net = MlpNet([4, 8, 8, 3], activation="tanh", rng=rng)
    x = rng.normal(size=(6, 4))
    # Recompute by hand with plain matrix products.
    h = np.tanh(x @ net.weights[0] + net.biases[0])
    h = np.tanh(h @ net.weights[1] + net.biases[1])
    expect = h @ net.weights[2] + net.biases[2]
    assert np.allclose(net.forward(x), expect, atol=1e-12)


def test_forward_rejects_dimension_mismatch():
    net = MlpNet([4, 8, 2], rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.forward(np.zeros((3, 5)))


def test_backward_rejects_missing_cache():
    net = MlpNet([4, 8, 2], rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.backward({}, np.zeros((1, 2)))


def test_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(2)
    net = MlpNet([4, 8, 2], rng=rng)
    x = rng.normal(size=(5, 4))
    _, grads, grad_in = _loss_and_grads(net, x, np.zeros((5, 2)))
    assert all(np.all(dw == 0) and np.all(db == 0) for dw, db in grads)
    assert np.all(grad_in == 0)


def test_linear_net_weight_grad_is_input_outer_product():
    rng = np.random.default_rng(3)
    net = MlpNet([3, 2], rng=rng)
    x = rng.normal(size=(4, 3))
    g = rng.normal(size=(4, 2))
    _, grads, _ = _loss_and_grads(net, x, g)
    assert np.allclose(grads[0][0], x.T @ g, atol=1e-12)
    assert np.allclose(grads[0][1], g.sum(axis=0), atol=1e-12)


def test_gradients_match_finite_differences_on_random_configs():
    # 100 random shapes/activations; a few parameters probed per net.
    rng = np.random.default_rng(71)
    for trial in range(100):
        dims = [int(rng.integers(1, 6)) for _ in range(int(rng.integers(2, 5)))]
        activation = "relu" if trial % 2 == 0 else "tanh"
        net = MlpNet(dims, activation=activation, rng=rng, out_scale=0.5)
        for b in net.biases:
            # Zero biases can park ReLU pre-activations exactly on the kink,
            # where central differences measure the half-slope.
            b[...] = rng.normal(0.0, 0.3, size=b.shape)
        x = rng.normal(size=(3, dims[0]))
        g = rng.normal(size=(3, dims[-1]))
        _, grads, grad_in = _loss_and_grads(net, x, g)
        for _ in range(3):
            layer = int(rng.integers(0, net.n_layers))
            if rng.random() < 0.7:
                which = "w"
                index = (
                    int(rng.integers(0, net.weights[layer].shape[0])),
                    int(rng.integers(0, net.weights[layer].shape[1])),
                )
                analytic = grads[layer][0][index]
            else:
                which = "b"
                index = int(rng.integers(0, net.biases[layer].shape[0]))
                analytic = grads[layer][1][index]
            fd = _fd_param(net, x, g, layer, which, index)
            denom = max(abs(analytic), abs(fd), 1e-8)
            assert abs(analytic - fd) / denom < 1e-4, (
                f"trial={trial} layer={layer} {which}{index}: {analytic} vs {fd}"
            )
        # Input gradient against differences too.
        i, j = int(rng.integers(0, 3)), int(rng.integers(0, dims[0]))
        h = 1e-6
        xp = x.copy()
        xp[i, j] += h
        up = float((net.forward(xp) * g).sum())
        xp[i, j] -= 2 * h
        down = float((net.forward(xp) * g).sum())
        fd_in = (up - down) / (2 * h)
        denom = max(abs(grad_in[i, j]), abs(fd_in), 1e-8)
        assert abs(grad_in[i, j] - fd_in) / denom < 1e-4


def test_soft_update_moves_exactly_tau_fraction():
    rng = np.random.default_rng(9)
    online = MlpNet([3, 4, 2], rng=rng)
    target = MlpNet([3, 4, 2], rng=rng)
    before = [p.copy() for p in target.param_arrays()]
    tau = 0.005
    target.soft_update_from(online, tau)
    for b, t, o in zip(before, target.param_arrays(), online.param_arrays()):
        assert np.allclose(t - b, tau * (o - b), atol=1e-15)


def test_adam_descends_on_a_quadratic():
    rng = np.random.default_rng(4)
    net = MlpNet([2, 1], rng=rng)
    target = np.array([[0.7], [-0.3]])
    opt = Adam(net, lr=0.05)
    x = rng.normal(size=(64, 2))
    y = x @ target

    def loss():
        return float(np.mean((net.forward(x) - y) ** 2))

    first = loss()
    for _ in range(300):
        pred, cache = net.forward_cached(x)
        grads, _ = net.backward(cache, 2.0 * (pred - y) / len(x))
        opt.step(grads)
    assert loss() < first * 1e-3


def test_adam_global_norm_clip_scales_update():
    rng = np.random.default_rng(6)
    net = MlpNet([2, 2], rng=rng)
    net.weights[0][...] = 0.0
    net.biases[0][...] = 0.0
    opt = Adam(net, lr=1.0, grad_clip=1.0)
    big = [(np.full((2, 2), 100.0), np.full(2, 100.0))]
    opt.step(big)
    # After clipping, the applied gradient had unit norm; Adam's first step
    # is lr * g / (|g| + eps) elementwise, so every entry is below lr.
    assert np.all(np.abs(net.weights[0]) <= 1.0 + 1e-9)


def test_copy_is_independent():
    net = MlpNet([2, 3, 1], rng=np.random.default_rng(8))
    clone = net.copy()
    clone.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != clone.weights[0][0, 0]
