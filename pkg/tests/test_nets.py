import numpy as np
import pytest

from e2o import nets
from e2o.errors import ConfigError, ShapeError


def test_zero_net_maps_to_zero():
    net = nets.mlp_zeros((3, 4, 2))
    x = np.random.default_rng(0).standard_normal((5, 3)).astype(np.float32)
    assert np.array_equal(nets.forward(net, x), np.zeros((5, 2), np.float32))


def test_single_linear_layer_affine_map():
    net = nets.mlp_zeros((1, 1))
    net.weights = np.array([2.0], np.float32)
    net.biases = np.array([1.0], np.float32)
    y = nets.forward(net, np.array([3.0], np.float32))
    assert y.shape == (1,)
    assert y[0] == pytest.approx(7.0)


def test_forward_matches_dense_matrix_oracle():
    # independent oracle: explicit per-layer matmuls on unpacked matrices
    rng = np.random.default_rng(42)
    dims = (4, 16, 8, 3)
    net = nets.mlp_init(dims, rng)
    x = rng.standard_normal((7, 4)).astype(np.float32)
    h = x.astype(np.float64)
    wo = bo = 0
    for i in range(len(dims) - 1):
        w = net.weights[wo:wo + dims[i] * dims[i + 1]].astype(np.float64).reshape(dims[i], dims[i + 1])
        b = net.biases[bo:bo + dims[i + 1]].astype(np.float64)
        h = h @ w + b
        if i < len(dims) - 2:
            h = np.maximum(h, 0.0)
        wo += dims[i] * dims[i + 1]
        bo += dims[i + 1]
    y = nets.forward(net, x)
    assert np.max(np.abs(y - h)) < 1e-6 * max(1.0, np.max(np.abs(h)))


def test_forward_is_pure_and_deterministic():
    rng = np.random.default_rng(1)
    net = nets.mlp_init((3, 8, 2), rng)
    x = rng.standard_normal((4, 3)).astype(np.float32)
    w0, b0 = net.weights.copy(), net.biases.copy()
    y1 = nets.forward(net, x)
    y2 = nets.forward(net, x)
    assert np.array_equal(y1, y2)
    assert np.array_equal(net.weights, w0) and np.array_equal(net.biases, b0)


def test_forward_rejects_wrong_width():
    net = nets.mlp_zeros((3, 2))
    with pytest.raises(ShapeError, match="3"):
        nets.forward(net, np.zeros((4, 5), np.float32))


def test_backward_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(2)
    net = nets.mlp_init((3, 8, 2), rng)
    x = rng.standard_normal((4, 3)).astype(np.float32)
    g, gx = nets.backward(net, x, np.zeros((4, 2), np.float32))
    assert np.array_equal(g, np.zeros(nets.param_count(net), np.float32))
    assert np.array_equal(gx, np.zeros_like(x))


def test_backward_single_linear_layer():
    net = nets.mlp_zeros((3, 1))
    x = np.array([[1.0, 2.0, 3.0]], np.float32)
    g, gx = nets.backward(net, x, np.array([[1.0]], np.float32))
    # weight grad equals the input, bias grad equals the upstream
    assert np.allclose(g[:3], [1.0, 2.0, 3.0])
    assert g[3] == pytest.approx(1.0)
    assert np.array_equal(gx, np.zeros_like(x))


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(7)  # fixed: keeps relu kinks away from the FD window
    net = nets.mlp_init((4, 12, 12, 2), rng)
    x = rng.standard_normal((5, 4)).astype(np.float64)
    up = rng.standard_normal((5, 2)).astype(np.float64)

    def loss(p):
        return float((nets.forward(net, x, p) * up).sum())

    def grad(p):
        return nets.backward(net, x, up, p)[0]

    err = nets.grad_check(loss, grad, nets.get_params(net).astype(np.float64))
    assert err <= 1e-4


def test_param_roundtrip_and_count():
    rng = np.random.default_rng(3)
    net = nets.mlp_init((5, 7, 2), rng)
    p = nets.get_params(net)
    assert p.size == nets.param_count(net) == 5 * 7 + 7 * 2 + 7 + 2
    other = nets.mlp_zeros((5, 7, 2))
    nets.set_params(other, p)
    assert np.array_equal(other.weights, net.weights)
    assert np.array_equal(other.biases, net.biases)


def test_adam_zero_gradient_is_identity():
    state = nets.adam_init(4, 1e-3)
    p = np.array([1.0, -2.0, 3.0, 0.5], np.float32)
    p2, s2 = nets.adam_step(p, np.zeros(4, np.float32), state)
    assert np.array_equal(p2, p)
    assert s2.step_count == 1


def test_adam_first_step_magnitude_is_learning_rate():
    state = nets.adam_init(3, 0.01)
    g = np.array([0.5, -2.0, 10.0], np.float32)
    p2, _ = nets.adam_step(np.zeros(3, np.float32), g, state)
    # first bias-corrected step is -lr * g / (|g| + eps)
    assert np.allclose(np.abs(p2), 0.01, rtol=1e-4)
    assert np.all(np.sign(p2) == -np.sign(g))


def test_adam_descends_quadratic():
    # scalar simulation oracle in float64: 100 steps on 0.5*x^2 from x=5.
    # The oracle run decreases strictly through step 87, then dithers near 0.
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    ox, m, v = 5.0, 0.0, 0.0
    oracle = [ox]
    for t in range(1, 101):
        g = ox
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ox -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
        oracle.append(ox)

    state = nets.adam_init(1, 0.1)
    x = np.array([5.0], np.float32)
    trail = [float(x[0])]
    for _ in range(100):
        x, state = nets.adam_step(x, x.copy(), state)
        trail.append(float(x[0]))
    assert np.allclose(trail, oracle, atol=1e-3)
    descent = trail[:88]
    assert all(abs(b) < abs(a) for a, b in zip(descent, descent[1:]))
    assert abs(trail[-1]) < 1.0


def test_adam_shape_mismatch():
    state = nets.adam_init(3, 1e-3)
    with pytest.raises(ShapeError):
        nets.adam_step(np.zeros(4, np.float32), np.zeros(4, np.float32), state)


def test_polyak_tau_one_copies_online():
    t = np.zeros(4, np.float32)
    o = np.array([1.0, 2.0, 3.0, 4.0], np.float32)
    assert np.array_equal(nets.polyak_update(t, o, 1.0), o)


def test_polyak_small_tau_value():
    out = nets.polyak_update(np.zeros(1, np.float32), np.ones(1, np.float32), 0.005)
    assert out[0] == pytest.approx(0.005)


def test_polyak_geometric_convergence():
    tau = 0.1
    target = np.zeros(1, np.float64)
    online = np.ones(1, np.float64)
    for k in range(1, 21):
        target = nets.polyak_update(target, online, tau)
        assert abs((1.0 - target[0]) - (1 - tau) ** k) < 1e-12


def test_polyak_rejects_tau_outside_range():
    for tau in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            nets.polyak_update(np.zeros(2, np.float32), np.ones(2, np.float32), tau)


def test_polyak_tau_to_zero_limit_approaches_identity():
    t = np.array([2.0], np.float64)
    o = np.array([5.0], np.float64)
    for tau in (1e-3, 1e-5, 1e-7):
        out = nets.polyak_update(t, o, tau)
        assert abs(out[0] - t[0]) <= tau * abs(o[0] - t[0]) + 1e-12


def test_grad_check_linear_loss_is_exact():
    rng = np.random.default_rng(11)
    w = rng.standard_normal(10)

    def loss(p):
        return float(w @ p)

    def grad(p):
        return w

    err = nets.grad_check(loss, grad, rng.standard_normal(10))
    assert err <= 1e-10


def test_grad_check_flags_nonfinite_loss():
    def loss(p):
        return float("nan")

    def grad(p):
        return np.zeros_like(p)

    from e2o.errors import DiagnosticError
    with pytest.raises(DiagnosticError):
        nets.grad_check(loss, grad, np.zeros(2))


def test_snapshot_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    net = nets.mlp_init((3, 16, 1), rng)
    path = tmp_path / "net.e2ow"
    nets.save_weights(net, path)
    first = path.read_bytes()
    loaded = nets.load_weights(path)
    assert loaded.layer_dims == net.layer_dims
    assert np.array_equal(loaded.weights, net.weights)
    assert np.array_equal(loaded.biases, net.biases)
    nets.save_weights(loaded, path)
    assert path.read_bytes() == first


def test_snapshot_rejects_bad_magic(tmp_path):
    from e2o.errors import FormatError
    path = tmp_path / "bad.e2ow"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(FormatError):
        nets.load_weights(path)


def test_tanh_activation_backward():
    rng = np.random.default_rng(13)
    net = nets.mlp_init((3, 8, 2), rng, activations=("tanh", "identity"))
    x = rng.standard_normal((4, 3)).astype(np.float64)
    up = rng.standard_normal((4, 2)).astype(np.float64)

    def loss(p):
        return float((nets.forward(net, x, p) * up).sum())

    def grad(p):
        return nets.backward(net, x, up, p)[0]

    assert nets.grad_check(loss, grad, nets.get_params(net).astype(np.float64)) <= 1e-6
