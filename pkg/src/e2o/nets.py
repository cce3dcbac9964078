"""Minimal dense-network engine on flat parameter vectors.

Provides feed-forward MLPs with exact reverse-mode gradients, a bias-corrected
adaptive-moment optimizer, Polyak averaging, a finite-difference gradient
checker, and a binary weight-snapshot format ("E2OW").

Parameters and activations are single precision. Every evaluation function
accepts an override parameter vector, so oracle code can re-run the identical
math in double precision simply by passing a float64 vector.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DiagnosticError, FormatError, ShapeError

ACTIVATIONS = ("relu", "tanh", "identity")

SNAPSHOT_MAGIC = b"E2OW"
SNAPSHOT_VERSION = 1


@dataclass
class Mlp:
    """Feed-forward network with weights stored as one flat float32 vector.

    ``weights`` holds each layer's (fan_in, fan_out) matrix flattened in row-major
    order, layers concatenated first-to-last; ``biases`` holds the per-layer bias
    vectors in the same layer order. ``activations`` has one entry per layer
    transition (hidden layers plus output).
    """

    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.activations = tuple(self.activations)
        if len(self.layer_dims) < 2:
            raise ConfigError("an Mlp needs at least an input and an output layer")
        if any(d <= 0 for d in self.layer_dims):
            raise ConfigError(f"layer dims must be positive, got {self.layer_dims}")
        if len(self.activations) != len(self.layer_dims) - 1:
            raise ConfigError(
                f"need {len(self.layer_dims) - 1} activations, got {len(self.activations)}"
            )
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")
        n_w, n_b = weight_count(self.layer_dims), bias_count(self.layer_dims)
        if self.weights.shape != (n_w,):
            raise ShapeError(f"weights length {self.weights.shape} != expected ({n_w},)")
        if self.biases.shape != (n_b,):
            raise ShapeError(f"biases length {self.biases.shape} != expected ({n_b},)")

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]


def weight_count(layer_dims) -> int:
    return int(sum(layer_dims[i] * layer_dims[i + 1] for i in range(len(layer_dims) - 1)))


def bias_count(layer_dims) -> int:
    return int(sum(layer_dims[1:]))


def param_count(net: Mlp) -> int:
    return net.weights.size + net.biases.size


def default_activations(layer_dims, hidden: str = "relu") -> tuple[str, ...]:
    """Hidden layers use ``hidden``, the output layer is linear."""
    return tuple([hidden] * (len(layer_dims) - 2) + ["identity"])


def mlp_init(layer_dims, rng: np.random.Generator, activations=None) -> Mlp:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer."""
    layer_dims = tuple(int(d) for d in layer_dims)
    if activations is None:
        activations = default_activations(layer_dims)
    w_parts, b_parts = [], []
    for i in range(len(layer_dims) - 1):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        w_parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        b_parts.append(rng.uniform(-bound, bound, size=fan_out))
    weights = np.concatenate(w_parts).astype(np.float32)
    biases = np.concatenate(b_parts).astype(np.float32)
    return Mlp(layer_dims, tuple(activations), weights, biases)


def mlp_zeros(layer_dims, activations=None) -> Mlp:
    layer_dims = tuple(int(d) for d in layer_dims)
    if activations is None:
        activations = default_activations(layer_dims)
    return Mlp(
        layer_dims,
        tuple(activations),
        np.zeros(weight_count(layer_dims), dtype=np.float32),
        np.zeros(bias_count(layer_dims), dtype=np.float32),
    )


def clone_mlp(net: Mlp) -> Mlp:
    return Mlp(net.layer_dims, net.activations, net.weights.copy(), net.biases.copy())


def get_params(net: Mlp) -> np.ndarray:
    """Canonical flat parameter vector: weights followed by biases."""
    return np.concatenate([net.weights, net.biases])


def set_params(net: Mlp, params: np.ndarray) -> None:
    n_w = net.weights.size
    if params.shape != (n_w + net.biases.size,):
        raise ShapeError(
            f"parameter vector length {params.shape} != expected ({n_w + net.biases.size},)"
        )
    net.weights = params[:n_w].astype(np.float32)
    net.biases = params[n_w:].astype(np.float32)


def _layer_views(net: Mlp, params: np.ndarray | None):
    """Split a flat parameter vector into per-layer weight matrices and biases."""
    if params is None:
        w_flat, b_flat = net.weights, net.biases
    else:
        n_w = weight_count(net.layer_dims)
        if params.shape != (n_w + bias_count(net.layer_dims),):
            raise ShapeError(
                f"override parameter vector has length {params.shape}, "
                f"expected ({n_w + bias_count(net.layer_dims)},)"
            )
        w_flat, b_flat = params[:n_w], params[n_w:]
    ws, bs = [], []
    wo = bo = 0
    dims = net.layer_dims
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        ws.append(w_flat[wo : wo + fan_in * fan_out].reshape(fan_in, fan_out))
        bs.append(b_flat[bo : bo + fan_out])
        wo += fan_in * fan_out
        bo += fan_out
    return ws, bs


def _apply_activation(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(h: np.ndarray, act: str, dtype) -> np.ndarray | None:
    # Derivatives expressed through the post-activation value h.
    if act == "relu":
        return (h > 0).astype(dtype)
    if act == "tanh":
        return 1.0 - h * h
    return None  # identity


def _as_batch(x: np.ndarray, width: int, name: str):
    x = np.asarray(x)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{name} width {x.shape[-1] if x.ndim else '?'} != expected {width}")
    return x, squeeze


def forward(net: Mlp, x: np.ndarray, params: np.ndarray | None = None) -> np.ndarray:
    """Pure forward pass; computes in the dtype of the parameter vector."""
    y, _ = forward_cached(net, x, params)
    return y


def forward_cached(net: Mlp, x: np.ndarray, params: np.ndarray | None = None):
    """Forward pass that also returns the per-layer activations for backprop."""
    ws, bs = _layer_views(net, params)
    dtype = ws[0].dtype
    x, squeeze = _as_batch(x, net.in_dim, "input")
    h = x.astype(dtype, copy=False)
    cache = [h]
    for w, b, act in zip(ws, bs, net.activations):
        h = _apply_activation(h @ w + b, act)
        cache.append(h)
    return (h[0] if squeeze else h), (cache, squeeze)


def backward(
    net: Mlp,
    x: np.ndarray,
    upstream_grad: np.ndarray,
    params: np.ndarray | None = None,
):
    """Exact reverse-mode derivatives of :func:`forward`.

    Returns ``(param_grads, input_grads)`` where ``param_grads`` matches the
    canonical flat layout of :func:`get_params`.
    """
    _, cache = forward_cached(net, x, params)
    return backward_from_cache(net, cache, upstream_grad, params)


def backward_from_cache(net, cache, upstream_grad, params: np.ndarray | None = None):
    ws, bs = _layer_views(net, params)
    layers, squeeze = cache
    dtype = ws[0].dtype
    g, g_squeeze = _as_batch(upstream_grad, net.out_dim, "upstream_grad")
    if g_squeeze != squeeze or g.shape[0] != layers[0].shape[0]:
        raise ShapeError(
            f"upstream_grad batch {g.shape[0]} != forward batch {layers[0].shape[0]}"
        )
    g = g.astype(dtype, copy=False)
    w_grads = [None] * len(ws)
    b_grads = [None] * len(ws)
    for i in range(len(ws) - 1, -1, -1):
        act_grad = _activation_grad(layers[i + 1], net.activations[i], dtype)
        dz = g if act_grad is None else g * act_grad
        w_grads[i] = (layers[i].T @ dz).ravel()
        b_grads[i] = dz.sum(axis=0)
        g = dz @ ws[i].T
    param_grads = np.concatenate(w_grads + b_grads)
    return param_grads, (g[0] if squeeze else g)


def input_backward_from_cache(net, cache, upstream_grad, params: np.ndarray | None = None):
    """Input gradients only (skips the parameter-gradient matmuls)."""
    ws, _ = _layer_views(net, params)
    layers, squeeze = cache
    dtype = ws[0].dtype
    g, _ = _as_batch(upstream_grad, net.out_dim, "upstream_grad")
    g = g.astype(dtype, copy=False)
    for i in range(len(ws) - 1, -1, -1):
        act_grad = _activation_grad(layers[i + 1], net.activations[i], dtype)
        dz = g if act_grad is None else g * act_grad
        g = dz @ ws[i].T
    return g[0] if squeeze else g


@dataclass
class AdamState:
    """Moment estimates for one flat parameter vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.first_moment.shape != self.second_moment.shape:
            raise ShapeError("moment vectors must have identical length")
        if not (self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1/beta2 must lie in (0,1)")


def adam_init(n_params: int, learning_rate: float, **kwargs) -> AdamState:
    return AdamState(
        first_moment=np.zeros(n_params, dtype=np.float32),
        second_moment=np.zeros(n_params, dtype=np.float32),
        step_count=0,
        learning_rate=learning_rate,
        **kwargs,
    )


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected adaptive-moment update; returns (params', state')."""
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ShapeError(
            f"params {params.shape}, grads {grads.shape}, moments "
            f"{state.first_moment.shape} must all match"
        )
    grads = grads.astype(np.float32, copy=False)
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    t = state.step_count + 1
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        first_moment=m,
        second_moment=v,
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params.astype(np.float32), new_state


def polyak_update(target_params: np.ndarray, online_params: np.ndarray, tau: float) -> np.ndarray:
    """tau*online + (1-tau)*target, elementwise."""
    if not (0.0 < tau <= 1.0):
        raise ConfigError(f"tau must lie in (0, 1], got {tau}")
    if target_params.shape != online_params.shape:
        raise ShapeError(
            f"target {target_params.shape} and online {online_params.shape} lengths differ"
        )
    return (tau * online_params + (1.0 - tau) * target_params).astype(target_params.dtype)


def clip_grad_norm(grads: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grads.astype(np.float64)))
    if norm > max_norm > 0:
        return (grads * (max_norm / norm)).astype(grads.dtype)
    return grads


def grad_check(loss_fn, grad_fn, params: np.ndarray, step: float = 1e-4, indices=None) -> float:
    """Worst relative error of ``grad_fn`` vs central finite differences.

    Both callables receive a float64 parameter vector; ``loss_fn`` must be
    deterministic given its argument. ``indices`` restricts the sweep to a
    coordinate subset (all coordinates by default).
    """
    p = np.asarray(params, dtype=np.float64).copy()
    analytic = np.asarray(grad_fn(p), dtype=np.float64)
    if analytic.shape != p.shape:
        raise ShapeError(f"analytic gradient shape {analytic.shape} != params {p.shape}")
    if indices is None:
        indices = range(p.size)
    worst = 0.0
    for i in indices:
        orig = p[i]
        p[i] = orig + step
        f_plus = float(loss_fn(p))
        p[i] = orig - step
        f_minus = float(loss_fn(p))
        p[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise DiagnosticError(f"non-finite loss during finite differences at index {i}")
        fd = (f_plus - f_minus) / (2.0 * step)
        denom = max(abs(analytic[i]), abs(fd), 1e-6)
        worst = max(worst, abs(analytic[i] - fd) / denom)
    return worst


# --- "E2OW" binary snapshot -------------------------------------------------
#
# Layout (little-endian): magic "E2OW", version u32, layer count u32,
# layer dims u32 each, then weights and biases as contiguous float32 arrays.
# Activations are not stored; loaders supply them (default relu hidden,
# linear output).


def weights_to_bytes(net: Mlp) -> bytes:
    parts = [
        SNAPSHOT_MAGIC,
        struct.pack("<II", SNAPSHOT_VERSION, len(net.layer_dims)),
        struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims),
        net.weights.astype("<f4").tobytes(),
        net.biases.astype("<f4").tobytes(),
    ]
    return b"".join(parts)


def mlp_from_bytes(buf: bytes, activations=None) -> Mlp:
    if buf[:4] != SNAPSHOT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {SNAPSHOT_MAGIC!r}")
    version, n_layers = struct.unpack_from("<II", buf, 4)
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"unsupported snapshot version {version}")
    dims = struct.unpack_from(f"<{n_layers}I", buf, 12)
    off = 12 + 4 * n_layers
    n_w, n_b = weight_count(dims), bias_count(dims)
    expected = off + 4 * (n_w + n_b)
    if len(buf) != expected:
        raise FormatError(f"snapshot length {len(buf)} != expected {expected}")
    weights = np.frombuffer(buf, dtype="<f4", count=n_w, offset=off).copy()
    biases = np.frombuffer(buf, dtype="<f4", count=n_b, offset=off + 4 * n_w).copy()
    if activations is None:
        activations = default_activations(dims)
    return Mlp(tuple(dims), tuple(activations), weights, biases)


def save_weights(net: Mlp, path) -> None:
    with open(path, "wb") as f:
        f.write(weights_to_bytes(net))


def load_weights(path, activations=None) -> Mlp:
    with open(path, "rb") as f:
        return mlp_from_bytes(f.read(), activations)
