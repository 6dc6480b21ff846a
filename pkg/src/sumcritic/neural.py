"""Small dense networks with hand-written forward/backward passes and Adam.

Arrays are float64 throughout. A batch is a matrix of shape
``(batch_size, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.2
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
ACTIVATIONS = ("leaky_relu", "tanh", "linear")


def _activate(kind, z):
    if kind == "leaky_relu":
        return np.maximum(z, LEAKY_SLOPE * z)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_slope(kind, z, a):
    # leaky ReLU at exactly 0 takes the negative-slope branch
    if kind == "leaky_relu":
        s = (z > 0).astype(np.float64)
        s *= 1.0 - LEAKY_SLOPE
        s += LEAKY_SLOPE
        return s
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class Layer:
    """Affine map, optional batch norm, then an activation.

    Batch-normalized layers carry no bias: the batch-norm shift replaces it.
    """

    weight: np.ndarray
    bias: np.ndarray | None
    activation: str = "linear"
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    @property
    def batch_norm(self) -> bool:
        return self.gamma is not None

    @property
    def shape(self):
        return self.weight.shape

    def params(self) -> list[np.ndarray]:
        if self.batch_norm:
            return [self.weight, self.gamma, self.beta]
        return [self.weight, self.bias]


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ValueError(f"layer dims do not chain: {prev.shape} -> {nxt.shape}")
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].shape[1]

    @property
    def has_batch_norm(self) -> bool:
        return any(layer.batch_norm for layer in self.layers)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every array (parameters and running statistics) keyed by a stable name."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{i}.weight"] = layer.weight
            if layer.batch_norm:
                out[f"{i}.gamma"] = layer.gamma
                out[f"{i}.beta"] = layer.beta
                out[f"{i}.running_mean"] = layer.running_mean
                out[f"{i}.running_var"] = layer.running_var
            else:
                out[f"{i}.bias"] = layer.bias
        return out

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.state_arrays().values())


def glorot_uniform(fan_in, fan_out, rng):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def build_dense_net(sizes, activations, batch_norm, rng) -> DenseNet:
    """Build a net with ``len(sizes) - 1`` layers.

    ``activations`` and ``batch_norm`` give one entry per layer. Weights are
    Glorot-uniform, biases and batch-norm shifts zero, batch-norm scales one.
    """
    if len(activations) != len(sizes) - 1 or len(batch_norm) != len(sizes) - 1:
        raise ValueError("need one activation and one batch_norm flag per layer")
    layers = []
    for fan_in, fan_out, act, bn in zip(sizes[:-1], sizes[1:], activations, batch_norm):
        w = glorot_uniform(fan_in, fan_out, rng)
        if bn:
            layers.append(Layer(
                weight=w, bias=None, activation=act,
                gamma=np.ones(fan_out), beta=np.zeros(fan_out),
                running_mean=np.zeros(fan_out), running_var=np.ones(fan_out),
            ))
        else:
            layers.append(Layer(weight=w, bias=np.zeros(fan_out), activation=act))
    return DenseNet(layers)


def make_generator(noise_dim, widths, rng) -> DenseNet:
    """Batch-normalized leaky-ReLU hidden layers and a single tanh output unit."""
    sizes = [noise_dim, *widths, 1]
    acts = ["leaky_relu"] * len(widths) + ["tanh"]
    bn = [True] * len(widths) + [False]
    return build_dense_net(sizes, acts, bn, rng)


def make_mlp_critic(widths, rng, input_dim=1) -> DenseNet:
    """Leaky-ReLU hidden layers, linear scalar output, no batch norm."""
    sizes = [input_dim, *widths, 1]
    acts = ["leaky_relu"] * len(widths) + ["linear"]
    return build_dense_net(sizes, acts, [False] * (len(widths) + 1), rng)


@dataclass
class ForwardCache:
    net: DenseNet
    mode: str
    inputs: list = field(default_factory=list)  # layer inputs
    zhat: list = field(default_factory=list)  # normalized pre-activations (bn layers)
    inv_std: list = field(default_factory=list)
    pre: list = field(default_factory=list)  # activation inputs
    outs: list = field(default_factory=list)  # activation outputs


def forward(net: DenseNet, batch, mode="train"):
    """Run the network; returns ``(outputs, cache)``.

    In train mode batch-norm layers use batch statistics and update their
    running statistics; in eval mode they use the running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    h = np.asarray(batch, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ValueError(f"expected batch of shape (n, {net.input_dim}), got {h.shape}")
    if mode == "train" and net.has_batch_norm and h.shape[0] < 2:
        raise ValueError("batch norm in train mode needs at least 2 samples")

    cache = ForwardCache(net=net, mode=mode)
    for layer in net.layers:
        cache.inputs.append(h)
        z = h @ layer.weight
        if layer.batch_norm:
            if mode == "train":
                mean = z.mean(axis=0)
                zhat = z - mean
                var = np.einsum("ij,ij->j", zhat, zhat) / z.shape[0]
                layer.running_mean *= BN_MOMENTUM
                layer.running_mean += (1 - BN_MOMENTUM) * mean
                layer.running_var *= BN_MOMENTUM
                layer.running_var += (1 - BN_MOMENTUM) * var
            else:
                zhat = z - layer.running_mean
                var = layer.running_var
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            zhat *= inv_std
            cache.zhat.append(zhat)
            cache.inv_std.append(inv_std)
            y = zhat * layer.gamma + layer.beta
        else:
            cache.zhat.append(None)
            cache.inv_std.append(None)
            y = z + layer.bias
        h = _activate(layer.activation, y)
        cache.pre.append(y)
        cache.outs.append(h)
    return h, cache


def _check_cache(net, cache):
    if not isinstance(cache, ForwardCache) or cache.net is not net:
        raise ValueError("cache does not belong to this network")
    if len(cache.inputs) != len(net.layers):
        raise ValueError("stale cache: layer count changed")
    if net.has_batch_norm and cache.mode != "train":
        raise ValueError("backward through batch norm needs a train-mode cache")


def backward(net: DenseNet, cache: ForwardCache, grad_output):
    """Backpropagate ``grad_output`` (dLoss/doutputs).

    Returns ``(param_grads, input_grads)`` with ``param_grads`` ordered like
    ``net.params()``.
    """
    _check_cache(net, cache)
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != cache.outs[-1].shape:
        raise ValueError(f"grad_output shape {g.shape} != output shape {cache.outs[-1].shape}")

    grads_rev = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        g = g * _activation_slope(layer.activation, cache.pre[i], cache.outs[i])
        if layer.batch_norm:
            zhat = cache.zhat[i]
            dgamma = np.sum(g * zhat, axis=0)
            dbeta = np.sum(g, axis=0)
            dzhat = g * layer.gamma
            n = g.shape[0]
            g = (cache.inv_std[i] / n) * (
                n * dzhat - dzhat.sum(axis=0) - zhat * np.sum(dzhat * zhat, axis=0)
            )
            dw = cache.inputs[i].T @ g
            grads_rev.append([dw, dgamma, dbeta])
        else:
            dw = cache.inputs[i].T @ g
            grads_rev.append([dw, g.sum(axis=0)])
        g = g @ layer.weight.T
    param_grads = [p for group in reversed(grads_rev) for p in group]
    return param_grads, g


def input_gradient(net: DenseNet, batch) -> np.ndarray:
    """df/dx per sample for a scalar-output, scalar-input net without batch norm."""
    if net.has_batch_norm:
        raise ValueError("per-sample input gradients are undefined with batch norm")
    out, cache = forward(net, batch, mode="eval")
    _, dx = backward(net, cache, np.ones_like(out))
    return dx


def input_gradient_param_grads(net: DenseNet, cache: ForwardCache, weights):
    """Gradient-of-gradient for piecewise-linear nets with scalar input and output.

    With ``g_i = df/dx`` at sample ``i`` of the cached batch, returns
    ``(g, grads)`` where ``grads`` (ordered like ``net.params()``) is the
    gradient of ``sum_i weights[i] * g_i`` with respect to every parameter.
    ``weights`` may be a callable, in which case it receives ``g`` first.
    Activation slopes are piecewise constant, so biases get zero gradient and
    each weight matrix gets a sum of outer products of forward tangents and
    backward adjoints.
    """
    _check_cache(net, cache)
    if net.has_batch_norm:
        raise ValueError("double backward is only implemented for nets without batch norm")
    if net.input_dim != 1 or net.output_dim != 1:
        raise ValueError("double backward expects scalar input and scalar output")
    for layer in net.layers:
        if layer.activation not in ("leaky_relu", "linear"):
            raise ValueError("double backward needs piecewise-linear activations")

    slopes = [
        _activation_slope(layer.activation, cache.pre[i], cache.outs[i])
        for i, layer in enumerate(net.layers)
    ]
    n = cache.inputs[0].shape[0]
    # forward tangents: t[l] is d(layer-l input)/dx
    t = [np.ones((n, 1))]
    for layer, s in zip(net.layers, slopes):
        t.append((t[-1] @ layer.weight) * s)
    g = t[-1][:, 0]
    # backward adjoints: e[l] is dg/d(pre-activation tangent of layer l)
    e = [None] * len(net.layers)
    e[-1] = slopes[-1]
    for i in range(len(net.layers) - 2, -1, -1):
        e[i] = (e[i + 1] @ net.layers[i + 1].weight.T) * slopes[i]
    if callable(weights):
        weights = weights(g)
    w = np.asarray(weights, dtype=np.float64).reshape(n, 1)
    grads = []
    for i, layer in enumerate(net.layers):
        grads.append((t[i] * w).T @ e[i])
        grads.append(np.zeros_like(layer.bias))
    return g, grads


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    m: list | None = None
    v: list | None = None
    step: int = 0

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update applied in place; returns ``(params, state)``."""
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if not (len(params) == len(grads) == len(state.m)):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def sample_generator(net: DenseNet, count, noise_dim, rng, mode="eval") -> np.ndarray:
    """Draw ``count`` standard-normal noise vectors and return the flat outputs."""
    if count < 2:
        raise ValueError("count must be at least 2")
    if net.output_dim != 1:
        raise ValueError("generator must have a single output unit")
    z = rng.standard_normal((count, noise_dim))
    out, _ = forward(net, z, mode=mode)
    return out[:, 0]
