"""Small dense-network engine with explicit backward passes.

Everything here is plain numpy in float64.  A :class:`DenseNetwork` caches
what it needs during a training-mode forward pass so that
:meth:`DenseNetwork.backward` can return parameter gradients and the
gradient with respect to the network input (used to chain a head into the
encoder).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

EPS = 1e-7


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


class StateError(RuntimeError):
    """Raised when backward is called without a cached training forward."""


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


def sigmoid(x):
    # split by sign so that exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(kind: Activation, a):
    if kind is Activation.RELU:
        return np.maximum(a, 0.0)
    if kind is Activation.SIGMOID:
        return sigmoid(a)
    return a


def _activate_backward(kind: Activation, a, out, grad):
    if kind is Activation.RELU:
        return grad * (a > 0)
    if kind is Activation.SIGMOID:
        return grad * out * (1.0 - out)
    return grad


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.activation = Activation(self.activation)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"inconsistent layer shapes {self.weights.shape} / {self.bias.shape}"
            )
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1], got {self.dropout_rate}")

    @classmethod
    def init(cls, fan_in, fan_out, rng, activation=Activation.IDENTITY, dropout_rate=0.0):
        """Glorot-uniform weights, zero bias."""
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return cls(w, np.zeros(fan_out), Activation(activation), dropout_rate)

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]


@dataclass
class _Cache:
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    masks: list = field(default_factory=list)


class DenseNetwork:
    """Ordered stack of :class:`DenseLayer` objects.

    Parameters are exposed through :meth:`parameters` as a flat list
    ``[W0, b0, W1, b1, ...]``; gradients from :meth:`backward` follow the
    same order, which is what :class:`AdamW` expects.
    """

    def __init__(self, layers, rng=None):
        self.layers = list(layers)
        for prev, nxt in zip(self.layers[:-1], self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ShapeError(f"layer dims do not chain: {prev.fan_out} -> {nxt.fan_in}")
        self.mode = Mode.TRAIN
        self.rng = rng if rng is not None else np.random.default_rng()
        self._cache = None

    @classmethod
    def build(cls, sizes, rng, activation=Activation.RELU, dropout_rate=0.0,
              output_activation=None):
        """Build a network from a list of widths ``[d_in, h1, ..., d_out]``.

        ``activation``/``dropout_rate`` apply to every layer unless
        ``output_activation`` is given, in which case the last layer uses it
        and carries no dropout.
        """
        layers = []
        n = len(sizes) - 1
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == n - 1
            if last and output_activation is not None:
                layers.append(DenseLayer.init(a, b, rng, output_activation, 0.0))
            else:
                layers.append(DenseLayer.init(a, b, rng, activation, dropout_rate))
        return cls(layers, rng)

    @property
    def in_dim(self):
        return self.layers[0].fan_in

    @property
    def out_dim(self):
        return self.layers[-1].fan_out

    @property
    def dims(self):
        return [self.in_dim] + [layer.fan_out for layer in self.layers]

    def train(self):
        self.mode = Mode.TRAIN
        return self

    def eval(self):
        self.mode = Mode.EVAL
        self._cache = None
        return self

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend([layer.weights, layer.bias])
        return params

    def copy(self):
        layers = [
            DenseLayer(l.weights.copy(), l.bias.copy(), l.activation, l.dropout_rate)
            for l in self.layers
        ]
        net = DenseNetwork(layers, self.rng)
        net.mode = self.mode
        return net

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected input with {self.in_dim} columns, got shape {x.shape}")
        training = self.mode is Mode.TRAIN
        cache = _Cache() if training else None
        h = x
        for layer in self.layers:
            a = h @ layer.weights + layer.bias
            out = _activate(layer.activation, a)
            mask = None
            if training and layer.dropout_rate > 0.0:
                keep = 1.0 - layer.dropout_rate
                if keep <= 0.0:
                    mask = np.zeros_like(out)
                else:
                    mask = (self.rng.random(out.shape) < keep) / keep
                out_dropped = out * mask
            else:
                out_dropped = out
            if training:
                cache.inputs.append(h)
                cache.pre.append(a)
                cache.post.append(out)
                cache.masks.append(mask)
            h = out_dropped
        self._cache = cache
        return h

    __call__ = forward

    def backward(self, grad_out):
        """Back-propagate ``grad_out`` (dL/d output) through the cached pass.

        Returns ``(param_grads, grad_input)`` where ``param_grads`` matches
        :meth:`parameters`.  Parameters are not touched.
        """
        cache = self._cache
        if cache is None:
            raise StateError("backward() needs a preceding forward() in train mode")
        grad = np.asarray(grad_out, dtype=np.float64)
        if grad.shape != cache.post[-1].shape:
            raise ShapeError(f"gradient shape {grad.shape} != output shape {cache.post[-1].shape}")
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if cache.masks[i] is not None:
                grad = grad * cache.masks[i]
            grad = _activate_backward(layer.activation, cache.pre[i], cache.post[i], grad)
            grads[2 * i] = cache.inputs[i].T @ grad
            grads[2 * i + 1] = grad.sum(axis=0)
            grad = grad @ layer.weights.T
        return grads, grad


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(probs, grad):
    """Map dL/d(probs) to dL/d(logits)."""
    return probs * (grad - np.sum(grad * probs, axis=1, keepdims=True))


def _check_same(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_same(pred, target)
    return float(np.mean((pred - target) ** 2))


def mse_loss_grad(pred, target):
    """Gradient of :func:`mse_loss` with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_same(pred, target)
    return 2.0 * (pred - target) / pred.size


def bce_loss(pred, target):
    pred = np.clip(np.asarray(pred, dtype=np.float64), EPS, 1.0 - EPS)
    target = np.asarray(target, dtype=np.float64)
    _check_same(pred, target)
    return float(-np.mean(target * np.log(pred) + (1.0 - target) * np.log(1.0 - pred)))


def bce_loss_grad(pred, target):
    raw = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_same(raw, target)
    p = np.clip(raw, EPS, 1.0 - EPS)
    g = (-target / p + (1.0 - target) / (1.0 - p)) / raw.size
    # clipping is flat outside [EPS, 1-EPS]
    g[(raw < EPS) | (raw > 1.0 - EPS)] = 0.0
    return g


def _check_one_hot(one_hot):
    if not (np.all((one_hot == 0) | (one_hot == 1)) and np.all(one_hot.sum(axis=1) == 1)):
        raise ValueError("targets must be one-hot rows")


def ce_loss(probs, one_hot):
    probs = np.asarray(probs, dtype=np.float64)
    one_hot = np.asarray(one_hot, dtype=np.float64)
    _check_same(probs, one_hot)
    _check_one_hot(one_hot)
    p = np.clip(probs, EPS, 1.0 - EPS)
    return float(-np.mean(np.sum(one_hot * np.log(p), axis=1)))


def ce_loss_grad(probs, one_hot):
    raw = np.asarray(probs, dtype=np.float64)
    one_hot = np.asarray(one_hot, dtype=np.float64)
    _check_same(raw, one_hot)
    p = np.clip(raw, EPS, 1.0 - EPS)
    g = -one_hot / p / raw.shape[0]
    g[(raw < EPS) | (raw > 1.0 - EPS)] = 0.0
    return g


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass
class AdamWState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adamw_step(params, grads, state: AdamWState):
    """One decoupled-weight-decay Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads and optimizer moments must have equal length")
    state.step_count += 1
    t = state.step_count
    lr, wd = state.learning_rate, state.weight_decay
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if wd:
            p *= 1.0 - lr * wd
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
    return params, state


class AdamW:
    """Optimizer bound to a fixed list of parameter arrays."""

    def __init__(self, params, lr=1e-3, weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamWState(
            first_moment=[np.zeros_like(p) for p in self.params],
            second_moment=[np.zeros_like(p) for p in self.params],
            learning_rate=lr,
            weight_decay=weight_decay,
            beta1=betas[0],
            beta2=betas[1],
            epsilon=eps,
        )

    def step(self, grads):
        adamw_step(self.params, grads, self.state)
