"""Multilayer perceptron with multiplicative noise on each layer's input.

Biases are absorbed into the weight matrices: layer ``l`` holds an
``(in_dim + 1, out_dim)`` matrix whose last row multiplies a constant 1
appended to the layer input. A lambda field multiplies that augmented input
element-wise before the product, with the bias entry pinned to 1.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, NumericError, ParameterError, ShapeError, TrainingDiverged
from .noise import Constant, sample_lambda_field

__all__ = [
    "ACTIVATIONS",
    "LOSSES",
    "LayerSpec",
    "Network",
    "PolynomialDecay",
    "forward",
    "predict",
    "logits",
    "loss",
    "default_loss",
    "backprop",
    "loss_and_grads",
    "train_mn",
    "error_rate",
    "rmse",
    "evaluate",
    "save_network",
    "load_network",
    "network_to_bytes",
    "network_from_bytes",
]

ACTIVATIONS = ("identity", "sigmoid", "tanh", "relu", "softmax")
LOSSES = ("cross_entropy", "squared_error")
PROB_CLAMP = 1e-12

_MAGIC = b"GSMN"
_VERSION = 1


def _sigmoid(a):
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(a):
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activate(kind, a):
    if kind == "identity":
        return a
    if kind == "sigmoid":
        return _sigmoid(a)
    if kind == "tanh":
        return np.tanh(a)
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "softmax":
        return _softmax(a)
    raise ParameterError(f"unknown activation {kind!r}")


def _activation_grad(kind, a, h):
    """Element-wise f'(a), written in terms of the output h where cheaper."""
    if kind == "identity":
        return np.ones_like(a)
    if kind == "sigmoid":
        return h * (1.0 - h)
    if kind == "tanh":
        return 1.0 - h * h
    if kind == "relu":
        return (a > 0).astype(np.float64)
    raise ParameterError(f"no element-wise derivative for {kind!r}")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str


class Network:
    """Weights, masks and layer layout of an MLP.

    The effective weight of a layer is ``weights[l] * masks[l]``.
    """

    def __init__(self, layer_specs, weights, masks=None):
        self.layer_specs = [LayerSpec(int(i), int(o), str(a)) for i, o, a in layer_specs]
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        if masks is None:
            masks = [np.ones_like(w) for w in self.weights]
        self.masks = [np.array(m, dtype=np.float64) for m in masks]
        self._check()

    def _check(self):
        specs = self.layer_specs
        if not specs:
            raise ShapeError("a network needs at least one layer")
        for l, s in enumerate(specs):
            if s.activation not in ACTIVATIONS:
                raise ParameterError(f"layer {l}: unknown activation {s.activation!r}")
            if s.activation == "softmax" and l != len(specs) - 1:
                raise ParameterError("softmax is only allowed on the output layer")
            if s.in_dim < 1 or s.out_dim < 1:
                raise ShapeError(f"layer {l}: dims must be positive, got {s}")
            if l and specs[l - 1].out_dim != s.in_dim:
                raise ShapeError(f"layer {l}: in_dim {s.in_dim} != previous out_dim {specs[l - 1].out_dim}")
            shape = (s.in_dim + 1, s.out_dim)
            if self.weights[l].shape != shape or self.masks[l].shape != shape:
                raise ShapeError(
                    f"layer {l}: expected weights/mask of shape {shape}, "
                    f"got {self.weights[l].shape} and {self.masks[l].shape}"
                )

    @classmethod
    def init(cls, dims, activations, rng):
        """Glorot-uniform weights on +-sqrt(6 / (in + out)); zero biases."""
        dims = [int(d) for d in dims]
        if isinstance(activations, str):
            activations = [activations] * (len(dims) - 1)
        if len(activations) != len(dims) - 1:
            raise ShapeError(f"{len(dims) - 1} layers need as many activations, got {len(activations)}")
        specs, weights = [], []
        for d_in, d_out, act in zip(dims[:-1], dims[1:], activations):
            limit = np.sqrt(6.0 / (d_in + d_out))
            w = np.zeros((d_in + 1, d_out))
            w[:-1] = rng.generator.uniform(-limit, limit, size=(d_in, d_out))
            specs.append((d_in, d_out, act))
            weights.append(w)
        return cls(specs, weights)

    @property
    def dims(self):
        return [self.layer_specs[0].in_dim] + [s.out_dim for s in self.layer_specs]

    @property
    def activations(self):
        return [s.activation for s in self.layer_specs]

    @property
    def input_dims(self):
        return [s.in_dim for s in self.layer_specs]

    @property
    def n_weights(self):
        return sum(w.size for w in self.weights)

    def effective_weights(self):
        return [w * m for w, m in zip(self.weights, self.masks)]

    def copy(self):
        return Network(
            [(s.in_dim, s.out_dim, s.activation) for s in self.layer_specs],
            [w.copy() for w in self.weights],
            [m.copy() for m in self.masks],
        )

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.layer_specs == other.layer_specs
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.masks, other.masks))
        )

    def __repr__(self):
        return f"Network(dims={self.dims}, activations={self.activations})"


def _augment(h):
    return np.concatenate([h, np.ones((h.shape[0], 1))], axis=1)


def _run(net, x, lambdas):
    """Forward pass keeping the corrupted layer inputs and pre-activations."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layer_specs[0].in_dim:
        raise ShapeError(f"input of shape {x.shape} does not match first layer in_dim {net.layer_specs[0].in_dim}")
    if lambdas is not None and len(lambdas) != len(net.layer_specs):
        raise ShapeError(f"lambda field has {len(lambdas)} layers, network has {len(net.layer_specs)}")
    acts, inputs, pre = [x], [], []
    h = x
    for l, (spec, w) in enumerate(zip(net.layer_specs, net.effective_weights())):
        u = _augment(h)
        if lambdas is not None:
            lam = np.asarray(lambdas[l], dtype=np.float64)
            if lam.shape[-1] != spec.in_dim + 1 or (lam.ndim == 2 and lam.shape[0] != x.shape[0]):
                raise ShapeError(f"layer {l}: lambda shape {lam.shape} does not fit input {u.shape}")
            u = u * lam
        a = u @ w
        h = _activate(spec.activation, a)
        inputs.append(u)
        pre.append(a)
        acts.append(h)
    return acts, inputs, pre


def forward(net, x, lambdas=None):
    """Return ``[x, h_1, ..., h_L]``; ``h_L`` is the prediction."""
    return _run(net, x, lambdas)[0]


def predict(net, x):
    return forward(net, x)[-1]


def logits(net, x):
    """Pre-activation of the output layer (no noise)."""
    return _run(net, x, None)[2][-1]


def default_loss(net):
    return "cross_entropy" if net.layer_specs[-1].activation in ("softmax", "sigmoid") else "squared_error"


def _check_loss_compat(net, kind):
    if kind not in LOSSES:
        raise ParameterError(f"unknown loss {kind!r}")
    out = net.layer_specs[-1].activation
    if kind == "cross_entropy" and out not in ("softmax", "sigmoid"):
        raise ParameterError(f"cross_entropy needs a softmax or sigmoid output, got {out}")
    if kind == "squared_error" and out == "softmax":
        raise ParameterError("squared_error is not supported with a softmax output")


def loss(pred, target, kind, binary=None):
    """Mean loss over the rows of the batch.

    ``cross_entropy`` is binary per column when ``binary`` is set (sigmoid
    outputs) and categorical otherwise; by default a single column means
    binary. ``squared_error`` is half the summed squared residual.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    n = pred.shape[0]
    if kind == "squared_error":
        return 0.5 * float(np.sum((pred - target) ** 2)) / n
    if kind != "cross_entropy":
        raise ParameterError(f"unknown loss {kind!r}")
    if not np.all(np.isfinite(pred)) or np.any(pred < -1e-6) or np.any(pred > 1.0 + 1e-6):
        raise NumericError("predicted probabilities fall outside [0, 1]")
    if binary is None:
        binary = pred.shape[1] == 1
    # clamp each log argument from below so a perfect prediction costs exactly 0
    ll = target * np.log(np.maximum(pred, PROB_CLAMP))
    if binary:
        ll = ll + (1.0 - target) * np.log(np.maximum(1.0 - pred, PROB_CLAMP))
    return -float(np.sum(ll)) / n


def loss_and_grads(net, x, y, lambdas=None, loss_kind=None, prior_sigma0=None, n_total=None):
    """Batch loss and per-layer gradients of mean NLL (+ Gaussian prior / N_total).

    The prior contributes ``w**2 / (2 sigma0**2 N_total)`` per weight, so the
    summed objective over all minibatches of one epoch is the negative log
    posterior divided by N_total.
    """
    kind = loss_kind or default_loss(net)
    _check_loss_compat(net, kind)
    y = np.asarray(y, dtype=np.float64)
    acts, inputs, pre = _run(net, x, lambdas)
    out = acts[-1]
    if y.shape != out.shape:
        raise ShapeError(f"target shape {y.shape} != output shape {out.shape}")
    n = x.shape[0]
    value = loss(out, y, kind, binary=net.layer_specs[-1].activation == "sigmoid")

    out_act = net.layer_specs[-1].activation
    if kind == "cross_entropy":
        # softmax/sigmoid paired with their cross-entropy: dL/da = p - y
        delta = (out - y) / n
    else:
        delta = (out - y) / n * _activation_grad(out_act, pre[-1], out)

    eff = net.effective_weights()
    grads = [None] * len(eff)
    for l in range(len(eff) - 1, -1, -1):
        grads[l] = (inputs[l].T @ delta) * net.masks[l]
        if l:
            back = delta @ eff[l].T
            if lambdas is not None:
                back = back * np.asarray(lambdas[l])
            prev = net.layer_specs[l - 1].activation
            delta = back[:, :-1] * _activation_grad(prev, pre[l - 1], acts[l])

    if prior_sigma0 is not None:
        if prior_sigma0 <= 0:
            raise ParameterError(f"prior_sigma0 must be positive, got {prior_sigma0}")
        n_total = n if n_total is None else n_total
        scale = 1.0 / (prior_sigma0**2 * n_total)
        for l, w in enumerate(eff):
            grads[l] = grads[l] + scale * w
            value += 0.5 * scale * float(np.sum(w * w))
    return value, grads


def backprop(net, x, y, lambdas=None, loss_kind=None, prior_sigma0=None, n_total=None):
    return loss_and_grads(net, x, y, lambdas, loss_kind, prior_sigma0, n_total)[1]


@dataclass(frozen=True)
class PolynomialDecay:
    """Learning rate ``a * (b + t) ** -gamma`` at step ``t``."""

    a: float
    b: float = 1.0
    gamma: float = 0.55

    def __post_init__(self):
        if self.a < 0 or self.b <= 0 or self.gamma < 0:
            raise ParameterError(f"invalid learning-rate schedule {self}")

    def __call__(self, t):
        return self.a * (self.b + t) ** (-self.gamma)


def _is_unit_constant(spec):
    return isinstance(spec, Constant) and spec.c == 1.0


def train_mn(net, data, spec, epochs, batch_size, schedule, rng, *, loss_kind=None,
             prior_sigma0=None, callback=None):
    """Minibatch SGD on the Monte Carlo multiplicative-noise loss.

    Every example in every minibatch gets its own freshly drawn lambda field.
    ``callback(epoch, net, mean_loss)`` runs after each epoch.
    """
    net = net.copy()
    x = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.targets, dtype=np.float64)
    n = x.shape[0]
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    skip_noise = _is_unit_constant(spec)
    step = 0
    for epoch in range(int(epochs)):
        order = rng.generator.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            lam = None if skip_noise else sample_lambda_field(spec, net.input_dims, rng, batch=len(idx))
            value, grads = loss_and_grads(net, x[idx], y[idx], lam, loss_kind, prior_sigma0, n_total=n)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch)
            lr = schedule(step)
            for w, g in zip(net.weights, grads):
                w -= lr * g
            step += 1
            total += value * len(idx)
        mean_loss = total / n
        if not all(np.all(np.isfinite(w)) for w in net.weights):
            raise TrainingDiverged(epoch)
        if callback is not None:
            callback(epoch, net, mean_loss)
    return net


def error_rate(net, x, y):
    pred = predict(net, x)
    if pred.shape[1] == 1:
        return float(np.mean((pred[:, 0] > 0.5) != (y[:, 0] > 0.5)))
    return float(np.mean(pred.argmax(axis=1) != y.argmax(axis=1)))


def rmse(net, x, y):
    return float(np.sqrt(np.mean((predict(net, x) - y) ** 2)))


def evaluate(net, data, metric):
    if metric == "error_rate":
        return error_rate(net, data.features, data.targets)
    if metric == "accuracy":
        return 1.0 - error_rate(net, data.features, data.targets)
    if metric == "rmse":
        return rmse(net, data.features, data.targets)
    raise ParameterError(f"unknown metric {metric!r}")


_ACT_TAG = {name: i for i, name in enumerate(ACTIVATIONS)}


def network_to_bytes(net):
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(net.layer_specs))]
    for s, w, m in zip(net.layer_specs, net.weights, net.masks):
        parts.append(struct.pack("<IIB", s.in_dim, s.out_dim, _ACT_TAG[s.activation]))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(m, dtype="<f8").tobytes())
    return b"".join(parts)


def network_from_bytes(buf):
    if buf[:4] != _MAGIC:
        raise FormatError(f"bad network magic {buf[:4]!r} at offset 0")
    if len(buf) < 12:
        raise FormatError("truncated network header at offset 4")
    version, n_layers = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported network format version {version} at offset 4")
    off, specs, weights, masks = 12, [], [], []
    for l in range(n_layers):
        if off + 9 > len(buf):
            raise FormatError(f"truncated layer {l} header at offset {off}")
        d_in, d_out, tag = struct.unpack_from("<IIB", buf, off)
        off += 9
        if tag >= len(ACTIVATIONS):
            raise FormatError(f"unknown activation tag {tag} at offset {off - 1}")
        count = (d_in + 1) * d_out
        need = 16 * count
        if off + need > len(buf):
            raise FormatError(f"truncated layer {l} weights at offset {off}")
        w = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(d_in + 1, d_out)
        m = np.frombuffer(buf, dtype="<f8", count=count, offset=off + 8 * count).reshape(d_in + 1, d_out)
        off += need
        specs.append((d_in, d_out, ACTIVATIONS[tag]))
        weights.append(w.astype(np.float64))
        masks.append(m.astype(np.float64))
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes at offset {off}")
    try:
        return Network(specs, weights, masks)
    except (ShapeError, ParameterError) as exc:
        raise FormatError(f"inconsistent network file: {exc}") from None


def save_network(net, path):
    with open(path, "wb") as f:
        f.write(network_to_bytes(net))


def load_network(path):
    with open(path, "rb") as f:
        return network_from_bytes(f.read())
