"""Stochastic-gradient Langevin dynamics over network weights.

Per-weight posterior means and variances are accumulated on the fly with
Welford's update, so the chain never has to be stored.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, FormatError, ParameterError, SamplerDiverged
from .network import PolynomialDecay, default_loss, loss_and_grads

__all__ = [
    "PosteriorMoments",
    "SgldConfig",
    "sgld_step",
    "collect_moments",
    "save_moments",
    "load_moments",
    "moments_to_bytes",
    "moments_from_bytes",
]

_MAGIC = b"GSMM"
_VERSION = 1


class PosteriorMoments:
    """Running mean and sum of squared deviations for every weight."""

    def __init__(self, shapes):
        self.shapes = [tuple(int(d) for d in s) for s in shapes]
        self.n = 0
        self.mean = [np.zeros(s) for s in self.shapes]
        self.m2 = [np.zeros(s) for s in self.shapes]

    @classmethod
    def like(cls, net):
        return cls([w.shape for w in net.weights])

    def update(self, weights):
        if len(weights) != len(self.shapes):
            raise ConsistencyError(f"expected {len(self.shapes)} layers, got {len(weights)}")
        self.n += 1
        for mean, m2, w in zip(self.mean, self.m2, weights):
            delta = w - mean
            mean += delta / self.n
            m2 += delta * (w - mean)

    def variance(self):
        if self.n < 2:
            raise ParameterError(f"variance needs at least 2 samples, have {self.n}")
        return [m2 / (self.n - 1) for m2 in self.m2]

    def std(self):
        return [np.sqrt(v) for v in self.variance()]

    def merge(self, other):
        """Pooled moments of two independent chains (Chan et al. combination)."""
        if self.shapes != other.shapes:
            raise ConsistencyError("cannot merge moments of differently shaped networks")
        out = PosteriorMoments(self.shapes)
        n = self.n + other.n
        out.n = n
        if n == 0:
            return out
        for l in range(len(self.shapes)):
            delta = other.mean[l] - self.mean[l]
            out.mean[l] = self.mean[l] + delta * (other.n / n)
            out.m2[l] = self.m2[l] + other.m2[l] + delta * delta * (self.n * other.n / n)
        return out

    def check_matches(self, net):
        shapes = [w.shape for w in net.weights]
        if shapes != self.shapes:
            raise ConsistencyError(f"moments shapes {self.shapes} do not match network weight shapes {shapes}")


@dataclass(frozen=True)
class SgldConfig:
    schedule: PolynomialDecay = field(default_factory=lambda: PolynomialDecay(1e-5, 1.0, 0.0))
    noise_variance_scale: float = 0.5
    prior_sigma0: float = 1.0
    burn_in: int = 1000
    thin: int = 1
    n_samples: int = 1000
    batch_size: int = 100

    def __post_init__(self):
        if self.noise_variance_scale < 0 or self.prior_sigma0 <= 0:
            raise ParameterError(f"invalid SGLD scales in {self}")
        if self.burn_in < 0 or self.thin < 1 or self.n_samples < 1 or self.batch_size < 1:
            raise ParameterError(f"invalid SGLD counts in {self}")


def sgld_step(net, batch, cfg, step_index, rng, n_total=None, loss_kind=None):
    """One Langevin update on the negative log posterior U.

    ``w <- w - lr * grad U + eta`` with ``eta ~ N(0, noise_variance_scale * lr)``;
    the minibatch gradient is rescaled by ``n_total`` to estimate the full-data
    gradient. No multiplicative noise enters the forward pass.
    """
    x, y = batch
    lr = cfg.schedule(step_index)
    if lr == 0.0:
        return net.copy()
    n_total = x.shape[0] if n_total is None else n_total
    _, grads = loss_and_grads(net, x, y, None, loss_kind or default_loss(net), cfg.prior_sigma0, n_total)
    noise_sd = np.sqrt(cfg.noise_variance_scale * lr)
    out = net.copy()
    gen = rng.generator
    for w, g, m in zip(out.weights, grads, out.masks):
        eta = noise_sd * gen.standard_normal(w.shape)
        w -= (lr * n_total * g + eta) * m
        if not np.all(np.isfinite(w)):
            raise SamplerDiverged(step_index)
    return out


def _batches(n, batch_size, rng):
    while True:
        order = rng.generator.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size]


def collect_moments(net, data, cfg, rng, loss_kind=None, on_sample=None):
    """Run the chain and stream posterior moments of every weight.

    Discards ``burn_in`` steps, then keeps every ``thin``-th state until
    ``n_samples`` are recorded. ``on_sample(i, net)`` sees each kept state.
    Returns ``(moments, final_net)``.
    """
    if cfg.n_samples < 2:
        raise ParameterError("collect_moments needs n_samples >= 2 to define a variance")
    x = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.targets, dtype=np.float64)
    n = x.shape[0]
    moments = PosteriorMoments.like(net)
    batches = _batches(n, cfg.batch_size, rng)
    step = 0
    for _ in range(cfg.burn_in):
        idx = next(batches)
        net = sgld_step(net, (x[idx], y[idx]), cfg, step, rng, n, loss_kind)
        step += 1
    for i in range(cfg.n_samples):
        for _ in range(cfg.thin):
            idx = next(batches)
            net = sgld_step(net, (x[idx], y[idx]), cfg, step, rng, n, loss_kind)
            step += 1
        moments.update(net.weights)
        if on_sample is not None:
            on_sample(i, net)
    return moments, net


def moments_to_bytes(moments):
    parts = [_MAGIC, struct.pack("<IQI", _VERSION, moments.n, len(moments.shapes))]
    var = moments.variance() if moments.n >= 2 else [np.zeros(s) for s in moments.shapes]
    for shape, mean, v in zip(moments.shapes, moments.mean, var):
        parts.append(struct.pack("<II", *shape))
        pairs = np.stack([mean.ravel(), v.ravel()], axis=1)
        parts.append(np.ascontiguousarray(pairs, dtype="<f8").tobytes())
    return b"".join(parts)


def moments_from_bytes(buf):
    if buf[:4] != _MAGIC:
        raise FormatError(f"bad moments magic {buf[:4]!r} at offset 0")
    if len(buf) < 20:
        raise FormatError("truncated moments header at offset 4")
    version, n, n_layers = struct.unpack_from("<IQI", buf, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported moments format version {version} at offset 4")
    off, shapes, pairs = 20, [], []
    for l in range(n_layers):
        if off + 8 > len(buf):
            raise FormatError(f"truncated layer {l} header at offset {off}")
        rows, cols = struct.unpack_from("<II", buf, off)
        off += 8
        count = rows * cols
        if off + 16 * count > len(buf):
            raise FormatError(f"truncated layer {l} moments at offset {off}")
        p = np.frombuffer(buf, dtype="<f8", count=2 * count, offset=off).reshape(rows, cols, 2)
        off += 16 * count
        shapes.append((rows, cols))
        pairs.append(p.astype(np.float64))
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes at offset {off}")
    out = PosteriorMoments(shapes)
    out.n = n
    for l, p in enumerate(pairs):
        out.mean[l] = p[..., 0].copy()
        out.m2[l] = p[..., 1] * max(n - 1, 0)
    return out


def save_moments(moments, path):
    with open(path, "wb") as f:
        f.write(moments_to_bytes(moments))


def load_moments(path):
    with open(path, "rb") as f:
        return moments_from_bytes(f.read())
