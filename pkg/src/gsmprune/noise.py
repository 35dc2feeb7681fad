"""Multiplicative noise distributions p(lambda) and their moments."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import draw

__all__ = [
    "NoiseSpec",
    "Constant",
    "Bernoulli",
    "Gaussian",
    "Beta",
    "analytic_moments",
    "raw_moment",
    "noise_from_config",
    "noise_to_config",
    "sample_lambda_field",
    "expectation_correction",
]


class NoiseSpec:
    kind = ""
    discrete = False

    def validate(self):
        return self

    def mean(self):
        raise NotImplementedError

    def variance(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(NoiseSpec):
    c: float = 1.0
    kind = "constant"
    discrete = True

    def validate(self):
        if not math.isfinite(self.c):
            raise ParameterError(f"Constant noise needs a finite value, got {self.c}")
        return self

    def mean(self):
        return float(self.c)

    def variance(self):
        return 0.0


@dataclass(frozen=True)
class Bernoulli(NoiseSpec):
    """lambda = 1 with probability ``keep_prob``, else 0 (dropout)."""

    keep_prob: float = 0.5
    kind = "bernoulli"
    discrete = True

    def validate(self):
        if not 0.0 < self.keep_prob <= 1.0:
            raise ParameterError(f"Bernoulli keep_prob must be in (0, 1], got {self.keep_prob}")
        return self

    def mean(self):
        return float(self.keep_prob)

    def variance(self):
        return self.keep_prob * (1.0 - self.keep_prob)


@dataclass(frozen=True)
class Gaussian(NoiseSpec):
    loc: float = 1.0
    sd: float = 0.5
    kind = "gaussian"

    def validate(self):
        if not (math.isfinite(self.loc) and math.isfinite(self.sd)) or self.sd < 0:
            raise ParameterError(f"Gaussian noise needs finite mean and sd >= 0, got {self}")
        return self

    def mean(self):
        return float(self.loc)

    def variance(self):
        return float(self.sd) ** 2


@dataclass(frozen=True)
class Beta(NoiseSpec):
    alpha: float = 0.5
    beta: float = 0.5
    kind = "beta"

    def validate(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterError(f"Beta noise needs alpha > 0 and beta > 0, got {self}")
        return self

    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    def variance(self):
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))


def analytic_moments(spec):
    """Exact ``(mean, variance)`` of the noise distribution."""
    spec.validate()
    return spec.mean(), spec.variance()


def raw_moment(spec, k):
    """E[lambda**k] for k = 1..4, in closed form."""
    spec.validate()
    if k == 0:
        return 1.0
    if isinstance(spec, Constant):
        return float(spec.c) ** k
    if isinstance(spec, Bernoulli):
        return float(spec.keep_prob)
    if isinstance(spec, Gaussian):
        m, s2 = spec.loc, spec.sd**2
        return [1.0, m, m * m + s2, m**3 + 3 * m * s2, m**4 + 6 * m * m * s2 + 3 * s2 * s2][k]
    if isinstance(spec, Beta):
        a, b = spec.alpha, spec.beta
        return math.prod((a + r) / (a + b + r) for r in range(k))
    raise ParameterError(f"unsupported noise distribution {spec!r}")


_KINDS = {
    "constant": (Constant, {"c": "c"}),
    "bernoulli": (Bernoulli, {"keep_prob": "keep_prob"}),
    "gaussian": (Gaussian, {"mean": "loc", "sd": "sd"}),
    "beta": (Beta, {"alpha": "alpha", "beta": "beta"}),
}


def noise_from_config(d):
    """Build a spec from ``{"kind": ..., params...}``."""
    d = dict(d)
    kind = str(d.pop("kind", "")).lower()
    if kind not in _KINDS:
        raise ParameterError(f"unknown noise kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls, fields = _KINDS[kind]
    unknown = set(d) - set(fields)
    if unknown:
        raise ParameterError(f"unknown {kind} noise parameters: {sorted(unknown)}")
    try:
        kwargs = {fields[k]: float(v) for k, v in d.items()}
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"non-numeric {kind} noise parameter: {exc}") from None
    return cls(**kwargs).validate()


def noise_to_config(spec):
    cls, fields = _KINDS[spec.kind]
    return {"kind": spec.kind, **{k: getattr(spec, attr) for k, attr in fields.items()}}


def sample_lambda_field(spec, layer_input_dims, rng, batch=None):
    """Draw one lambda per (layer, input unit), plus a fixed 1 for the bias input.

    With ``batch`` set, every example gets its own row of lambdas, so each
    layer's array has shape ``(batch, in_dim + 1)``; otherwise ``(in_dim + 1,)``.
    """
    field = []
    for d in layer_input_dims:
        d = int(d)
        if d < 1:
            raise ParameterError(f"layer input dims must be positive, got {d}")
        shape = (d,) if batch is None else (int(batch), d)
        lam = draw(rng, spec, shape)
        ones = np.ones(shape[:-1] + (1,))
        field.append(np.concatenate([lam, ones], axis=-1))
    return field


def expectation_correction(net, spec, factor=None):
    """Scale every noise-exposed (non-bias) weight row by E[lambda].

    ``factor`` overrides E[lambda], e.g. to apply a literal ``1 - p``.
    """
    scale = spec.validate().mean() if factor is None else float(factor)
    if scale == 0.0:
        raise ParameterError("expectation correction with zero-mean noise would erase every weight")
    out = net.copy()
    for w in out.weights:
        w[:-1, :] *= scale
    return out
