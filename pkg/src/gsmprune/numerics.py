"""Dense float64 helpers and a splittable random number state.

Matrices are plain ``numpy.ndarray`` objects of dtype float64; this module
only adds the shape-checked product and the seeded generator plumbing used by
every sampler in the package.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = ["as_matrix", "matmul", "RngState", "draw"]


def as_matrix(a, name="matrix"):
    """Return ``a`` as a 2-D C-contiguous float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply a{a.shape} by b{b.shape}")
    return a @ b


class RngState:
    """Seeded PCG64 stream identified by ``(seed, stream)``.

    ``split`` hands out children keyed by a spawn path, so draws made by a
    child never overlap the parent's remaining sequence.
    """

    def __init__(self, seed, stream=0, _path=()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream = int(stream)
        self._path = tuple(_path) + (self.stream,)
        self._children = 0
        ss = np.random.SeedSequence(seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def split(self):
        # children live under a distinct spawn key prefix (1, ...) from the parent (0, ...)
        self._children += 1
        return RngState(self.seed, self._children, _path=self._path + (1,))

    def __repr__(self):
        return f"RngState(seed={self.seed}, path={self._path})"


def _standard_gamma(gen, shape, size):
    # numpy uses the Marsaglia-Tsang rejection sampler
    return gen.standard_gamma(shape, size=size)


def draw(rng, dist, n):
    """Draw ``n`` independent values from ``dist``; ``n`` may also be a shape tuple."""
    from .noise import Bernoulli, Beta, Constant, Gaussian

    size = (int(n),) if np.isscalar(n) else tuple(int(k) for k in n)
    if min(size) < 1:
        raise ParameterError(f"draw count must be >= 1, got {n}")
    dist.validate()
    gen = rng.generator
    if isinstance(dist, Constant):
        return np.full(size, float(dist.c))
    if isinstance(dist, Bernoulli):
        return (gen.random(size) < dist.keep_prob).astype(np.float64)
    if isinstance(dist, Gaussian):
        return dist.loc + dist.sd * gen.standard_normal(size)
    if isinstance(dist, Beta):
        x = _standard_gamma(gen, dist.alpha, size)
        y = _standard_gamma(gen, dist.beta, size)
        total = x + y
        # both gammas can underflow to 0 for tiny shapes; use the Bernoulli(mean) limit
        out = np.divide(x, total, out=np.empty_like(total), where=total > 0)
        zero = total == 0
        if np.any(zero):
            out[zero] = (gen.random(int(zero.sum())) < dist.alpha / (dist.alpha + dist.beta))
        return out
    raise ParameterError(f"unsupported noise distribution {dist!r}")
