"""Shared oracles for the test suite."""
import numpy as np

from gsmprune.network import ACTIVATIONS, Network, loss_and_grads
from gsmprune.noise import Beta, sample_lambda_field
from gsmprune.numerics import RngState


def finite_difference_grads(net, x, y, lambdas=None, loss_kind=None, prior_sigma0=None, n_total=None, h=1e-5):
    """Central differences of the loss returned by loss_and_grads, weight by weight."""
    grads = []
    for l, w in enumerate(net.weights):
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            if net.masks[l][idx] == 0:
                continue
            old = w[idx]
            w[idx] = old + h
            up, _ = loss_and_grads(net, x, y, lambdas, loss_kind, prior_sigma0, n_total)
            w[idx] = old - h
            down, _ = loss_and_grads(net, x, y, lambdas, loss_kind, prior_sigma0, n_total)
            w[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def layer_relative_errors(a, b):
    """Per-layer max-norm relative difference ||a - b|| / max(||a||, ||b||)."""
    out = []
    for ga, gb in zip(a, b):
        scale = max(np.max(np.abs(ga)), np.max(np.abs(gb)), 1e-12)
        out.append(float(np.max(np.abs(ga - gb)) / scale))
    return out


def random_gradcheck_case(seed):
    """A random net (depth <= 4, width <= 8), batch, targets and optional lambda field."""
    rng = RngState(seed)
    gen = rng.generator
    depth = int(gen.integers(1, 5))
    dims = [int(d) for d in gen.integers(1, 9, size=depth + 1)]
    hidden = [a for a in ACTIVATIONS if a != "softmax"]
    acts = [str(gen.choice(hidden)) for _ in range(depth - 1)]
    out_act = str(gen.choice(ACTIVATIONS))
    if out_act == "softmax" and dims[-1] < 2:
        dims[-1] = 2
    acts.append(out_act)
    net = Network.init(dims, acts, rng)
    for w in net.weights:
        w[-1] = 0.1 * gen.standard_normal(w.shape[1])
    n = int(gen.integers(1, 6))
    x = gen.standard_normal((n, dims[0]))
    if out_act == "softmax":
        y = np.eye(dims[-1])[gen.integers(0, dims[-1], size=n)]
        kind = "cross_entropy"
    elif out_act == "sigmoid":
        y = (gen.random((n, dims[-1])) < 0.5).astype(float)
        kind = str(gen.choice(["cross_entropy", "squared_error"]))
    else:
        y = gen.standard_normal((n, dims[-1]))
        kind = "squared_error"
    lambdas = sample_lambda_field(Beta(0.5, 0.5), net.input_dims, rng, batch=n) if seed % 2 else None
    prior = 0.7 if seed % 3 == 0 else None
    return net, x, y, lambdas, kind, prior
