"""Gaussian scale mixture view of multiplicative noise.

Covers the closed-form noise penalties for linear and logistic regression,
the product and hierarchical GSM samplers, type-II maximum likelihood (EM)
updates for the per-unit noise scales, and the induced weight penalties.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericError, ParameterError, ShapeError
from .noise import analytic_moments
from .numerics import draw

__all__ = [
    "GsmConfig",
    "RowMoments",
    "penalty_linear_mn",
    "mn_squared_loss_closed_form",
    "mn_squared_loss_monte_carlo",
    "loss_logistic_mn_approx",
    "logistic_nll",
    "mn_logistic_loss_monte_carlo",
    "gsm_sample_product",
    "gsm_sample_hierarchical",
    "beta_log_density_grad",
    "em_m_step",
    "em_e_step_linear",
    "em_fit_linear",
    "penalty_r_gsm",
    "penalty_r_gsm_simplified",
    "penalty_r_gsmreg",
]


@dataclass(frozen=True)
class GsmConfig:
    sigma0: float = 1.0
    lambda_floor: float = 1e-8

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ParameterError(f"sigma0 must be positive, got {self.sigma0}")
        if not self.lambda_floor > 0:
            raise ParameterError(f"lambda_floor must be positive, got {self.lambda_floor}")


class RowMoments:
    """Posterior means and variances of V, one matrix pair per layer.

    Row ``j`` of layer ``l`` holds the moments of the weights leaving input
    unit ``j``, i.e. the group sharing one noise scale.
    """

    def __init__(self, means, variances):
        self.means = [np.asarray(m, dtype=np.float64) for m in means]
        self.variances = [np.asarray(v, dtype=np.float64) for v in variances]
        if len(self.means) != len(self.variances):
            raise ShapeError("means and variances must have the same number of layers")
        for m, v in zip(self.means, self.variances):
            if m.shape != v.shape or m.ndim != 2:
                raise ShapeError(f"mean {m.shape} and variance {v.shape} must be equal 2-D shapes")
            if np.any(v < 0):
                raise NumericError("posterior variances must be non-negative")

    @classmethod
    def from_posterior(cls, moments):
        return cls(moments.mean, moments.variance())

    def __len__(self):
        return len(self.means)


def _squared_norms(x):
    return np.sum(np.asarray(x, dtype=np.float64) ** 2, axis=0)


def penalty_linear_mn(X, w, spec):
    """0.5 * Var[lambda] * sum_j w_j^2 * sum_i x_ij^2."""
    _, var = analytic_moments(spec)
    w = np.ravel(w)
    return 0.5 * var * float(np.sum(w * w * _squared_norms(X)))


def mn_squared_loss_closed_form(X, y, w, spec, penalty_scale=1.0):
    """Expected half squared error under the noise, in closed form.

    The data term is evaluated at the mean-scaled weights E[lambda] * w, so
    the identity is exact for noise of any mean.
    """
    mean, _ = analytic_moments(spec)
    r = np.ravel(y) - mean * (np.asarray(X) @ np.ravel(w))
    return 0.5 * float(r @ r) + penalty_scale * penalty_linear_mn(X, w, spec)


def _mc_chunks(n_draws, chunk):
    done = 0
    while done < n_draws:
        k = min(chunk, n_draws - done)
        yield k
        done += k


def mn_squared_loss_monte_carlo(X, y, w, spec, n_draws, rng, chunk=20000):
    """Monte Carlo mean and standard error of 0.5 * sum_i (y_i - x_i diag(lambda) w)^2.

    Each draw is one noise vector over the input features, shared by all rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.ravel(y)
    w = np.ravel(w)
    total = total_sq = 0.0
    for k in _mc_chunks(n_draws, chunk):
        lam = draw(rng, spec, (k, X.shape[1]))
        resid = y[None, :] - (lam * w) @ X.T
        vals = 0.5 * np.sum(resid * resid, axis=1)
        total += vals.sum()
        total_sq += (vals * vals).sum()
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0)
    return mean, float(np.sqrt(var / n_draws))


def logistic_nll(X, y, w, scale=1.0):
    a = scale * (np.asarray(X) @ np.ravel(w))
    return float(np.sum(np.logaddexp(0.0, a) - np.ravel(y) * a))


def loss_logistic_mn_approx(X, y, w, spec):
    """Second-order expansion of the expected logistic loss around the noise mean.

    Returns the NLL at the mean-scaled logits plus
    0.5 * Var[lambda] * sum_j w_j^2 sum_i f_i (1 - f_i) x_ij^2.
    """
    X = np.asarray(X, dtype=np.float64)
    w = np.ravel(w)
    mean, var = analytic_moments(spec)
    a = mean * (X @ w)
    f = 1.0 / (1.0 + np.exp(-a))
    curvature = f * (1.0 - f)
    penalty = 0.5 * var * float(np.sum(w * w * ((curvature[:, None] * X * X).sum(axis=0))))
    return logistic_nll(X, y, w, scale=mean) + penalty


def mn_logistic_loss_monte_carlo(X, y, w, spec, n_draws, rng, chunk=20000):
    X = np.asarray(X, dtype=np.float64)
    y = np.ravel(y)
    w = np.ravel(w)
    total = total_sq = 0.0
    for k in _mc_chunks(n_draws, chunk):
        lam = draw(rng, spec, (k, X.shape[1]))
        a = (lam * w) @ X.T
        vals = np.sum(np.logaddexp(0.0, a) - y[None, :] * a, axis=1)
        total += vals.sum()
        total_sq += (vals * vals).sum()
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0)
    return mean, float(np.sqrt(var / n_draws))


def gsm_sample_product(spec, sigma0, n, rng):
    """Draws of lambda * w with lambda ~ spec and w ~ N(0, sigma0^2)."""
    lam = draw(rng, spec, n)
    w = sigma0 * rng.generator.standard_normal(int(n))
    return lam * w


def gsm_sample_hierarchical(spec, sigma0, n, rng):
    """Draws of v ~ N(0, sigma0^2 lambda^2) after first drawing lambda ~ spec."""
    lam = draw(rng, spec, n)
    return rng.generator.normal(0.0, sigma0 * np.abs(lam))


def beta_log_density_grad(alpha, beta):
    """d/d(lambda) log Beta(lambda; alpha, beta), for use as an EM prior term."""

    def grad(lam):
        lam = float(np.clip(lam, 1e-12, 1.0 - 1e-12))
        return (alpha - 1.0) / lam - (beta - 1.0) / (1.0 - lam)

    return grad


def em_m_step(row_mean, row_var, cfg, log_prior_grad=None, lam=None):
    """Noise-scale update for one unit: mean E[v]^2 + mean Var[v] (+ prior term).

    The prior term is ``log_prior_grad(lam)`` added as-is; leaving it out
    gives the flat-prior update. The result is floored at ``cfg.lambda_floor``.
    """
    row_mean = np.ravel(row_mean)
    row_var = np.ravel(row_var)
    if row_mean.size == 0 or row_mean.shape != row_var.shape:
        raise ShapeError(f"row moments must be non-empty and equal length, got {row_mean.shape}, {row_var.shape}")
    lam_sq = float(np.mean(row_mean * row_mean) + np.mean(row_var))
    if log_prior_grad is not None:
        if lam is None:
            raise ParameterError("a prior term needs the current lambda")
        lam_sq += float(log_prior_grad(lam))
    return max(lam_sq, cfg.lambda_floor)


def em_e_step_linear(X, y, obs_noise_var, lambda_sq, cfg):
    """Exact Gaussian posterior of v under the prior N(0, sigma0^2 lambda_j^2).

    Returns the posterior mean and the diagonal of the posterior covariance;
    off-diagonal terms are dropped so the posterior factorizes per weight.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.ravel(y)
    # work in u = v / (sigma0 lambda): the precision I + S X'X S / noise has
    # eigenvalues >= 1 however small lambda gets
    scale = cfg.sigma0 * np.sqrt(np.asarray(lambda_sq, dtype=np.float64))
    xs = X * scale
    prec = xs.T @ xs / obs_noise_var
    prec[np.diag_indices_from(prec)] += 1.0
    try:
        chol = scipy.linalg.cho_factor(prec, lower=True)
        cov_u = scipy.linalg.cho_solve(chol, np.eye(prec.shape[0]))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"posterior precision is singular: {exc}") from None
    mean = scale * (cov_u @ (xs.T @ y)) / obs_noise_var
    var = scale * scale * np.diag(cov_u)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
        raise NumericError("posterior moments are not finite")
    return mean, np.maximum(var, 0.0)


def em_fit_linear(X, y, obs_noise_var, cfg, iters, spec=None, init_lambda_sq=None,
                  log_prior_grad=None, tol=None):
    """Type-II ML noise scales for Bayesian linear regression by EM.

    Each coordinate j has its own scale with prior v_j ~ N(0, sigma0^2 lambda_j^2).
    ``spec`` fixes the starting point at E[lambda^2]; discrete noise is rejected
    because the M-step needs a continuous lambda. Returns ``(lambda_sq, moments)``
    where ``moments`` is the last E-step, the one ``lambda_sq`` was computed from.
    With ``tol``, iteration stops once no scale moves by more than ``tol``
    relative to its previous value.
    """
    if not obs_noise_var > 0:
        raise ParameterError(f"obs_noise_var must be positive, got {obs_noise_var}")
    if spec is not None and spec.validate().discrete:
        raise ParameterError(f"EM needs continuous noise; {spec.kind} is discrete")
    X = np.asarray(X, dtype=np.float64).reshape(-1, np.shape(X)[-1])
    d = X.shape[1]
    if init_lambda_sq is not None:
        lam_sq = np.broadcast_to(np.asarray(init_lambda_sq, dtype=np.float64), (d,)).copy()
    elif spec is not None:
        m, v = analytic_moments(spec)
        lam_sq = np.full(d, m * m + v)
    else:
        lam_sq = np.ones(d)
    mean = np.zeros(d)
    var = cfg.sigma0**2 * lam_sq
    for _ in range(int(iters)):
        mean, var = em_e_step_linear(X, y, obs_noise_var, lam_sq, cfg)
        new = np.array([
            em_m_step(mean[j:j + 1], var[j:j + 1], cfg, log_prior_grad, np.sqrt(lam_sq[j]))
            for j in range(d)
        ])
        moved = np.max(np.abs(new - lam_sq) / lam_sq)
        lam_sq = new
        if tol is not None and moved <= tol:
            break
    return lam_sq, RowMoments([mean[:, None]], [var[:, None]])


def _row_terms(V, moments):
    if len(V) != len(moments):
        raise ShapeError(f"{len(V)} weight matrices but {len(moments)} moment layers")
    for l, (v, m, s) in enumerate(zip(V, moments.means, moments.variances)):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != m.shape:
            raise ShapeError(f"layer {l}: weights {v.shape} do not match moments {m.shape}")
        yield v, m, s


def penalty_r_gsm(V, moments, cfg):
    """sum over rows of sum_k v^2 / (mean_k E[v]^2 + mean_k Var[v]), over sigma0^2."""
    total = 0.0
    for v, m, s in _row_terms(V, moments):
        num = np.sum(v * v, axis=1)
        den = np.maximum(np.mean(m * m, axis=1) + np.mean(s, axis=1), cfg.lambda_floor)
        total += float(np.sum(num / den))
    return total / cfg.sigma0**2


def penalty_r_gsm_simplified(V, moments, cfg):
    """sum over rows of d / (1 + sum_k Var[v] / sum_k v^2), over sigma0^2.

    A row whose weights are all zero contributes 0 (the sparse limit).
    """
    total = 0.0
    for v, _, s in _row_terms(V, moments):
        d = v.shape[1]
        sq = np.sum(v * v, axis=1)
        var = np.sum(s, axis=1)
        live = sq > 0
        total += float(np.sum(d / (1.0 + var[live] / sq[live])))
    return total / cfg.sigma0**2


def penalty_r_gsmreg(v, var, cfg):
    """sum_j v_j^2 / Var[v_j], over sigma0^2 (variances floored)."""
    v = np.ravel(np.asarray(v, dtype=np.float64))
    var = np.ravel(np.asarray(var, dtype=np.float64))
    if v.shape != var.shape:
        raise ShapeError(f"v {v.shape} and var {var.shape} differ in length")
    return float(np.sum(v * v / np.maximum(var, cfg.lambda_floor))) / cfg.sigma0**2
