"""Weight pruning from posterior moments: SNR, SPR and magnitude rules."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ParameterError
from .network import evaluate
from .noise import expectation_correction

__all__ = [
    "RULES",
    "PruneRule",
    "CurvePoint",
    "PruneCurve",
    "score_weights",
    "prune_order",
    "prune_to_fraction",
    "sweep",
    "breakdown_fraction",
    "write_curves_csv",
    "read_curves_csv",
    "CSV_COLUMNS",
]

RULES = ("snr", "spr", "magnitude")
CSV_COLUMNS = ("rule", "fraction_pruned", "metric_name", "metric_value", "n_weights_total", "n_weights_pruned")


@dataclass(frozen=True)
class PruneRule:
    kind: str
    snr_sigma_floor: float = 1e-8

    def __post_init__(self):
        if self.kind not in RULES:
            raise ParameterError(f"unknown prune rule {self.kind!r}; expected one of {RULES}")
        if not self.snr_sigma_floor > 0:
            raise ParameterError(f"snr_sigma_floor must be positive, got {self.snr_sigma_floor}")


def score_weights(moments, rule):
    """Per-weight keep scores; lower scores are pruned first.

    snr: |mu| / max(sigma, floor); spr: |mu| + sigma; magnitude: |mu|.
    """
    if isinstance(rule, str):
        rule = PruneRule(rule)
    sigmas = moments.std()
    scores = []
    for mu, sigma in zip(moments.mean, sigmas):
        a = np.abs(mu)
        if rule.kind == "snr":
            scores.append(a / np.maximum(sigma, rule.snr_sigma_floor))
        elif rule.kind == "spr":
            scores.append(a + sigma)
        else:
            scores.append(a.copy())
    return scores


def _prunable(net, exempt_biases):
    out = []
    for w in net.weights:
        p = np.ones(w.shape, dtype=bool)
        if exempt_biases:
            p[-1, :] = False
        out.append(p)
    return out


def prune_order(scores, prunable=None):
    """Flat indices (layer-major, row, col) of prunable weights, lowest score first.

    The stable sort breaks ties in (layer, row, col) order.
    """
    flat = np.concatenate([np.ravel(s) for s in scores])
    if prunable is None:
        idx = np.arange(flat.size)
    else:
        idx = np.flatnonzero(np.concatenate([np.ravel(p) for p in prunable]))
    return idx[np.argsort(flat[idx], kind="stable")]


def prune_to_fraction(net, scores, fraction, exempt_biases=False):
    """Zero the weight and mask of the lowest-scoring floor(fraction * W) weights."""
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"fraction must be within [0, 1], got {fraction}")
    if [s.shape for s in scores] != [w.shape for w in net.weights]:
        raise ConsistencyError("score shapes do not match the network")
    prunable = _prunable(net, exempt_biases)
    order = prune_order(scores, prunable)
    k = math.floor(fraction * order.size)
    out = net.copy()
    if k == 0:
        return out
    sizes = np.cumsum([0] + [w.size for w in out.weights])
    chosen = np.sort(order[:k])
    for l, w in enumerate(out.weights):
        local = chosen[(chosen >= sizes[l]) & (chosen < sizes[l + 1])] - sizes[l]
        w.ravel()[local] = 0.0
        out.masks[l].ravel()[local] = 0.0
    return out


@dataclass(frozen=True)
class CurvePoint:
    rule: str
    fraction_pruned: float
    metric_name: str
    metric_value: float
    n_weights_total: int
    n_weights_pruned: int


class PruneCurve(list):
    """List of CurvePoint; fractions strictly increasing within one rule."""

    def baseline(self):
        return self[0].metric_value


def sweep(net, moments, rule, fractions, eval_data, metric, correction=None,
          correction_factor=None, exempt_biases=False):
    """Test metric after pruning a fresh copy of ``net`` at each fraction.

    With ``correction`` (the training NoiseSpec) the pruned copy is
    expectation-corrected before evaluation.
    """
    if isinstance(rule, str):
        rule = PruneRule(rule)
    fractions = [float(f) for f in fractions]
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ParameterError(f"fractions must be strictly increasing, got {fractions}")
    moments.check_matches(net)
    scores = score_weights(moments, rule)
    total = sum(int(p.sum()) for p in _prunable(net, exempt_biases))
    curve = PruneCurve()
    for f in fractions:
        pruned = prune_to_fraction(net, scores, f, exempt_biases)
        if correction is not None:
            pruned = expectation_correction(pruned, correction, correction_factor)
        value = evaluate(pruned, eval_data, metric)
        if not math.isfinite(value):
            raise ParameterError(f"metric {metric} is not finite at fraction {f}")
        curve.append(CurvePoint(rule.kind, f, metric, value, total, math.floor(f * total)))
    return curve


def breakdown_fraction(curve, baseline_metric, tolerance_multiplier):
    """Largest recorded fraction whose error metric stays within multiplier * baseline.

    ``curve`` holds CurvePoints or plain ``(fraction, metric)`` pairs.
    """
    if not len(curve):
        raise ParameterError("breakdown_fraction needs a non-empty curve")
    limit = tolerance_multiplier * baseline_metric
    points = [(p.fraction_pruned, p.metric_value) if isinstance(p, CurvePoint) else p for p in curve]
    ok = [f for f, value in points if value <= limit]
    return max(ok) if ok else 0.0


def write_curves_csv(points, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in points:
            w.writerow([p.rule, repr(p.fraction_pruned), p.metric_name, repr(p.metric_value),
                        p.n_weights_total, p.n_weights_pruned])


def read_curves_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [
        CurvePoint(r["rule"], float(r["fraction_pruned"]), r["metric_name"], float(r["metric_value"]),
                   int(r["n_weights_total"]), int(r["n_weights_pruned"]))
        for r in rows
    ]
