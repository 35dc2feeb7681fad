"""Soft-target retraining of a smaller student network."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ParameterError, ShapeError, UnsupportedTask
from .network import Network, PolynomialDecay, logits, train_mn
from .noise import Constant, expectation_correction

__all__ = [
    "DistillConfig",
    "soft_targets",
    "param_count",
    "student_dims_for_budget",
    "retrain_student",
]


@dataclass(frozen=True)
class DistillConfig:
    student_layer_dims: list
    activations: list
    temperature: float = 1.0
    epochs: int = 50
    batch_size: int = 50
    schedule: PolynomialDecay = field(default_factory=lambda: PolynomialDecay(1.0, 10.0, 0.55))

    def __post_init__(self):
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        if len(self.activations) != len(self.student_layer_dims) - 1:
            raise ShapeError("student needs one activation per layer")


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def soft_targets(teacher, X, temperature=1.0, correction=None, correction_factor=None):
    """Temperature-scaled softmax of the (expectation-corrected) teacher's logits."""
    if teacher.layer_specs[-1].activation != "softmax":
        raise UnsupportedTask("soft targets need a softmax classification teacher")
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    if correction is not None:
        teacher = expectation_correction(teacher, correction, correction_factor)
    return _softmax(logits(teacher, X) / temperature)


def param_count(dims):
    return sum((a + 1) * b for a, b in zip(dims[:-1], dims[1:]))


def student_dims_for_budget(teacher_dims, budget):
    """Hidden widths scaled by one shared multiplier to hit ``budget`` x teacher params.

    Input and output widths are fixed. The multiplier is found by bisection,
    then each hidden width is rounded to the nearest integer (at least 1); of
    the floor/ceil candidates for the multiplier, the one whose parameter
    count is closest to the target wins.
    """
    teacher_dims = [int(d) for d in teacher_dims]
    if not 0 < budget:
        raise ParameterError(f"budget must be positive, got {budget}")
    if len(teacher_dims) < 3:
        return list(teacher_dims)
    target = budget * param_count(teacher_dims)
    hidden = np.array(teacher_dims[1:-1], dtype=np.float64)

    def dims_at(s, rounding=np.rint):
        widths = np.maximum(rounding(s * hidden), 1).astype(int)
        return [teacher_dims[0], *widths.tolist(), teacher_dims[-1]]

    lo, hi = 0.0, 1.0
    while param_count(dims_at(hi, np.floor)) < target:
        hi *= 2
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if param_count([teacher_dims[0], *(mid * hidden).tolist(), teacher_dims[-1]]) < target:
            lo = mid
        else:
            hi = mid
    candidates = [dims_at(hi, f) for f in (np.floor, np.ceil, np.rint)]
    return min(candidates, key=lambda d: (abs(param_count(d) - target), param_count(d)))


def retrain_student(cfg, X, soft, rng, callback=None):
    """Train a freshly initialized student on soft targets with cross-entropy."""
    X = np.asarray(X, dtype=np.float64)
    soft = np.asarray(soft, dtype=np.float64)
    dims = list(cfg.student_layer_dims)
    if dims[0] != X.shape[1] or dims[-1] != soft.shape[1]:
        raise ShapeError(f"student dims {dims} do not fit X {X.shape} and targets {soft.shape}")
    student = Network.init(dims, list(cfg.activations), rng)
    data = Dataset(X, soft, "classification")
    return train_mn(student, data, Constant(1.0), cfg.epochs, cfg.batch_size, cfg.schedule, rng,
                    loss_kind="cross_entropy", callback=callback)
