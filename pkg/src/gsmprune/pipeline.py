"""Config-driven experiment steps: train, sample, prune-sweep, verify, distill.

Each command is a function of (config, input files, seed) and writes its
artifacts into an output directory. Random streams are fixed per command, so
reruns reproduce every file byte for byte.
"""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from .data import load_csv, load_idx, split_rows, synth_two_class
from .distill import DistillConfig, param_count, retrain_student, soft_targets, student_dims_for_budget
from .errors import ConfigError, UnsupportedTask, VerificationFailed
from .network import Network, evaluate, load_network, save_network, train_mn
from .noise import expectation_correction
from .numerics import RngState
from .posterior import collect_moments, load_moments, save_moments
from .pruning import (
    CurvePoint,
    PruneRule,
    breakdown_fraction,
    read_curves_csv,
    sweep,
    write_curves_csv,
)
from .verify import VerifySettings, run_verification, write_report

__all__ = [
    "STREAMS",
    "load_splits",
    "eval_split",
    "metric_for",
    "build_network",
    "prune_target",
    "cmd_train",
    "cmd_sample",
    "cmd_prune_sweep",
    "cmd_verify",
    "cmd_distill",
]

log = logging.getLogger(__name__)

STREAMS = {"train": 1, "sample": 2, "distill": 3, "verify": 4, "toy_data": 5}

NETWORK_FILE = "network.bin"
TRAIN_LOG_FILE = "train_log.csv"
MOMENTS_FILE = "moments.bin"
SCATTER_FILE = "moments_scatter.csv"
CURVES_FILE = "prune_curves.csv"
REPORT_FILE = "verify_report.csv"


def load_splits(cfg):
    """Train/validation/test Datasets described by the config's dataset section."""
    cfg.require("dataset")
    ds = cfg.dataset
    if ds.kind == "idx":
        if not (ds.images and ds.labels):
            raise ConfigError("idx dataset needs 'images' and 'labels'")
        full = load_idx(cfg.resolve(ds.images), cfg.resolve(ds.labels), ds.n_classes or 10)
        n_train = len(full) - ds.n_validation - ds.n_test if ds.n_train is None else ds.n_train
        return split_rows(full, n_train, ds.n_validation, ds.n_test)
    if ds.kind == "csv":
        if not (ds.path and ds.target_column):
            raise ConfigError("csv dataset needs 'path' and 'target_column'")
        return load_csv(cfg.resolve(ds.path), ds.target_column, ds.task, ds.n_train, ds.n_validation,
                        ds.n_test, ds.standardize_targets, ds.n_classes)
    full = synth_two_class(ds.toy_points, RngState(cfg.seed, STREAMS["toy_data"]))
    n_train = len(full) - ds.n_validation - ds.n_test if ds.n_train is None else ds.n_train
    return split_rows(full, n_train, ds.n_validation, ds.n_test)


def eval_split(splits, prefer=("test", "validation", "train")):
    for name in prefer:
        if len(splits[name]):
            return splits[name]
    raise ConfigError("every data split is empty")


def metric_for(task):
    return "error_rate" if task == "classification" else "rmse"


def build_network(cfg, splits, rng):
    train = splits["train"]
    dims = [train.features.shape[1], *cfg.network.hidden, train.targets.shape[1]]
    out_act = cfg.network.output_activation
    if out_act is None:
        out_act = "softmax" if train.task == "classification" else "identity"
    acts = [cfg.network.hidden_activation] * len(cfg.network.hidden) + [out_act]
    return Network.init(dims, acts, rng)


def _out(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _corrected(cfg, net):
    return expectation_correction(net, cfg.noise_spec(), cfg.noise_correction_factor)


def cmd_train(cfg, out_dir):
    """Multiplicative-noise SGD; writes the raw trained network and a per-epoch log."""
    cfg.require("dataset", "training")
    out = _out(out_dir)
    rng = RngState(cfg.seed, STREAMS["train"])
    splits = load_splits(cfg)
    spec = cfg.noise_spec()
    net = build_network(cfg, splits, rng)
    monitor = eval_split(splits, ("validation", "train"))
    metric = metric_for(splits["train"].task)
    rows = []

    def on_epoch(epoch, current, mean_loss):
        value = evaluate(_corrected(cfg, current), monitor, metric)
        rows.append((epoch, mean_loss, value))

    t = cfg.training
    net = train_mn(net, splits["train"], spec, t.epochs, t.batch_size, t.lr.build(), rng,
                   prior_sigma0=t.prior_sigma0, callback=on_epoch)
    save_network(net, out / NETWORK_FILE)
    with open(out / TRAIN_LOG_FILE, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "metric_name", "validation_metric"])
        for epoch, value, m in rows:
            w.writerow([epoch, repr(float(value)), metric, repr(float(m))])
    final = rows[-1][2] if rows else evaluate(_corrected(cfg, net), monitor, metric)
    log.info("final validation %s on %s split: %.6g", metric, monitor.split, final)
    return {"network": out / NETWORK_FILE, "log": out / TRAIN_LOG_FILE, "final_metric": final}


def cmd_sample(cfg, net_path, out_dir):
    """SGLD from the expectation-corrected network; writes moments and a (|mu|, sigma) scatter."""
    cfg.require("dataset", "sgld")
    out = _out(out_dir)
    rng = RngState(cfg.seed, STREAMS["sample"])
    splits = load_splits(cfg)
    net = _corrected(cfg, load_network(net_path))
    moments, _ = collect_moments(net, splits["train"], cfg.sgld.build(), rng)
    save_moments(moments, out / MOMENTS_FILE)
    with open(out / SCATTER_FILE, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["layer", "row", "col", "abs_mu", "sigma"])
        for l, (mu, sd) in enumerate(zip(moments.mean, moments.std())):
            for (r, c), m in np.ndenumerate(mu):
                w.writerow([l, r, c, repr(float(abs(m))), repr(float(sd[r, c]))])
    return {"moments": out / MOMENTS_FILE, "scatter": out / SCATTER_FILE}


def prune_target(cfg, net, moments):
    """Network whose weights get pruned: the corrected trained net or the posterior mean."""
    net = _corrected(cfg, net)
    moments.check_matches(net)
    if cfg.prune.target == "posterior_mean":
        net = net.copy()
        for w, mu in zip(net.weights, moments.mean):
            w[...] = mu
    return net


def _merge_curves(path, rows, replace_rule=None):
    """Rows of ``path`` minus ``replace_rule`` rows, then ``rows`` appended."""
    kept = []
    if replace_rule is not None and Path(path).exists():
        kept = [p for p in read_curves_csv(path) if p.rule != replace_rule]
    write_curves_csv(kept + list(rows), path)


def cmd_prune_sweep(cfg, net_path, moments_path, out_dir):
    """One curve per rule plus a combined CSV; returns the breakdown fraction per rule."""
    cfg.require("dataset")
    out = _out(out_dir)
    splits = load_splits(cfg)
    data = eval_split(splits)
    metric = metric_for(data.task)
    moments = load_moments(moments_path)
    net = prune_target(cfg, load_network(net_path), moments)
    p = cfg.prune
    baseline = evaluate(net, data, metric)
    combined, breakdowns = [], {}
    for kind in p.rules:
        rule = PruneRule(kind, p.snr_sigma_floor)
        curve = sweep(net, moments, rule, p.fractions, data, metric, exempt_biases=p.exempt_biases)
        write_curves_csv(curve, out / f"prune_{kind}.csv")
        combined.extend(curve)
        breakdowns[kind] = breakdown_fraction(curve, baseline, p.breakdown_multiplier)
    # distill rows from an earlier distill run survive a re-sweep
    existing = read_curves_csv(out / CURVES_FILE) if (out / CURVES_FILE).exists() else []
    write_curves_csv(combined + [q for q in existing if q.rule == "distill"], out / CURVES_FILE)
    return breakdowns


def cmd_verify(cfg, out_dir):
    """Run the oracle suite, write the report, raise VerificationFailed on any failing row."""
    out = _out(out_dir)
    v = cfg.verify
    settings = VerifySettings(v.n_problems, v.n_draws_penalty, v.n_draws_sampler, v.n_identity_sets,
                              v.em_iters, cfg.gsm.sigma0, cfg.gsm.lambda_floor, v.penalty_scale)
    results = run_verification(settings, RngState(cfg.seed, STREAMS["verify"]))
    write_report(results, out / REPORT_FILE)
    failed = [r.check_name for r in results if not r.passed]
    if failed:
        raise VerificationFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return results


def cmd_distill(cfg, net_path, out_dir):
    """Retrain students on the teacher's soft targets at each parameter budget."""
    cfg.require("dataset")
    out = _out(out_dir)
    d = cfg.distill
    teacher = load_network(net_path)
    if teacher.layer_specs[-1].activation != "softmax":
        raise UnsupportedTask("distillation needs a softmax classification teacher")
    if not d.budgets:
        log.warning("distill: empty budget list, nothing to do")
        return []
    splits = load_splits(cfg)
    data = eval_split(splits)
    metric = metric_for(data.task)
    rng = RngState(cfg.seed, STREAMS["distill"])
    soft = soft_targets(teacher, splits["train"].features, d.temperature, cfg.noise_spec(),
                        cfg.noise_correction_factor)
    total = param_count(teacher.dims)
    points = []
    for budget in d.budgets:
        dims = student_dims_for_budget(teacher.dims, budget)
        dcfg = DistillConfig(dims, teacher.activations, d.temperature, d.epochs, d.batch_size, d.lr.build())
        student = retrain_student(dcfg, splits["train"].features, soft, rng.split())
        value = evaluate(student, data, metric)
        if not math.isfinite(value):
            raise ConfigError(f"student metric is not finite at budget {budget}")
        points.append(CurvePoint("distill", 1.0 - budget, metric, value, total, total - param_count(dims)))
    write_curves_csv(points, out / "prune_distill.csv")
    _merge_curves(out / CURVES_FILE, points, replace_rule="distill")
    return points
