import json

import numpy as np
import pytest

from gsmprune.cli import main
from gsmprune.config import load_config, parse_config
from gsmprune.errors import ConfigError
from gsmprune.network import Network, load_network, save_network
from gsmprune.numerics import RngState
from gsmprune.posterior import load_moments
from gsmprune.pruning import read_curves_csv

from conftest import ROOT


def toy_config(**overrides):
    cfg = json.loads((ROOT / "configs" / "toy.json").read_text())
    cfg.pop("output_dir")
    cfg["verify"] = {"n_problems": 1, "n_draws_penalty": 20000, "n_draws_sampler": 100000,
                     "n_identity_sets": 5, "em_iters": 100}
    cfg["sgld"]["burn_in"] = 20
    cfg["sgld"]["n_samples"] = 50
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    return cfg


def write_config(tmp_path, name="cfg.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(toy_config(**overrides)))
    return str(path)


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def trained(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert run_cli("train", "--config", cfg, "--out", out) == 0
    return cfg, out


def read_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


class TestConfig:
    def test_seed_mandatory(self):
        data = toy_config()
        data.pop("seed")
        with pytest.raises(ConfigError, match="seed"):
            parse_config(data)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            parse_config(toy_config(training={"learning_rate": 1.0}))

    def test_bad_noise(self):
        with pytest.raises(ConfigError, match="keep_prob"):
            parse_config(toy_config(noise={"kind": "bernoulli", "keep_prob": 1.5}))

    def test_seed_override_and_paths(self, tmp_path):
        cfg = load_config(write_config(tmp_path), seed=99)
        assert cfg.seed == 99
        assert cfg.resolve("x.csv") == tmp_path / "x.csv"

    def test_frozen(self):
        cfg = parse_config(toy_config())
        with pytest.raises(Exception):
            cfg.seed = 3


class TestTrain:
    def test_toy_run(self, trained):
        _, out = trained
        assert (out / "network.bin").exists()
        lines = (out / "train_log.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,metric_name,validation_metric"
        assert len(lines) == 1 + 20
        assert float(lines[-1].split(",")[-1]) <= 0.1

    def test_invalid_noise_exit_1(self, tmp_path, capsys):
        cfg = write_config(tmp_path, noise={"kind": "bernoulli", "keep_prob": 0.0})
        assert run_cli("train", "--config", cfg, "--out", tmp_path / "o") == 1
        assert "keep_prob" in capsys.readouterr().err

    def test_unknown_key_exit_1(self, tmp_path):
        cfg = write_config(tmp_path, extra_section={})
        assert run_cli("train", "--config", cfg, "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_missing_config_exit_3(self, tmp_path):
        assert run_cli("train", "--config", tmp_path / "nope.json") == 3

    def test_rerun_identical(self, trained, tmp_path):
        cfg, out = trained
        assert run_cli("train", "--config", cfg, "--out", tmp_path / "again") == 0
        assert read_bytes(out) == read_bytes(tmp_path / "again")

    def test_seed_override_changes_network(self, trained, tmp_path):
        cfg, out = trained
        assert run_cli("train", "--config", cfg, "--out", tmp_path / "s", "--seed", 8) == 0
        assert (tmp_path / "s" / "network.bin").read_bytes() != (out / "network.bin").read_bytes()


class TestSample:
    def test_minimum_samples(self, trained, tmp_path):
        _, out = trained
        cfg = write_config(tmp_path, "min.json", sgld={"n_samples": 2, "burn_in": 0})
        assert run_cli("sample", "--config", cfg, "--net", out / "network.bin", "--out", out) == 0
        assert load_moments(out / "moments.bin").n == 2

    def test_zero_lr_zero_variance(self, trained, tmp_path):
        _, out = trained
        cfg = write_config(tmp_path, "zero.json", sgld={"lr": {"a": 0.0}})
        assert run_cli("sample", "--config", cfg, "--net", out / "network.bin", "--out", out) == 0
        for v in load_moments(out / "moments.bin").variance():
            np.testing.assert_array_equal(v, 0.0)

    def test_scatter_csv(self, trained):
        cfg, out = trained
        assert run_cli("sample", "--config", cfg, "--net", out / "network.bin", "--out", out) == 0
        lines = (out / "moments_scatter.csv").read_text().splitlines()
        assert lines[0] == "layer,row,col,abs_mu,sigma"
        assert len(lines) == 1 + load_network(out / "network.bin").n_weights


class TestPruneSweep:
    @pytest.fixture
    def sampled(self, trained):
        cfg, out = trained
        assert run_cli("sample", "--config", cfg, "--net", out / "network.bin", "--out", out) == 0
        return cfg, out

    def test_three_rules_share_baseline(self, sampled, capsys):
        cfg, out = sampled
        assert run_cli("prune-sweep", "--config", cfg, "--net", out / "network.bin",
                       "--moments", out / "moments.bin", "--out", out) == 0
        curves = read_curves_csv(out / "prune_curves.csv")
        assert {p.rule for p in curves} == {"snr", "spr", "magnitude"}
        base = {p.metric_value for p in curves if p.fraction_pruned == 0.0}
        assert len(base) == 1
        for rule in ("snr", "spr", "magnitude"):
            assert (out / f"prune_{rule}.csv").exists()
        assert "breakdown[spr]" in capsys.readouterr().out

    def test_fraction_zero_only(self, sampled, tmp_path):
        _, out = sampled
        cfg = write_config(tmp_path, "zero.json", prune={"fractions": [0.0]})
        assert run_cli("prune-sweep", "--config", cfg, "--net", out / "network.bin",
                       "--moments", out / "moments.bin", "--out", out) == 0
        values = {p.metric_value for p in read_curves_csv(out / "prune_curves.csv")}
        assert len(values) == 1

    def test_mismatched_moments_exit_3(self, sampled, tmp_path):
        cfg, out = sampled
        other = Network.init([2, 3, 2], ["tanh", "softmax"], RngState(0))
        save_network(other, tmp_path / "other.bin")
        assert run_cli("prune-sweep", "--config", cfg, "--net", tmp_path / "other.bin",
                       "--moments", out / "moments.bin", "--out", out) == 3


class TestVerify:
    def test_passes(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run_cli("verify", "--config", cfg, "--out", tmp_path) == 0
        header = (tmp_path / "verify_report.csv").read_text().splitlines()[0].split(",")
        assert "rel_err" in header

    def test_corrupted_penalty_exit_4(self, tmp_path, capsys):
        cfg = write_config(tmp_path, verify={**toy_config()["verify"], "penalty_scale": 1.1})
        assert run_cli("verify", "--config", cfg, "--out", tmp_path) == 4
        assert "failed" in capsys.readouterr().err


class TestDistill:
    def test_rows_and_idempotent_merge(self, trained):
        cfg, out = trained
        for _ in range(2):
            assert run_cli("distill", "--config", cfg, "--net", out / "network.bin", "--out", out) == 0
        rows = [p for p in read_curves_csv(out / "prune_curves.csv") if p.rule == "distill"]
        assert [p.fraction_pruned for p in rows] == [0.0, 0.5]
        assert rows[0].n_weights_pruned == 0

    def test_empty_budget_is_noop(self, trained, tmp_path, caplog):
        _, out = trained
        cfg = write_config(tmp_path, "empty.json", distill={"budgets": []})
        assert run_cli("distill", "--config", cfg, "--net", out / "network.bin", "--out", tmp_path / "d") == 0
        assert "empty budget" in caplog.text
        assert not (tmp_path / "d" / "prune_curves.csv").exists()

    def test_regression_teacher_exit_1(self, tmp_path):
        cfg = write_config(tmp_path)
        save_network(Network.init([2, 1], "identity", RngState(0)), tmp_path / "reg.bin")
        assert run_cli("distill", "--config", cfg, "--net", tmp_path / "reg.bin", "--out", tmp_path) == 1


class TestDeterminism:
    def test_every_command_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        snapshots = []
        for name in ("a", "b"):
            out = tmp_path / name
            net, mom = out / "network.bin", out / "moments.bin"
            assert run_cli("train", "--config", cfg, "--out", out) == 0
            assert run_cli("sample", "--config", cfg, "--net", net, "--out", out) == 0
            assert run_cli("prune-sweep", "--config", cfg, "--net", net, "--moments", mom, "--out", out) == 0
            assert run_cli("distill", "--config", cfg, "--net", net, "--out", out) == 0
            assert run_cli("verify", "--config", cfg, "--out", out) == 0
            snapshots.append(read_bytes(out))
        assert snapshots[0].keys() == snapshots[1].keys()
        assert len(snapshots[0]) == 10
        for key in snapshots[0]:
            assert snapshots[0][key] == snapshots[1][key], key
