"""Experiment configuration: a JSON file validated against a fixed schema.

Unknown keys anywhere are rejected before any computation starts. Relative
paths are resolved against the directory holding the config file.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError, ParameterError
from .gsm import GsmConfig
from .network import ACTIVATIONS, PolynomialDecay
from .noise import noise_from_config
from .posterior import SgldConfig
from .pruning import RULES

__all__ = ["ExperimentConfig", "load_config", "parse_config"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScheduleConfig(_Strict):
    a: float = Field(ge=0)
    b: float = Field(default=1.0, gt=0)
    gamma: float = Field(default=0.55, ge=0)

    def build(self):
        return PolynomialDecay(self.a, self.b, self.gamma)


class DatasetConfig(_Strict):
    kind: Literal["idx", "csv", "toy"]
    images: Optional[str] = None
    labels: Optional[str] = None
    path: Optional[str] = None
    target_column: Optional[str] = None
    task: Literal["classification", "regression"] = "classification"
    n_train: Optional[int] = Field(default=None, ge=1)
    n_validation: int = Field(default=0, ge=0)
    n_test: int = Field(default=0, ge=0)
    standardize_targets: bool = False
    n_classes: Optional[int] = Field(default=None, ge=2)
    toy_points: int = Field(default=200, ge=4)


class NetworkConfig(_Strict):
    hidden: list[int] = Field(default_factory=list)
    hidden_activation: str = "relu"
    output_activation: Optional[str] = None

    @field_validator("hidden_activation", "output_activation")
    @classmethod
    def _known(cls, v):
        if v is not None and v not in ACTIVATIONS:
            raise ValueError(f"unknown activation {v!r}")
        return v


class TrainingConfig(_Strict):
    epochs: int = Field(ge=0)
    batch_size: int = Field(ge=1)
    lr: ScheduleConfig
    prior_sigma0: Optional[float] = Field(default=None, gt=0)


class SgldSection(_Strict):
    lr: ScheduleConfig
    noise_variance_scale: float = Field(default=0.5, gt=0)
    prior_sigma0: float = Field(default=1.0, gt=0)
    burn_in: int = Field(default=1000, ge=0)
    thin: int = Field(default=1, ge=1)
    n_samples: int = Field(default=1000, ge=2)
    batch_size: int = Field(default=100, ge=1)

    def build(self):
        return SgldConfig(self.lr.build(), self.noise_variance_scale, self.prior_sigma0,
                          self.burn_in, self.thin, self.n_samples, self.batch_size)


class GsmSection(_Strict):
    sigma0: float = Field(default=1.0, gt=0)
    lambda_floor: float = Field(default=1e-8, gt=0)

    def build(self):
        return GsmConfig(self.sigma0, self.lambda_floor)


class PruneSection(_Strict):
    fractions: list[float] = Field(default_factory=lambda: [i / 20 for i in range(20)])
    rules: list[str] = Field(default_factory=lambda: list(RULES))
    snr_sigma_floor: float = Field(default=1e-8, gt=0)
    exempt_biases: bool = False
    breakdown_multiplier: float = Field(default=1.5, gt=0)
    target: Literal["trained", "posterior_mean"] = "trained"

    @field_validator("rules")
    @classmethod
    def _rules(cls, v):
        bad = [r for r in v if r not in RULES]
        if bad:
            raise ValueError(f"unknown prune rules {bad}; expected a subset of {list(RULES)}")
        return v

    @field_validator("fractions")
    @classmethod
    def _fractions(cls, v):
        if any(not 0 <= f <= 1 for f in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("fractions must lie in [0, 1] and be strictly increasing")
        return v


class DistillSection(_Strict):
    budgets: list[float] = Field(default_factory=list)
    temperature: float = Field(default=1.0, gt=0)
    epochs: int = Field(default=50, ge=0)
    batch_size: int = Field(default=50, ge=1)
    lr: ScheduleConfig = ScheduleConfig(a=1.0, b=10.0, gamma=0.55)

    @field_validator("budgets")
    @classmethod
    def _budgets(cls, v):
        if any(not 0 < b <= 1 for b in v):
            raise ValueError("budgets must lie in (0, 1]")
        return v


class VerifySection(_Strict):
    n_problems: int = Field(default=10, ge=1)
    n_draws_penalty: int = Field(default=100_000, ge=10)
    n_draws_sampler: int = Field(default=1_000_000, ge=10)
    n_identity_sets: int = Field(default=100, ge=1)
    em_iters: int = Field(default=100, ge=1)
    penalty_scale: float = 1.0


class ExperimentConfig(_Strict):
    seed: int = Field(ge=0, lt=2**64)
    output_dir: str = "out"
    dataset: Optional[DatasetConfig] = None
    network: NetworkConfig = NetworkConfig()
    noise: dict = Field(default_factory=lambda: {"kind": "constant", "c": 1.0})
    noise_correction_factor: Optional[float] = None
    training: Optional[TrainingConfig] = None
    sgld: Optional[SgldSection] = None
    gsm: GsmSection = GsmSection()
    prune: PruneSection = PruneSection()
    distill: DistillSection = DistillSection()
    verify: VerifySection = VerifySection()
    base_dir: str = "."

    @field_validator("noise")
    @classmethod
    def _noise(cls, v):
        noise_from_config(v)
        return v

    def noise_spec(self):
        return noise_from_config(self.noise)

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def require(self, *sections):
        missing = [s for s in sections if getattr(self, s) is None]
        if missing:
            raise ConfigError(f"config is missing required section(s): {missing}")


def parse_config(data, base_dir=".", seed=None):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "base_dir" in data:
        raise ConfigError("'base_dir' is set from the config file location and may not be given")
    data = dict(data, base_dir=str(base_dir))
    if seed is not None:
        data["seed"] = seed
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from None
    except ParameterError:
        raise


def load_config(path, seed=None):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_config(data, base_dir=path.parent, seed=seed)
