"""
Run configuration: the flat JSON file passed with --config (or the body of
POST /api/estimate). Unknown keys and unknown names are rejected.

Example:
{
    "experiment": "iv",
    "estimators": ["lsq", "kernel_fgel"],
    "n": [500, 2000],
    "f0": ["abs", "step"],
    "seed": 1,
    "seeds": 10,
    "lambda_grid": [0.001, 0.01, 0.1]
}
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from fgel.models.dataset import IV_FUNCTIONS
from fgel.models.divergence import DIVERGENCES
from fgel.models.errors import ConfigError

FIXED_DIVERGENCE_VARIANTS = ("chi2", "el", "kl")
BASE_ESTIMATORS = ("lsq", "cue", "owgmm", "mmr", "kernel_fgel", "kernel_vmm", "neural_fgel")
ESTIMATORS = BASE_ESTIMATORS + tuple(f"kernel_fgel_{name}" for name in FIXED_DIVERGENCE_VARIANTS)
TUNABLE_ESTIMATORS = ("kernel_fgel", "kernel_vmm", "neural_fgel", *(f"kernel_fgel_{n}" for n in FIXED_DIVERGENCE_VARIANTS))


def _check_estimator(name: str) -> str:
    if name not in ESTIMATORS:
        raise ValueError(f"unknown estimator '{name}'. Allowed: {', '.join(ESTIMATORS)}")
    return name


def _check_divergence(name: str) -> str:
    if name not in DIVERGENCES:
        raise ValueError(f"unknown divergence '{name}'. Allowed: {', '.join(DIVERGENCES)}")
    return name


def _check_f0(name: str) -> str:
    if name not in IV_FUNCTIONS:
        raise ValueError(f"unknown f0 '{name}'. Allowed: {', '.join(IV_FUNCTIONS)}")
    return name


def _as_list(value):
    return value if isinstance(value, list) else [value]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    experiment: Literal["heteroskedastic", "iv"] | None = None
    estimator: str | None = None
    estimators: list[str] | None = None
    divergence: str | None = None
    divergences: list[str] | None = None
    lam: float | None = Field(None, alias="lambda", gt=0)
    lambda_grid: list[float] | None = None
    n: int | list[int] = 256
    seed: int = Field(0, ge=0)
    seeds: int | None = Field(None, ge=1)
    f0: str | list[str] = "sin"
    net_widths: list[int] = Field(default_factory=lambda: [20, 3])
    instrument_widths: list[int] = Field(default_factory=lambda: [20, 3])
    model: Literal["linear", "mlp"] = "linear"
    scorer: Literal["mmr", "mse"] = "mmr"
    inner_method: Literal["auto", "lbfgs", "closed_form"] = "auto"
    noise: Literal["quadratic", "smooth"] = "quadratic"
    noise_scale: float = Field(1.0, ge=0)
    rounds: int = Field(5000, ge=1)
    lr: float = Field(5e-4, gt=0)
    record_timings: bool = False
    data_path: str | None = None
    output_dir: str | None = None

    @field_validator("estimator")
    @classmethod
    def _estimator(cls, value):
        return value if value is None else _check_estimator(value)

    @field_validator("estimators")
    @classmethod
    def _estimators(cls, value):
        if value is None:
            return value
        if not value:
            raise ValueError("estimators must not be empty")
        return [_check_estimator(name) for name in value]

    @field_validator("divergence")
    @classmethod
    def _divergence(cls, value):
        return value if value is None else _check_divergence(value)

    @field_validator("divergences")
    @classmethod
    def _divergences(cls, value):
        if value is None:
            return value
        if not value:
            raise ValueError("divergences must not be empty")
        return [_check_divergence(name) for name in value]

    @field_validator("lambda_grid")
    @classmethod
    def _lambda_grid(cls, value):
        if value is not None and (not value or any(lam <= 0 for lam in value)):
            raise ValueError("lambda_grid must be a non-empty list of positive values")
        return value

    @field_validator("n")
    @classmethod
    def _sizes(cls, value):
        if any(size < 2 for size in _as_list(value)):
            raise ValueError("sample sizes must be at least 2")
        return value

    @field_validator("f0")
    @classmethod
    def _f0(cls, value):
        for name in _as_list(value):
            _check_f0(name)
        return value

    @field_validator("net_widths", "instrument_widths")
    @classmethod
    def _widths(cls, value):
        if any(width < 1 for width in value):
            raise ValueError("layer widths must be positive")
        return value

    # -- convenience views --------------------------------------------------

    @property
    def sizes(self) -> list[int]:
        return _as_list(self.n)

    @property
    def f0_names(self) -> list[str]:
        return _as_list(self.f0)

    def estimator_names(self, default: list[str]) -> list[str]:
        if self.estimators:
            return list(self.estimators)
        if self.estimator:
            return [self.estimator]
        return list(default)

    def to_dict(self) -> dict:
        return self.model_dump(by_alias=True, exclude_none=True)


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a run configuration file. Raises ConfigError or pydantic.ValidationError."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return RunConfig.model_validate(payload)
