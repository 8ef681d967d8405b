"""
Estimator dispatch by name.

`fit_estimator` turns a run configuration plus train/validation samples into a
fitted `Fit`: the result record and the moment function whose parameters it
holds, which the experiments use for prediction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from fgel.estimators.baselines import (
    FiniteMomentProblem,
    cue_estimate,
    lsq_estimate,
    mmr_estimate,
    owgmm_estimate,
)
from fgel.estimators.kernel_fgel import KernelFgelProblem, estimate
from fgel.estimators.model_selection import TuningGrid, TuningReport, tune
from fgel.estimators.neural_fgel import NeuralFgelProblem, neural_estimate
from fgel.models.dataset import Dataset, RngStream
from fgel.models.divergence import make_divergence
from fgel.models.errors import ConfigError
from fgel.models.moments import LinearResidual, MlpResidual, MomentFunction, ResidualMoment
from fgel.models.results import EstimatorResult
from fgel.models.run_config import RunConfig
from fgel.utils.kernel import GramSet
from fgel.utils.mlp import Mlp
from fgel.utils.optimize import OAdamConfig

logger = logging.getLogger(__name__)

DEFAULT_NEURAL_DIVERGENCE = "chi2"


@dataclass
class TuningDefaults:
    lambdas: list[float]
    divergences: list[str]
    jobs: int = 1


@dataclass
class Fit:
    result: EstimatorResult
    moments: ResidualMoment
    report: TuningReport | None = None

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.moments.predict(features, self.result.theta_hat)


def linear_model(data: Dataset, cfg: RunConfig) -> LinearResidual:
    """a x for the heteroskedastic study, a x + b for IV regression."""
    return LinearResidual(data.features.shape[1], intercept=cfg.experiment == "iv")


def build_model(data: Dataset, cfg: RunConfig, stream: RngStream) -> ResidualMoment:
    if cfg.model == "mlp":
        net = Mlp(data.features.shape[1], cfg.net_widths, 1)
        return MlpResidual(net, stream.child(0))
    return linear_model(data, cfg)


def _kernel_factory(moments: MomentFunction, cfg: RunConfig):
    def fit(data: Dataset, lam: float, divergence: str) -> EstimatorResult:
        problem = KernelFgelProblem(
            data,
            moments,
            GramSet.from_instruments(data.z, moments.m),
            make_divergence(divergence),
            lam,
            inner_method=cfg.inner_method,
        )
        return estimate(problem)

    return fit


def _neural_factory(moments: MomentFunction, cfg: RunConfig, stream: RngStream):
    def fit(data: Dataset, lam: float, divergence: str) -> EstimatorResult:
        instrument = Mlp(data.d_z, cfg.instrument_widths, moments.m)
        problem = NeuralFgelProblem(
            data,
            moments,
            instrument,
            make_divergence(divergence),
            lam,
            init_stream=stream,
            theta_cfg=OAdamConfig(lr=cfg.lr),
            omega_cfg=OAdamConfig(lr=cfg.lr),
            rounds=cfg.rounds,
        )
        return neural_estimate(problem)

    return fit


def _split(data: Dataset) -> tuple[Dataset, Dataset]:
    half = data.n // 2
    return data.take(np.arange(half)), data.take(np.arange(half, data.n))


def _fit_tunable(train, validation, cfg, defaults, moments, factory, divergences, force_grid=False):
    if cfg.lam is not None and len(divergences) == 1 and not force_grid:
        return Fit(factory(train, cfg.lam, divergences[0]), moments)
    if validation is None:
        train, validation = _split(train)
    lambdas = [cfg.lam] if cfg.lam is not None else (cfg.lambda_grid or defaults.lambdas)
    grid = TuningGrid(tuple(lambdas), tuple(divergences))
    result, report = tune(
        train, validation, grid, factory, moments,
        scorer=cfg.scorer, jobs=defaults.jobs, record_timings=cfg.record_timings,
    )
    return Fit(result, moments, report)


def fit_estimator(
    name: str,
    train: Dataset,
    validation: Dataset | None,
    cfg: RunConfig,
    stream: RngStream,
    defaults: TuningDefaults,
    force_grid: bool = False,
) -> Fit:
    """Fit estimator `name`. Kernel and neural FGEL tune lambda (and the divergence
    unless one is fixed) on `validation`; without a validation sample the
    training sample is split in half. `force_grid` runs the selection even for a
    single candidate so that a report is always attached."""
    if name == "lsq":
        model = linear_model(train, cfg)
        fit = Fit(lsq_estimate(train, intercept=model.intercept), model)
    elif name in ("cue", "owgmm"):
        model = linear_model(train, cfg)
        problem = FiniteMomentProblem(train, model)
        fit = Fit(cue_estimate(problem) if name == "cue" else owgmm_estimate(problem), model)
    elif name == "mmr":
        model = build_model(train, cfg, stream)
        fit = Fit(mmr_estimate(train, model, GramSet.from_instruments(train.z, model.m)), model)
    elif name.startswith("kernel_fgel"):
        model = build_model(train, cfg, stream)
        if name != "kernel_fgel":
            divergences = [name.removeprefix("kernel_fgel_")]
        elif cfg.divergence:
            divergences = [cfg.divergence]
        else:
            divergences = cfg.divergences or defaults.divergences
        fit = _fit_tunable(train, validation, cfg, defaults, model, _kernel_factory(model, cfg), divergences, force_grid)
    elif name == "kernel_vmm":
        model = build_model(train, cfg, stream)
        fit = _fit_tunable(train, validation, cfg, defaults, model, _kernel_factory(model, cfg), ["vmm_equiv"], force_grid)
    elif name == "neural_fgel":
        model = build_model(train, cfg, stream)
        divergence = cfg.divergence or DEFAULT_NEURAL_DIVERGENCE
        factory = _neural_factory(model, cfg, stream.child(1))
        fit = _fit_tunable(train, validation, cfg, defaults, model, factory, [divergence], force_grid)
    else:
        raise ConfigError(f"Unknown estimator '{name}'")

    fit.result.estimator = name
    logger.debug("Fitted %s: theta=%s", name, fit.result.theta_hat)
    return fit
