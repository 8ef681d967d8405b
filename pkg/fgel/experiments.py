"""
Replicate protocols for the two synthetic studies.

heteroskedastic: y = 1.7 x + eps, sd(eps | x) = 5 x^2. Per run the squared
    parameter error (theta_hat - 1.7)^2 is recorded.
iv: y = f0(x) + e + delta, x = z + e + gamma. Per run the test MSE of the
    fitted structural function against f0 on fresh test draws is recorded.

Every task (replicate, n, f0) owns RngStream(seed, replicate, (n, f0 index))
and draws its train, validation and test samples from it in that order.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import integrate, stats

from fgel.estimators.registry import Fit, TuningDefaults, fit_estimator
from fgel.models.dataset import (
    HETEROSKEDASTIC_THETA,
    IV_FUNCTIONS,
    Dataset,
    RngStream,
    gen_heteroskedastic,
    gen_iv,
    iv_function,
)
from fgel.models.errors import ConfigError, DegenerateDataError, FgelError
from fgel.models.run_config import RunConfig

logger = logging.getLogger(__name__)

EXPERIMENTS = ("heteroskedastic", "iv")
DEFAULT_ESTIMATORS = {
    "heteroskedastic": ["lsq", "kernel_fgel"],
    "iv": ["lsq", "kernel_fgel"],
}
RUN_COLUMNS = ["run", "estimator", "n", "f0", "mse", "seconds"]
SUMMARY_COLUMNS = ["estimator", "n", "f0", "runs", "mean", "std_err"]


@dataclass
class ExperimentSettings:
    """Profile-level defaults that a run configuration may leave unset."""

    replicates: int
    iv_test_size: int
    lambdas: list[float]
    divergences: list[str]
    jobs: int = 1


def draw_samples(cfg: RunConfig, experiment: str, n: int, f0: str | None, stream: RngStream, test_size: int = 0):
    """Train, validation (same size) and optional test samples, drawn in that order."""
    if experiment == "heteroskedastic":
        train, _ = gen_heteroskedastic(n, stream, cfg.noise_scale, cfg.noise)
        validation, _ = gen_heteroskedastic(n, stream, cfg.noise_scale, cfg.noise)
        return train, validation, None
    if experiment == "iv":
        train = gen_iv(n, f0, stream, cfg.noise_scale)
        validation = gen_iv(n, f0, stream, cfg.noise_scale)
        test = gen_iv(test_size, f0, stream, cfg.noise_scale) if test_size else None
        return train, validation, test
    raise ConfigError(f"Unknown experiment '{experiment}'. Allowed: {', '.join(EXPERIMENTS)}")


def score_fit(fit: Fit, experiment: str, f0: str | None, test: Dataset | None) -> float:
    if experiment == "heteroskedastic":
        return float(np.sum((np.asarray(fit.result.theta_hat) - HETEROSKEDASTIC_THETA) ** 2))
    truth = iv_function(f0)(test.features[:, 0])
    return float(np.mean((fit.predict(test.features) - truth) ** 2))


def run_task(cfg: RunConfig, experiment: str, replicate: int, n: int, f0: str | None, estimators: list[str], settings: ExperimentSettings) -> list[dict]:
    f0_index = list(IV_FUNCTIONS).index(f0) if f0 else 0
    stream = RngStream(cfg.seed, replicate, (n, f0_index))
    test_size = settings.iv_test_size if experiment == "iv" else 0
    train, validation, test = draw_samples(cfg, experiment, n, f0, stream, test_size)
    defaults = TuningDefaults(settings.lambdas, settings.divergences, jobs=1)

    rows = []
    for name in estimators:
        started = time.perf_counter()
        try:
            fit = fit_estimator(name, train, validation, cfg, stream.child(100), defaults)
            mse = score_fit(fit, experiment, f0, test)
        except FgelError as exc:
            logger.warning("Run %d %s n=%d %s failed: %s", replicate, name, n, f0 or "", exc)
            mse = np.nan
        seconds = time.perf_counter() - started if cfg.record_timings else None
        rows.append({"run": replicate, "estimator": name, "n": n, "f0": f0 or "", "mse": mse, "seconds": seconds})
    logger.info("Finished run %d (n=%d%s)", replicate, n, f", f0={f0}" if f0 else "")
    return rows


def run_experiment(experiment: str, cfg: RunConfig, settings: ExperimentSettings) -> pd.DataFrame:
    """Long-format results, one row per (run, estimator, n, f0), in task order."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"Unknown experiment '{experiment}'. Allowed: {', '.join(EXPERIMENTS)}")
    cfg = cfg.model_copy(update={"experiment": experiment})
    estimators = cfg.estimator_names(DEFAULT_ESTIMATORS[experiment])
    replicates = cfg.seeds or settings.replicates
    f0_names = cfg.f0_names if experiment == "iv" else [None]

    tasks = [
        (replicate, n, f0)
        for replicate in range(replicates)
        for n in cfg.sizes
        for f0 in f0_names
    ]
    chunks = Parallel(n_jobs=settings.jobs)(
        delayed(run_task)(cfg, experiment, replicate, n, f0, estimators, settings)
        for replicate, n, f0 in tasks
    )
    return pd.DataFrame([row for chunk in chunks for row in chunk], columns=RUN_COLUMNS)


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error (sample std / sqrt(runs)) per (estimator, n, f0), failed runs excluded."""
    rows = []
    for (estimator, n, f0), group in runs.groupby(["estimator", "n", "f0"], sort=False):
        values = group["mse"].dropna().to_numpy(dtype=float)
        count = values.size
        mean = float(values.mean()) if count else np.nan
        std_err = float(values.std(ddof=1) / np.sqrt(count)) if count > 1 else np.nan
        rows.append({"estimator": estimator, "n": n, "f0": f0, "runs": count, "mean": mean, "std_err": std_err})
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


# ---------------------------------------------------------------------------
# NORMALITY CHECK
# ---------------------------------------------------------------------------

def efficient_variance(noise: str = "smooth", noise_scale: float = 1.0) -> float:
    """Xi_0 = 1 / E[x^2 / sigma^2(x)] for E[y - x theta | x] = 0 with x ~ U[-1.5, 1.5]."""
    if noise != "smooth":
        raise DegenerateDataError("The efficient variance is zero for sd(eps | x) = 5 x^2")
    information, _ = integrate.quad(lambda x: x**2 / (noise_scale * (1.0 + x**2)) ** 2 / 3.0, -1.5, 1.5)
    return 1.0 / information


def _standardized_error(cfg: RunConfig, name: str, n: int, replicate: int, settings: ExperimentSettings) -> float:
    stream = RngStream(cfg.seed, replicate, (n,))
    train, validation, _ = draw_samples(cfg, "heteroskedastic", n, None, stream)
    defaults = TuningDefaults(settings.lambdas, settings.divergences, jobs=1)
    fit = fit_estimator(name, train, validation, cfg, stream.child(100), defaults)
    return float(np.sqrt(n) * (fit.result.theta_hat[0] - HETEROSKEDASTIC_THETA))


def normality_study(cfg: RunConfig, settings: ExperimentSettings) -> dict:
    """Standardized errors sqrt(n) (theta_hat - theta_0) on the smooth-noise process,
    compared against the efficient variance."""
    n = cfg.sizes[0]
    cfg = cfg.model_copy(update={"experiment": "heteroskedastic", "noise": "smooth"})
    replicates = cfg.seeds or settings.replicates
    name = cfg.estimator or "kernel_fgel"

    errors = np.array(
        Parallel(n_jobs=settings.jobs)(
            delayed(_standardized_error)(cfg, name, n, replicate, settings) for replicate in range(replicates)
        )
    )
    xi0 = efficient_variance("smooth", cfg.noise_scale)
    variance = float(errors.var(ddof=1))
    return {
        "estimator": name,
        "n": n,
        "replicates": replicates,
        "skewness": float(stats.skew(errors)),
        "variance": variance,
        "efficient_variance": xi0,
        "variance_ratio": variance / xi0,
    }


# ---------------------------------------------------------------------------
# SINGLE FITS
# ---------------------------------------------------------------------------

def draw_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset | None]:
    """Training and validation samples for one fit.

    With `data_path` the CSV is the training sample and tunable estimators
    split it in half for validation. Otherwise both samples come from the
    configured process (heteroskedastic unless `experiment` says otherwise)
    using RngStream(seed, 0).
    """
    if cfg.data_path:
        path = Path(cfg.data_path)
        if not path.is_file():
            raise ConfigError(f"Data file not found: {path}")
        return Dataset.from_csv(path), None
    if len(cfg.sizes) != 1:
        raise ConfigError("A single fit needs one sample size, got a list for 'n'")
    if len(cfg.f0_names) != 1:
        raise ConfigError("A single fit needs one f0, got a list for 'f0'")
    experiment = cfg.experiment or "heteroskedastic"
    f0 = cfg.f0_names[0] if experiment == "iv" else None
    train, validation, _ = draw_samples(cfg, experiment, cfg.sizes[0], f0, RngStream(cfg.seed, 0))
    return train, validation
