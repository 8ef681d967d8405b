"""
Hyperparameter selection on a held-out validation sample.

Every candidate of the (divergence x lambda) grid is fitted on the training
sample and scored on the validation sample; the lowest validation loss wins,
with ties going to the earlier candidate.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from fgel.estimators.baselines import mmr_objective
from fgel.models.dataset import Dataset
from fgel.models.errors import ConfigError, FgelError, OptimizationError
from fgel.models.moments import MomentFunction
from fgel.models.results import EstimatorResult
from fgel.utils.kernel import GramSet

logger = logging.getLogger(__name__)

SCORERS = ("mmr", "mse")
REPORT_COLUMNS = ["candidate", "lambda", "divergence", "val_loss", "train_seconds"]

# (train data, lambda, divergence name) -> fitted result
EstimatorFactory = Callable[[Dataset, float, str], EstimatorResult]


def mmr_validation_loss(
    theta: np.ndarray, data: Dataset, moments: MomentFunction, grams: GramSet | None = None
) -> float:
    """(1/n^2) sum_r psi_r^T K_r psi_r on validation data; Grams default to the median heuristic on z."""
    if grams is None:
        grams = GramSet.from_instruments(data.z, moments.m)
    return mmr_objective(moments.evaluate(data.x, theta), grams)


def mse_validation_loss(theta: np.ndarray, data: Dataset, moments: MomentFunction) -> float:
    return float(np.mean(moments.evaluate(data.x, theta) ** 2))


@dataclass(frozen=True)
class TuningGrid:
    lambdas: tuple[float, ...]
    divergences: tuple[str, ...]

    def __post_init__(self):
        if not self.lambdas or not self.divergences:
            raise ConfigError("Tuning grid must contain at least one lambda and one divergence")

    def candidates(self) -> list[tuple[float, str]]:
        """Grid order: divergences outer, lambdas inner."""
        return [(lam, div) for div in self.divergences for lam in self.lambdas]


@dataclass
class GridEntry:
    candidate: int
    lam: float
    divergence: str
    val_loss: float
    train_seconds: float | None
    result: EstimatorResult | None = None
    error: str | None = None


@dataclass
class TuningReport:
    entries: list[GridEntry] = field(default_factory=list)

    @property
    def best(self) -> GridEntry:
        losses = np.array([entry.val_loss for entry in self.entries])
        return self.entries[int(np.argmin(losses))]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            [e.candidate, e.lam, e.divergence, e.val_loss, e.train_seconds]
            for e in self.entries
        ]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def to_dict(self) -> dict:
        best = self.best
        return {
            "best_candidate": best.candidate,
            "best_lambda": best.lam,
            "best_divergence": best.divergence,
            "best_val_loss": best.val_loss,
            "failed": [e.candidate for e in self.entries if e.error is not None],
        }


def _fit_candidate(index, lam, divergence, train, validation, moments, grams, factory, scorer, record_timings):
    started = time.perf_counter()
    try:
        result = factory(train, lam, divergence)
    except FgelError as exc:
        return GridEntry(index, lam, divergence, np.inf, None, None, str(exc))
    elapsed = time.perf_counter() - started if record_timings else None

    if scorer == "mmr":
        loss = mmr_validation_loss(result.theta_hat, validation, moments, grams)
    else:
        loss = mse_validation_loss(result.theta_hat, validation, moments)
    if not np.isfinite(loss):
        return GridEntry(index, lam, divergence, np.inf, elapsed, result, "non-finite validation loss")
    return GridEntry(index, lam, divergence, loss, elapsed, result)


def tune(
    train: Dataset,
    validation: Dataset,
    grid: TuningGrid,
    factory: EstimatorFactory,
    moments: MomentFunction,
    scorer: str = "mmr",
    jobs: int = 1,
    record_timings: bool = False,
) -> tuple[EstimatorResult, TuningReport]:
    if scorer not in SCORERS:
        raise ConfigError(f"Unknown scorer '{scorer}'. Allowed: {', '.join(SCORERS)}")
    grams = GramSet.from_instruments(validation.z, moments.m) if scorer == "mmr" else None

    entries = Parallel(n_jobs=jobs)(
        delayed(_fit_candidate)(index, lam, div, train, validation, moments, grams, factory, scorer, record_timings)
        for index, (lam, div) in enumerate(grid.candidates())
    )
    report = TuningReport(list(entries))
    for entry in report.entries:
        if entry.error is not None:
            logger.warning("Candidate %d (lambda=%g, %s) failed: %s", entry.candidate, entry.lam, entry.divergence, entry.error)

    if all(entry.result is None or not np.isfinite(entry.val_loss) for entry in report.entries):
        raise OptimizationError("All tuning candidates failed")
    best = report.best
    logger.info("Selected lambda=%g divergence=%s (validation loss %.6g)", best.lam, best.divergence, best.val_loss)
    return best.result, report
