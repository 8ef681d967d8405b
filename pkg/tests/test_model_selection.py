import numpy as np
import pytest
from joblib import parallel_config

from fgel.estimators.model_selection import (
    REPORT_COLUMNS,
    TuningGrid,
    mmr_validation_loss,
    mse_validation_loss,
    tune,
)
from fgel.models.dataset import Dataset
from fgel.models.errors import ConfigError, OptimizationError
from fgel.models.moments import LinearResidual
from fgel.models.results import EstimatorResult
from fgel.utils.kernel import GramSet


def slope_factory(train, lam, divergence):
    """Pretends to fit and returns theta = lambda."""
    return EstimatorResult("stub", np.array([lam]))


def failing_above_one(train, lam, divergence):
    if lam > 1.0:
        raise OptimizationError("did not converge")
    return EstimatorResult("stub", np.array([lam]))


def always_failing(train, lam, divergence):
    raise OptimizationError("did not converge")


def test_validation_losses_vanish_at_the_truth(noiseless_line):
    moments = LinearResidual(1)
    assert mmr_validation_loss(np.array([1.7]), noiseless_line, moments) == 0.0
    assert mse_validation_loss(np.array([1.7]), noiseless_line, moments) == 0.0


def test_mmr_validation_loss_with_given_gram():
    x = np.array([1.0, 2.0])
    data = Dataset(np.column_stack([x, np.zeros(2)]), x[:, None])
    grams = GramSet([np.array([[1.0, 0.5], [0.5, 1.0]])], [1.0])
    # psi = -theta x = (-1, -2); psi^T K psi / n^2 = (1 + 2 + 4) / 4
    assert mmr_validation_loss(np.array([1.0]), data, LinearResidual(1), grams) == pytest.approx(1.75)
    assert mse_validation_loss(np.array([1.0]), data, LinearResidual(1)) == pytest.approx(2.5)


def test_grid_order_and_validation():
    grid = TuningGrid((0.1, 1.0), ("chi2", "kl"))
    assert grid.candidates() == [(0.1, "chi2"), (1.0, "chi2"), (0.1, "kl"), (1.0, "kl")]
    with pytest.raises(ConfigError):
        TuningGrid((), ("chi2",))
    with pytest.raises(ConfigError):
        TuningGrid((0.1,), ())


def test_selects_the_zero_loss_candidate(noiseless_line):
    grid = TuningGrid((0.5, 1.7, 3.0), ("chi2",))
    result, report = tune(noiseless_line, noiseless_line, grid, slope_factory, LinearResidual(1))
    assert result.theta_hat.tolist() == [1.7]
    assert report.best.candidate == 1
    assert report.best.val_loss == 0.0
    assert [entry.val_loss > 0 for entry in report.entries] == [True, False, True]


def test_ties_go_to_the_first_candidate(noiseless_line):
    grid = TuningGrid((1.7,), ("chi2", "kl"))
    _, report = tune(noiseless_line, noiseless_line, grid, slope_factory, LinearResidual(1), scorer="mse")
    assert report.best.candidate == 0
    assert report.best.divergence == "chi2"


def test_failed_candidates_score_infinity(noiseless_line):
    grid = TuningGrid((0.5, 1.7), ("chi2",))
    result, report = tune(noiseless_line, noiseless_line, grid, failing_above_one, LinearResidual(1))
    assert result.theta_hat.tolist() == [0.5]
    assert report.entries[1].val_loss == np.inf
    assert report.entries[1].error == "did not converge"
    assert report.to_dict()["failed"] == [1]


def test_all_candidates_failing(noiseless_line):
    grid = TuningGrid((0.5, 1.7), ("chi2",))
    with pytest.raises(OptimizationError, match="All tuning candidates failed"):
        tune(noiseless_line, noiseless_line, grid, always_failing, LinearResidual(1))


def test_unknown_scorer(noiseless_line):
    with pytest.raises(ConfigError):
        tune(noiseless_line, noiseless_line, TuningGrid((1.0,), ("chi2",)), slope_factory, LinearResidual(1), scorer="r2")


def test_parallel_grid_keeps_order(noiseless_line):
    grid = TuningGrid((0.5, 1.0, 1.7, 2.0, 3.0), ("chi2", "kl"))
    _, serial = tune(noiseless_line, noiseless_line, grid, slope_factory, LinearResidual(1))
    with parallel_config(backend="threading"):
        _, parallel = tune(noiseless_line, noiseless_line, grid, slope_factory, LinearResidual(1), jobs=2)

    def rows(report):
        return [(e.candidate, e.lam, e.divergence, e.val_loss) for e in report.entries]

    assert rows(parallel) == rows(serial)
    assert [e.candidate for e in parallel.entries] == list(range(10))


def test_report_frame(noiseless_line):
    grid = TuningGrid((0.5, 1.7), ("chi2",))
    _, report = tune(noiseless_line, noiseless_line, grid, slope_factory, LinearResidual(1))
    frame = report.to_frame()
    assert list(frame.columns) == REPORT_COLUMNS
    assert frame["candidate"].tolist() == [0, 1]
    assert frame["train_seconds"].isna().all()

    _, timed = tune(noiseless_line, noiseless_line, grid, slope_factory, LinearResidual(1), record_timings=True)
    assert all(entry.train_seconds >= 0 for entry in timed.entries)
