import numpy as np
import pandas as pd
import pytest

from fgel import experiments
from fgel.estimators.registry import TuningDefaults, fit_estimator
from fgel.experiments import (
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    ExperimentSettings,
    draw_datasets,
    draw_samples,
    efficient_variance,
    normality_study,
    run_experiment,
    summarize,
)
from fgel.models.dataset import HETEROSKEDASTIC_THETA, RngStream, gen_heteroskedastic
from fgel.models.errors import ConfigError, DegenerateDataError, OptimizationError
from fgel.models.run_config import RunConfig

TUNING_LAMBDAS = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]


def settings(replicates=2, jobs=1, divergences=("chi2",)):
    return ExperimentSettings(replicates, 500, TUNING_LAMBDAS, list(divergences), jobs)


# ── BOOKKEEPING ───────────────────────────────────────────────────────────────

def test_summary_statistics():
    runs = pd.DataFrame(
        [
            [0, "b", 32, "", 5.0, None],
            [0, "a", 32, "", 1.0, None],
            [1, "a", 32, "", 2.0, None],
            [2, "a", 32, "", 3.0, None],
            [3, "a", 32, "", np.nan, None],
        ],
        columns=RUN_COLUMNS,
    )
    summary = summarize(runs)
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert summary["estimator"].tolist() == ["b", "a"]

    b, a = summary.iloc[0], summary.iloc[1]
    assert (b["runs"], b["mean"]) == (1, 5.0)
    assert np.isnan(b["std_err"])
    assert a["runs"] == 3
    assert a["mean"] == pytest.approx(2.0)
    assert a["std_err"] == pytest.approx(1.0 / np.sqrt(3))


def test_run_experiment_layout():
    cfg = RunConfig(estimators=["lsq", "mmr"], n=[32, 48], seeds=2)
    runs = run_experiment("heteroskedastic", cfg, settings())
    assert list(runs.columns) == RUN_COLUMNS
    assert runs[["run", "estimator", "n"]].values.tolist() == [
        [0, "lsq", 32], [0, "mmr", 32], [0, "lsq", 48], [0, "mmr", 48],
        [1, "lsq", 32], [1, "mmr", 32], [1, "lsq", 48], [1, "mmr", 48],
    ]
    assert runs["seconds"].isna().all()


def test_replicates_fall_back_to_profile_setting():
    runs = run_experiment("heteroskedastic", RunConfig(estimators=["lsq"], n=32), settings(replicates=3))
    assert runs["run"].tolist() == [0, 1, 2]


def test_task_draws_do_not_depend_on_the_grid():
    alone = run_experiment("heteroskedastic", RunConfig(estimators=["lsq"], n=32, seeds=2), settings())
    joint = run_experiment("heteroskedastic", RunConfig(estimators=["lsq"], n=[64, 32], seeds=2), settings())
    assert joint[joint["n"] == 32]["mse"].tolist() == alone["mse"].tolist()


def test_record_timings():
    runs = run_experiment("heteroskedastic", RunConfig(estimators=["lsq"], n=32, seeds=1, record_timings=True), settings())
    assert (runs["seconds"] >= 0).all()


def test_failed_fits_leave_blank_errors(monkeypatch):
    def flaky(name, *args, **kwargs):
        if name == "mmr":
            raise OptimizationError("did not converge")
        return fit_estimator(name, *args, **kwargs)

    monkeypatch.setattr(experiments, "fit_estimator", flaky)
    runs = run_experiment("heteroskedastic", RunConfig(estimators=["lsq", "mmr"], n=32, seeds=2), settings())
    assert runs[runs["estimator"] == "mmr"]["mse"].isna().all()
    assert runs[runs["estimator"] == "lsq"]["mse"].notna().all()

    summary = summarize(runs)
    mmr = summary[summary["estimator"] == "mmr"].iloc[0]
    assert mmr["runs"] == 0
    assert np.isnan(mmr["mean"])


def test_iv_scores_against_the_structural_function():
    cfg = RunConfig(estimators=["lsq"], f0="linear", noise_scale=0.0, n=32, seeds=1)
    runs = run_experiment("iv", cfg, settings())
    assert runs["f0"].tolist() == ["linear"]
    assert runs["mse"].iloc[0] < 1e-12


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        run_experiment("bootstrap", RunConfig(), settings())
    with pytest.raises(ConfigError):
        draw_samples(RunConfig(), "bootstrap", 10, None, RngStream(0, 0))


# ── SAMPLES FOR SINGLE FITS ───────────────────────────────────────────────────

def test_draw_datasets_defaults():
    train, validation = draw_datasets(RunConfig(n=40))
    assert train.n == validation.n == 40
    assert train.d_x == 2
    assert not np.array_equal(train.x, validation.x)


def test_draw_datasets_is_seeded():
    first, _ = draw_datasets(RunConfig(n=40, seed=9))
    second, _ = draw_datasets(RunConfig(n=40, seed=9))
    np.testing.assert_array_equal(first.x, second.x)


def test_draw_datasets_from_csv(tmp_path):
    data, _ = gen_heteroskedastic(12, RngStream(0, 0))
    path = tmp_path / "sample.csv"
    data.to_csv(path)
    train, validation = draw_datasets(RunConfig(data_path=str(path)))
    assert validation is None
    np.testing.assert_array_equal(train.x, data.x)


@pytest.mark.parametrize("payload", [{"n": [32, 64]}, {"f0": ["sin", "abs"]}, {"data_path": "missing.csv"}])
def test_draw_datasets_rejects(payload):
    with pytest.raises(ConfigError):
        draw_datasets(RunConfig.model_validate(payload))


# ── NORMALITY ─────────────────────────────────────────────────────────────────

def test_efficient_variance():
    information = (np.arctan(1.5) - 1.5 / 3.25) / 3.0
    assert efficient_variance() == pytest.approx(1.0 / information, rel=1e-10)
    assert efficient_variance(noise_scale=2.0) == pytest.approx(4.0 / information, rel=1e-10)


def test_efficient_variance_degenerate_for_quadratic_noise():
    with pytest.raises(DegenerateDataError):
        efficient_variance("quadratic")


def test_normality_study_report():
    report = normality_study(RunConfig(estimator="lsq", n=64, seeds=8), settings())
    assert report["estimator"] == "lsq"
    assert (report["n"], report["replicates"]) == (64, 8)
    assert report["efficient_variance"] == pytest.approx(efficient_variance())
    assert report["variance"] > 0


# ── MONTE-CARLO STUDIES ───────────────────────────────────────────────────────

@pytest.mark.slow
def test_heteroskedastic_consistency():
    cfg = RunConfig(estimators=["lsq", "kernel_fgel"], n=[128, 2048], seeds=50)
    summary = summarize(run_experiment("heteroskedastic", cfg, settings(jobs=-1, divergences=("chi2", "el", "kl"))))
    mean = summary.set_index(["estimator", "n"])["mean"]
    assert mean[("kernel_fgel", 2048)] < mean[("kernel_fgel", 128)]
    assert mean[("kernel_fgel", 2048)] <= mean[("lsq", 2048)]


@pytest.mark.slow
def test_iv_linear_model():
    cfg = RunConfig(estimators=["lsq", "kernel_fgel"], f0=["linear", "abs", "step"], n=2000, seeds=10)
    study = ExperimentSettings(10, 5000, TUNING_LAMBDAS, ["chi2", "el", "kl"], -1)
    summary = summarize(run_experiment("iv", cfg, study))
    mean = summary.set_index(["estimator", "f0"])["mean"]
    assert mean[("kernel_fgel", "linear")] <= 0.1
    for f0 in ("abs", "step"):
        assert mean[("kernel_fgel", f0)] < mean[("lsq", f0)]


@pytest.mark.slow
def test_tuning_tracks_the_best_fixed_lambda():
    cfg = RunConfig(experiment="heteroskedastic", divergence="chi2", lambda_grid=TUNING_LAMBDAS)
    defaults = TuningDefaults(TUNING_LAMBDAS, ["chi2"])
    tuned, fixed = [], {lam: [] for lam in TUNING_LAMBDAS}
    for seed in range(30):
        stream = RngStream(seed, 0)
        train, validation, _ = draw_samples(cfg, "heteroskedastic", 512, None, stream)
        fit = fit_estimator("kernel_fgel", train, validation, cfg, stream.child(100), defaults)
        tuned.append((fit.result.theta_hat[0] - HETEROSKEDASTIC_THETA) ** 2)
        for lam in TUNING_LAMBDAS:
            single = cfg.model_copy(update={"lam": lam})
            fit = fit_estimator("kernel_fgel", train, validation, single, stream.child(100), defaults)
            fixed[lam].append((fit.result.theta_hat[0] - HETEROSKEDASTIC_THETA) ** 2)
    best = min(np.mean(errors) for errors in fixed.values())
    assert np.mean(tuned) <= 1.2 * best


@pytest.mark.slow
def test_standardized_errors_look_normal():
    cfg = RunConfig(estimator="kernel_fgel_chi2", lam=1e-3, n=4096, seeds=200)
    report = normality_study(cfg, settings(jobs=-1))
    assert abs(report["skewness"]) <= 0.3
    assert abs(report["variance_ratio"] - 1.0) <= 0.25
