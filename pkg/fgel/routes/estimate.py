"""
Single-fit routes
    POST /api/estimate - fit one estimator; the JSON body is a run configuration

Commands
    fgel estimate --config PATH [--output DIR]          -> result.json (+ trace.csv for kernel FGEL)
    fgel tune --config PATH [--output DIR] [--jobs N]   -> grid.csv + result.json
"""
import click
from flask import Blueprint, current_app, jsonify, request
from pydantic import ValidationError

from fgel.estimators.registry import TuningDefaults, fit_estimator
from fgel.experiments import draw_datasets
from fgel.models.dataset import RngStream
from fgel.models.errors import ConfigError, FgelError
from fgel.models.results import KernelFgelResult
from fgel.models.run_config import TUNABLE_ESTIMATORS, RunConfig
from fgel.utils.command_helper import exit_codes, output_dir, read_config
from fgel.utils.csv_helper import ensure_dir, write_frame, write_json

estimate_bp = Blueprint("estimate", __name__, cli_group=None)


def _single_estimator(cfg: RunConfig, default: str) -> str:
    names = cfg.estimator_names([default])
    if len(names) != 1:
        raise ConfigError(f"Expected one estimator, got {names}")
    return names[0]


def _defaults(jobs: int | None = None) -> TuningDefaults:
    return TuningDefaults(
        lambdas=list(current_app.config["TUNING_LAMBDAS"]),
        divergences=list(current_app.config["TUNING_DIVERGENCES"]),
        jobs=jobs or current_app.config["DEFAULT_JOBS"],
    )


def run_fit(cfg: RunConfig, default: str = "kernel_fgel", jobs: int | None = None, force_grid: bool = False):
    """Draw (or load) the samples and fit the configured estimator. Returns (fit, payload)."""
    name = _single_estimator(cfg, default)
    train, validation = draw_datasets(cfg)
    fit = fit_estimator(name, train, validation, cfg, RngStream(cfg.seed, 1), _defaults(jobs), force_grid=force_grid)
    payload = {
        "config": cfg.to_dict(),
        "dataset": train.to_dict(),
        "result": fit.result.to_dict(),
    }
    if fit.report is not None:
        payload["tuning"] = fit.report.to_dict()
    return fit, payload


# ── COMMANDS ──────────────────────────────────────────────────────────────────

@estimate_bp.cli.command("estimate")
@click.option("--config", "config_path", required=True, help="Run configuration (JSON).")
@click.option("--output", "output", default=None, help="Output directory.")
@exit_codes
def estimate_command(config_path, output):
    """Fit one estimator and write result.json."""
    cfg = read_config(config_path)
    fit, payload = run_fit(cfg)

    target = ensure_dir(output_dir(output, cfg))
    write_json(payload, target / "result.json")
    if isinstance(fit.result, KernelFgelResult):
        write_frame(fit.result.trace_frame(), target / "trace.csv")
    current_app.logger.info("Wrote %s", target / "result.json")
    click.echo(f"{fit.result.estimator}: theta_hat = {payload['result']['theta_hat']}")


@estimate_bp.cli.command("tune")
@click.option("--config", "config_path", required=True, help="Run configuration (JSON).")
@click.option("--output", "output", default=None, help="Output directory.")
@click.option("--jobs", type=int, default=None, help="Parallel workers for the grid.")
@exit_codes
def tune_command(config_path, output, jobs):
    """Select lambda (and the divergence) on a validation sample; write grid.csv and result.json."""
    cfg = read_config(config_path)
    name = _single_estimator(cfg, "kernel_fgel")
    if name not in TUNABLE_ESTIMATORS:
        raise ConfigError(f"Estimator '{name}' has no hyperparameters. Tunable: {', '.join(TUNABLE_ESTIMATORS)}")
    fit, payload = run_fit(cfg, jobs=jobs, force_grid=True)

    target = ensure_dir(output_dir(output, cfg))
    write_frame(fit.report.to_frame(), target / "grid.csv")
    write_json(payload, target / "result.json")
    best = fit.report.best
    click.echo(f"{name}: lambda={best.lam:g} divergence={best.divergence} val_loss={best.val_loss:.6g}")


# ── JSON ──────────────────────────────────────────────────────────────────────

@estimate_bp.route("/estimate", methods=["POST"])
def estimate():
    body = request.get_json(silent=True)
    if not isinstance(body, dict):
        return jsonify({"error": "Request body must be a JSON object"}), 400

    try:
        cfg = RunConfig.model_validate(body)
        _, payload = run_fit(cfg, jobs=1)
    except ValidationError as e:
        return jsonify({"error": "Invalid configuration", "details": e.errors(include_url=False, include_context=False)}), 400
    except ConfigError as e:
        return jsonify({"error": str(e)}), 400
    except FgelError as e:
        return jsonify({"error": str(e), "type": type(e).__name__}), 422

    return jsonify(payload), 200
