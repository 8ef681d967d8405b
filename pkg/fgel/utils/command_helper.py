from functools import wraps
from pathlib import Path

import click
from flask import current_app
from pydantic import ValidationError

from fgel.experiments import ExperimentSettings
from fgel.models.errors import ConfigError, FgelError
from fgel.models.run_config import RunConfig, load_run_config

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def exit_codes(f):
    """Decorator: maps configuration problems to exit code 2 and estimation failures to 3."""
    @wraps(f)
    def decorated(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationError as e:
            click.echo(f"Invalid configuration:\n{e}", err=True)
            raise SystemExit(EXIT_CONFIG)
        except (ConfigError, FileNotFoundError) as e:
            click.echo(f"Invalid configuration: {e}", err=True)
            raise SystemExit(EXIT_CONFIG)
        except FgelError as e:
            current_app.logger.error("%s: %s", type(e).__name__, e)
            click.echo(f"Estimation failed: {e}", err=True)
            raise SystemExit(EXIT_RUNTIME)
    return decorated


def read_config(path: str | None) -> RunConfig:
    return load_run_config(path) if path else RunConfig()


def output_dir(option: str | None, cfg: RunConfig) -> Path:
    """--output, else the config's output_dir, else the profile's OUTPUT_DIR."""
    return Path(option or cfg.output_dir or current_app.config["OUTPUT_DIR"])


def settings_for(experiment: str, jobs: int | None = None) -> ExperimentSettings:
    """Profile defaults for one experiment."""
    return ExperimentSettings(
        replicates=current_app.config["REPLICATES"][experiment],
        iv_test_size=current_app.config["IV_TEST_SIZE"],
        lambdas=list(current_app.config["TUNING_LAMBDAS"]),
        divergences=list(current_app.config["TUNING_DIVERGENCES"]),
        jobs=jobs or current_app.config["DEFAULT_JOBS"],
    )
