"""
Console entry point: `fgel <command>`.

The commands live on the blueprints in fgel.routes; FGEL_ENV picks the
application profile (full, desk).
"""
import os

import click
from flask.cli import FlaskGroup

from fgel import create_app


def _create_app():
    return create_app(os.getenv("FGEL_ENV", "default"))


@click.group(cls=FlaskGroup, create_app=_create_app, add_default_commands=False, add_version_option=False)
def main():
    """Functional GEL estimators and experiments."""
