import json

import numpy as np
import pytest

from fgel import create_app
from fgel.models.dataset import Dataset, RngStream


@pytest.fixture()
def app():
    return create_app("testing")


@pytest.fixture()
def cli_runner(app):
    return app.test_cli_runner()


@pytest.fixture()
def client(app):
    return app.test_client()


@pytest.fixture()
def write_config(tmp_path):
    """Write a run configuration to tmp_path/config.json and return its path."""
    def _write(payload: dict) -> str:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture()
def noiseless_line():
    """y = 1.7 x exactly, instrument z = x."""
    x = np.linspace(-1.5, 1.5, 25)
    return Dataset(np.column_stack([x, 1.7 * x]), x[:, None])


@pytest.fixture()
def stream():
    return RngStream(7, 0)
