import json
import os
from pathlib import Path

import pandas as pd


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    """Write a table as CSV with a header row; floats keep their shortest round-trip form."""
    path = Path(path)
    ensure_dir(path.parent)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_json(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path
