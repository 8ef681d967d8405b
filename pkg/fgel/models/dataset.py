"""
Dataset container, seeded random streams and the two synthetic data-generating
processes (heteroskedastic linear regression, confounded IV regression).

The x-block carries the regressors followed by the outcome y as its last
column; moment functions receive the full row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from fgel.models.errors import ConfigError

HETEROSKEDASTIC_THETA = 1.7
IV_NOISE_STD = 0.1


@dataclass(frozen=True)
class RngStream:
    """A reproducible stream of random draws identified by (seed, stream_id).

    Draws are taken from a single `numpy.random.Generator` that the stream owns,
    so consecutive calls continue where the previous one stopped. Two streams
    built from equal ids produce identical draws.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sequence = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.stream_id), *self.path)
        )
        object.__setattr__(self, "_generator", np.random.Generator(np.random.PCG64(sequence)))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, e.g. for network initialisation."""
        return RngStream(self.seed, self.stream_id, (*self.path, int(index)))


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        z = np.array(self.z, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if z.ndim == 1:
            z = z[:, None]
        if x.ndim != 2 or z.ndim != 2:
            raise ValueError(f"x and z must be matrices. Got shapes {x.shape} and {z.shape}.")
        if x.shape[0] != z.shape[0]:
            raise ValueError(
                f"x and z must have the same number of rows. Got shapes {x.shape} and {z.shape}."
            )
        if x.shape[0] < 1:
            raise ValueError("A dataset needs at least one sample")
        if not (np.isfinite(x).all() and np.isfinite(z).all()):
            raise ValueError("Dataset entries must be finite")
        x.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def d_z(self) -> int:
        return self.z.shape[1]

    @property
    def features(self) -> np.ndarray:
        """Regressor columns (everything but the outcome)."""
        return self.x[:, :-1]

    @property
    def target(self) -> np.ndarray:
        return self.x[:, -1]

    def take(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.x[index], self.z[index])

    def to_frame(self) -> pd.DataFrame:
        columns = [f"x{j}" for j in range(self.d_x)] + [f"z{j}" for j in range(self.d_z)]
        return pd.DataFrame(np.hstack([self.x, self.z]), columns=columns)

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        frame = pd.read_csv(path, float_precision="round_trip")
        x_cols = [c for c in frame.columns if c.startswith("x")]
        z_cols = [c for c in frame.columns if c.startswith("z")]
        if not x_cols or not z_cols or len(x_cols) + len(z_cols) != frame.shape[1]:
            raise ConfigError(f"Dataset CSV needs x0.. and z0.. columns, got {list(frame.columns)}")
        return cls(frame[x_cols].to_numpy(), frame[z_cols].to_numpy())

    def to_dict(self) -> dict:
        return {"n": self.n, "d_x": self.d_x, "d_z": self.d_z}

    def __repr__(self):
        return f"<Dataset n={self.n} d_x={self.d_x} d_z={self.d_z}>"


# ---------------------------------------------------------------------------
# DATA-GENERATING PROCESSES
# ---------------------------------------------------------------------------

def _noise_std(x: np.ndarray, noise: str) -> np.ndarray:
    if noise == "quadratic":
        return 5.0 * x**2
    if noise == "smooth":
        return 1.0 + x**2
    raise ConfigError(f"Unknown heteroskedastic noise profile '{noise}'. Use 'quadratic' or 'smooth'.")


def gen_heteroskedastic(
    n: int, rng: RngStream, noise_scale: float = 1.0, noise: str = "quadratic"
) -> tuple[Dataset, float]:
    """y = 1.7 x + eps with x ~ U[-1.5, 1.5] and eps | x ~ N(0, sd = 5 x^2).

    `noise="smooth"` swaps the standard deviation for 1 + x^2, which keeps the
    efficient variance finite. The instrument is x itself.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    gen = rng.generator
    x = gen.uniform(-1.5, 1.5, size=n)
    eps = noise_scale * _noise_std(x, noise) * gen.standard_normal(n)
    y = HETEROSKEDASTIC_THETA * x + eps
    return Dataset(np.column_stack([x, y]), x[:, None]), HETEROSKEDASTIC_THETA


IV_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "abs": np.abs,
    "linear": lambda x: np.asarray(x, dtype=float),
    "step": lambda x: (np.asarray(x) >= 0).astype(float),
}


def iv_function(name: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return IV_FUNCTIONS[name]
    except KeyError:
        raise ConfigError(f"Unknown f0 '{name}'. Allowed: {', '.join(IV_FUNCTIONS)}") from None


def gen_iv(n: int, f0: str, rng: RngStream, noise_scale: float = 1.0) -> Dataset:
    """y = f0(x) + e + delta, x = z + e + gamma with z ~ U[-3, 3], e ~ N(0, 1)
    and gamma, delta ~ N(0, sd = 0.1). The confounder e enters both x and y."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    f = iv_function(f0)
    gen = rng.generator
    z = gen.uniform(-3.0, 3.0, size=n)
    e = gen.standard_normal(n)
    gamma = IV_NOISE_STD * gen.standard_normal(n)
    delta = IV_NOISE_STD * gen.standard_normal(n)
    x = z + noise_scale * (e + gamma)
    y = f(x) + noise_scale * (e + delta)
    return Dataset(np.column_stack([x, y]), z[:, None])
