"""
Moment functions psi(x; theta) and their parameter Jacobians.

All methods are vectorised over samples: `evaluate` returns (n, m) and
`jacobian` returns (n, m, p). `evaluate_row`/`jacobian_row` cover the
single-sample view.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from fgel.models.dataset import Dataset, RngStream
from fgel.utils.mlp import Mlp


def _rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


class MomentFunction(ABC):
    m: int
    p: int

    @abstractmethod
    def evaluate(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def jacobian(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        ...

    def vjp(self, x: np.ndarray, theta: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """sum_i cotangent_i^T d psi_i / d theta, shape (p,)."""
        return np.einsum("nm,nmp->p", cotangent, self.jacobian(x, theta))

    def evaluate_row(self, row: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self.evaluate(_rows(row), theta)[0]

    def jacobian_row(self, row: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self.jacobian(_rows(row), theta)[0]

    def initial_theta(self, data: Dataset) -> np.ndarray:
        return np.zeros(self.p)

    def to_dict(self) -> dict:
        return {"type": type(self).__name__, "m": self.m, "p": self.p}


class ResidualMoment(MomentFunction):
    """psi(x, y; theta) = y - f_theta(x) for a scalar outcome stored last in the row."""

    m = 1

    @abstractmethod
    def predict(self, features: np.ndarray, theta: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def predict_jacobian(self, features: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """d f_theta(x_i) / d theta, shape (n, p)."""

    def evaluate(self, x, theta):
        x = _rows(x)
        return (x[:, -1] - self.predict(x[:, :-1], theta))[:, None]

    def jacobian(self, x, theta):
        x = _rows(x)
        return -self.predict_jacobian(x[:, :-1], theta)[:, None, :]


class LinearResidual(ResidualMoment):
    """f_theta(x) = x^T theta (+ intercept as the last parameter)."""

    def __init__(self, n_features: int = 1, intercept: bool = False):
        self.n_features = n_features
        self.intercept = intercept
        self.p = n_features + int(intercept)

    def _design(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        if features.shape[1] != self.n_features:
            raise ValueError(f"Expected {self.n_features} regressor columns, got shape {features.shape}")
        if self.intercept:
            return np.column_stack([features, np.ones(features.shape[0])])
        return features

    def predict(self, features, theta):
        return self._design(features) @ np.asarray(theta, dtype=float)

    def predict_jacobian(self, features, theta):
        return self._design(features)

    def initial_theta(self, data: Dataset) -> np.ndarray:
        design = self._design(data.features)
        if np.linalg.matrix_rank(design) < self.p:
            return np.zeros(self.p)
        return np.linalg.lstsq(design, data.target, rcond=None)[0]

    def to_dict(self) -> dict:
        return {**super().to_dict(), "intercept": self.intercept}


class MlpResidual(ResidualMoment):
    """f_theta is a leaky-ReLU network; theta is its flat parameter vector."""

    def __init__(self, net: Mlp, init_stream: RngStream):
        if net.output_dim != 1:
            raise ValueError(f"Residual networks need a scalar output, got {net.output_dim}")
        self.net = net
        self.init_stream = init_stream
        self.p = net.n_params

    def predict(self, features, theta):
        return self.net(theta, features)[:, 0]

    def predict_jacobian(self, features, theta):
        return self.net.jacobian(theta, features)[:, 0, :]

    def vjp(self, x, theta, cotangent):
        x = _rows(x)
        _, cache = self.net.forward(theta, x[:, :-1])
        return -self.net.backward(cache, cotangent)

    def initial_theta(self, data: Dataset) -> np.ndarray:
        stream = RngStream(self.init_stream.seed, self.init_stream.stream_id, self.init_stream.path)
        return self.net.init_params(stream)

    def to_dict(self) -> dict:
        return {**super().to_dict(), "net": self.net.to_dict()}


class LocationMoment(MomentFunction):
    """psi(x; theta) = x - theta, the just-identified mean problem."""

    def __init__(self, dim: int = 1):
        self.m = dim
        self.p = dim

    def evaluate(self, x, theta):
        return _rows(x)[:, : self.m] - np.asarray(theta, dtype=float)

    def jacobian(self, x, theta):
        n = _rows(x).shape[0]
        return np.broadcast_to(-np.eye(self.m), (n, self.m, self.p)).copy()

    def initial_theta(self, data: Dataset) -> np.ndarray:
        return data.x[:, : self.m].mean(axis=0)


def finite_difference_jacobian(moments: MomentFunction, x: np.ndarray, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of `evaluate` in theta, shape (n, m, p)."""
    theta = np.asarray(theta, dtype=float)
    columns = []
    for j in range(theta.size):
        shift = np.zeros_like(theta)
        shift[j] = step
        columns.append((moments.evaluate(x, theta + shift) - moments.evaluate(x, theta - shift)) / (2 * step))
    return np.stack(columns, axis=-1)
