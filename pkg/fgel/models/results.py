"""
Result records returned by the estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


def _floats(values) -> list[float]:
    return [float(v) for v in np.ravel(values)]


@dataclass
class EstimatorResult:
    estimator: str
    theta_hat: np.ndarray
    objective: float | None = None
    converged: bool = True
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "theta_hat": _floats(self.theta_hat),
            "objective": None if self.objective is None else float(self.objective),
            "converged": self.converged,
            "iterations": self.iterations,
            "diagnostics": self.diagnostics,
        }

    def __repr__(self):
        return f"<{type(self).__name__} {self.estimator}: theta={_floats(self.theta_hat)}>"


@dataclass
class TraceRecord:
    iteration: int
    theta: np.ndarray
    value: float


@dataclass
class KernelFgelResult(EstimatorResult):
    """Kernel-FGEL fit: theta, the inner maximizer alpha (m, n), R_lambda at theta and the implied weights."""

    alpha_hat: np.ndarray | None = None
    profile_value: float = float("nan")
    implied_p: np.ndarray | None = None
    trace: list[TraceRecord] = field(default_factory=list)
    divergence: str = ""
    lam: float = 0.0

    def trace_frame(self) -> pd.DataFrame:
        """One row per outer iteration: iter, theta0.., R_lambda."""
        p = np.size(self.theta_hat)
        rows = [[record.iteration, *_floats(record.theta), float(record.value)] for record in self.trace]
        return pd.DataFrame(rows, columns=["iter", *[f"theta{j}" for j in range(p)], "R_lambda"])

    def to_dict(self) -> dict:
        payload = super().to_dict()
        weights = np.asarray(self.implied_p) if self.implied_p is not None else np.empty(0)
        payload.update({
            "divergence": self.divergence,
            "lambda": self.lam,
            "profile_value": float(self.profile_value),
            "trace_length": len(self.trace),
            "implied_p": {
                "head": _floats(weights[:10]),
                "sum": float(weights.sum()) if weights.size else None,
                "min": float(weights.min()) if weights.size else None,
                "max": float(weights.max()) if weights.size else None,
                # Kish effective sample size of the reweighted sample
                "effective_n": float(1.0 / np.sum(weights**2)) if weights.size else None,
            },
        })
        return payload


@dataclass
class NeuralFgelResult(EstimatorResult):
    omega_hat: np.ndarray | None = None
    value_trace: list[float] = field(default_factory=list)
    rejected_steps: int = 0

    def to_dict(self) -> dict:
        payload = super().to_dict()
        values = np.asarray(self.value_trace)
        payload.update({
            "rounds": len(self.value_trace),
            "rejected_steps": self.rejected_steps,
            "final_value": float(values[-1]) if values.size else None,
            "max_abs_value": float(np.max(np.abs(values))) if values.size else None,
        })
        return payload
