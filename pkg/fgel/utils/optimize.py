"""
Optimizers shared by the estimators.

- `lbfgs_minimize`: limited-memory BFGS with a backtracking Armijo line search.
  Trial points rejected by the `feasible` callback are halved like any other
  failed trial, so every accepted iterate stays inside the domain.
- `oadam_step`: one optimistic-Adam update for saddle-point training.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fgel.models.errors import LineSearchError, OptimizationError

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


class LbfgsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    memory: int = Field(10, ge=1)
    grad_tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(500, ge=1)
    armijo: float = Field(1e-4, gt=0, lt=1)
    shrink: float = Field(0.5, gt=0, lt=1)
    max_halvings: int = Field(60, ge=1)
    ftol: float = Field(1e-14, gt=0)


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "grad_inf_norm": float(np.max(np.abs(self.grad))) if self.grad.size else 0.0,
        }


def _two_loop(grad: np.ndarray, pairs: deque) -> np.ndarray:
    """Two-loop recursion: returns -H grad for the implicit inverse-Hessian H."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _line_search(fun, x, value, grad, direction, step, cfg: LbfgsConfig, feasible):
    slope = grad @ direction
    for _ in range(cfg.max_halvings + 1):
        trial = x + step * direction
        if feasible is None or feasible(trial):
            trial_value, trial_grad = fun(trial)
            if np.isfinite(trial_value) and trial_value <= value + cfg.armijo * step * slope:
                return trial, float(trial_value), np.asarray(trial_grad, dtype=float)
        step *= cfg.shrink
    return None


def lbfgs_minimize(
    fun: Objective,
    x0: np.ndarray,
    cfg: LbfgsConfig | None = None,
    feasible: Callable[[np.ndarray], bool] | None = None,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> LbfgsResult:
    """Minimize `fun`, which returns (value, gradient), starting from `x0`.

    Stops when the gradient infinity-norm drops to `grad_tol`, the relative
    objective change drops to `ftol`, or after `max_iters` iterations. A line
    search that exhausts its halvings is retried once from steepest descent
    with the memory cleared; a second failure raises `LineSearchError`.
    """
    cfg = cfg or LbfgsConfig()
    x = np.array(x0, dtype=float)
    if feasible is not None and not feasible(x):
        raise OptimizationError("Initial point is infeasible", x=x)
    value, grad = fun(x)
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(value) or not np.isfinite(grad).all():
        raise OptimizationError(f"Objective is not finite at the initial point (value={value})", x=x)

    pairs: deque = deque(maxlen=cfg.memory)
    trace = [value]

    for iteration in range(cfg.max_iters):
        if np.max(np.abs(grad), initial=0.0) <= cfg.grad_tol:
            return LbfgsResult(x, value, grad, iteration, True, "gradient tolerance reached", trace)

        direction = _two_loop(grad, pairs)
        if grad @ direction >= 0:
            pairs.clear()
            direction = -grad
        step = 1.0 if pairs else min(1.0, 1.0 / max(np.linalg.norm(grad), 1e-300))

        accepted = _line_search(fun, x, value, grad, direction, step, cfg, feasible)
        if accepted is None and pairs:
            logger.debug("Line search failed at iteration %d, restarting from steepest descent", iteration)
            pairs.clear()
            direction = -grad
            step = min(1.0, 1.0 / max(np.linalg.norm(grad), 1e-300))
            accepted = _line_search(fun, x, value, grad, direction, step, cfg, feasible)
        if accepted is None:
            raise LineSearchError(
                f"Line search failed after {cfg.max_halvings} halvings at iteration {iteration}",
                trace=trace,
                x=x,
                value=value,
            )

        x_new, value_new, grad_new = accepted
        s = x_new - x
        y = grad_new - grad
        sy = s @ y
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))

        change = abs(value - value_new)
        x, value, grad = x_new, value_new, grad_new
        trace.append(value)
        if callback is not None:
            callback(iteration + 1, x, value)
        logger.debug("lbfgs iter=%d value=%.10g |g|=%.3g", iteration + 1, value, np.max(np.abs(grad)))

        if np.max(np.abs(grad), initial=0.0) <= cfg.grad_tol:
            return LbfgsResult(x, value, grad, iteration + 1, True, "gradient tolerance reached", trace)
        if change <= cfg.ftol * max(abs(value), abs(value + change)):
            return LbfgsResult(x, value, grad, iteration + 1, True, "relative objective change below ftol", trace)

    return LbfgsResult(x, value, grad, cfg.max_iters, False, "max_iters reached", trace)


# ---------------------------------------------------------------------------
# OPTIMISTIC ADAM
# ---------------------------------------------------------------------------

class OAdamConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(5e-4, gt=0)
    beta1: float = Field(0.9, gt=0, lt=1)
    beta2: float = Field(0.999, gt=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    steps: int = Field(1, ge=0)
    optimistic: bool = True


@dataclass(frozen=True)
class OAdamState:
    """Adam moments plus the previous normalized step; `t` counts completed updates."""

    cfg: OAdamConfig
    t: int
    m: np.ndarray
    v: np.ndarray
    prev_step: np.ndarray

    @classmethod
    def init(cls, size: int, cfg: OAdamConfig | None = None) -> "OAdamState":
        zeros = np.zeros(size)
        return cls(cfg or OAdamConfig(), 0, zeros, zeros, zeros)


def oadam_step(state: OAdamState, grad: np.ndarray) -> tuple[OAdamState, np.ndarray]:
    """Returns the next state and the update to add to the parameters (descent direction).

    step_t = m_hat_t / (sqrt(v_hat_t) + eps); update = -lr (2 step_t - step_{t-1}).
    With `optimistic=False` the update is the plain Adam -lr step_t.
    """
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(grad).all():
        raise OptimizationError("Non-finite gradient passed to optimistic Adam")
    cfg = state.cfg
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad**2
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    step = m_hat / (np.sqrt(v_hat) + cfg.eps)
    if cfg.optimistic:
        update = -cfg.lr * (2.0 * step - state.prev_step)
    else:
        update = -cfg.lr * step
    return replace(state, t=t, m=m, v=v, prev_step=step), update
