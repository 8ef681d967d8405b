"""
Neural-FGEL: the instrument h_omega is a leaky-ReLU network and the inner
sup is replaced by gradient ascent. The saddle objective

    G(theta, omega) = (1/n) sum_i phi(psi(x_i; theta)^T h_omega(z_i))
                      - (lambda / 2n) sum_i ||h_omega(z_i)||^2

is trained by alternating optimistic-Adam ascent on omega and descent on theta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from fgel.models.dataset import Dataset, RngStream
from fgel.models.divergence import GelDivergence
from fgel.models.errors import OptimizationError
from fgel.models.moments import MomentFunction
from fgel.models.results import NeuralFgelResult
from fgel.utils.mlp import Mlp
from fgel.utils.optimize import OAdamConfig, OAdamState, oadam_step

logger = logging.getLogger(__name__)

DEFAULT_ROUNDS = 5000
DEFAULT_LR = 5e-4
STOP_WINDOW = 200
STOP_TOL = 1e-6
MAX_BACKTRACKS = 30


@dataclass
class NeuralFgelProblem:
    data: Dataset
    moments: MomentFunction
    instrument: Mlp
    divergence: GelDivergence
    lam: float
    init_stream: RngStream
    theta_cfg: OAdamConfig = field(default_factory=lambda: OAdamConfig(lr=DEFAULT_LR))
    omega_cfg: OAdamConfig = field(default_factory=lambda: OAdamConfig(lr=DEFAULT_LR))
    rounds: int = DEFAULT_ROUNDS
    stop_window: int = STOP_WINDOW
    stop_tol: float = STOP_TOL
    zero_instrument_init: bool = False
    theta0: np.ndarray | None = None

    def __post_init__(self):
        if self.instrument.output_dim != self.moments.m:
            raise ValueError(
                f"Instrument output dimension {self.instrument.output_dim} must equal the moment dimension {self.moments.m}"
            )
        if self.instrument.input_dim != self.data.d_z:
            raise ValueError(f"Instrument input dimension {self.instrument.input_dim} != d_z {self.data.d_z}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    def initial_omega(self) -> np.ndarray:
        if self.zero_instrument_init:
            return np.zeros(self.instrument.n_params)
        return self.instrument.init_params(self.init_stream.child(1))


class NeuralEvaluation(NamedTuple):
    value: float
    grad_theta: np.ndarray | None
    grad_omega: np.ndarray | None
    feasible: bool


def neural_objective(problem: NeuralFgelProblem, theta: np.ndarray, omega: np.ndarray) -> NeuralEvaluation:
    """G(theta, omega) with both gradients by reverse accumulation."""
    n = problem.data.n
    div = problem.divergence
    psi = problem.moments.evaluate(problem.data.x, theta)
    h, cache = problem.instrument.forward(omega, problem.data.z)
    v = np.sum(psi * h, axis=1)
    if not div.in_domain(v, n):
        return NeuralEvaluation(-np.inf, None, None, False)

    value = float(np.mean(div.phi(v)) - 0.5 * problem.lam * np.sum(h**2) / n)
    phi1 = div.phi1(v)[:, None]
    grad_omega = problem.instrument.backward(cache, (phi1 * psi - problem.lam * h) / n)
    grad_theta = problem.moments.vjp(problem.data.x, theta, phi1 * h / n)
    return NeuralEvaluation(value, grad_theta, grad_omega, True)


def _backtrack(evaluate, point: np.ndarray, update: np.ndarray):
    """Halve `update` until `point + update` stays in the divergence domain.

    Returns the accepted update (None if every trial failed), its evaluation and
    the number of infeasible trials.
    """
    for halvings in range(MAX_BACKTRACKS + 1):
        candidate = evaluate(point + update)
        if candidate.feasible:
            return update, candidate, halvings
        update = 0.5 * update
    return None, None, MAX_BACKTRACKS + 1


def neural_estimate(problem: NeuralFgelProblem) -> NeuralFgelResult:
    """Alternate omega ascent and theta descent steps until `rounds` or the moving-average stop rule.

    A step that leaves the divergence domain is halved until it fits. A round in
    which some step could not be made feasible counts as stalled, and a full
    window of stalled rounds ends training without convergence.
    """
    theta = problem.theta0 if problem.theta0 is not None else problem.moments.initial_theta(problem.data)
    theta = np.array(theta, dtype=float)
    omega = problem.initial_omega()
    theta_state = OAdamState.init(theta.size, problem.theta_cfg)
    omega_state = OAdamState.init(omega.size, problem.omega_cfg)

    current = neural_objective(problem, theta, omega)
    if not current.feasible:
        raise OptimizationError("Neural-FGEL starting point is outside the divergence domain", x=theta)

    values: list[float] = []
    stalled: list[bool] = []
    rejected = 0
    converged = False
    for round_index in range(problem.rounds):
        stuck = 0
        for _ in range(problem.omega_cfg.steps):
            next_state, update = oadam_step(omega_state, -current.grad_omega)
            step, candidate, failed = _backtrack(lambda w: neural_objective(problem, theta, w), omega, update)
            rejected += failed
            if step is None:
                stuck += 1
            else:
                omega, omega_state, current = omega + step, next_state, candidate

        for _ in range(problem.theta_cfg.steps):
            next_state, update = oadam_step(theta_state, current.grad_theta)
            step, candidate, failed = _backtrack(lambda t: neural_objective(problem, t, omega), theta, update)
            rejected += failed
            if step is None:
                stuck += 1
            else:
                theta, theta_state, current = theta + step, next_state, candidate

        if not np.isfinite(current.value):
            raise OptimizationError(f"Neural-FGEL objective diverged at round {round_index}", trace=values, x=theta)
        values.append(current.value)
        stalled.append(stuck > 0)

        if len(values) > problem.stop_window:
            if all(stalled[-problem.stop_window:]):
                logger.warning("Neural-FGEL stalled: steps left the %s domain in each of the last %d rounds",
                               problem.divergence.name, problem.stop_window)
                break
            recent = np.abs(np.diff(values[-problem.stop_window - 1:]))
            if recent.mean() < problem.stop_tol:
                converged = True
                break

    if rejected:
        logger.warning("Neural-FGEL rejected %d trial steps that left the %s domain", rejected, problem.divergence.name)
    logger.debug("Neural-FGEL finished after %d rounds, value %.6g", len(values), values[-1] if values else current.value)
    return NeuralFgelResult(
        estimator="neural_fgel",
        theta_hat=theta,
        objective=current.value,
        converged=converged,
        iterations=len(values),
        diagnostics={"divergence": problem.divergence.name, "lambda": problem.lam},
        omega_hat=omega,
        value_trace=values,
        rejected_steps=rejected,
    )
