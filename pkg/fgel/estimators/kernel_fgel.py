"""
Kernel-FGEL: instruments live in an RKHS and are represented at the sample,
h_r = sum_i alpha_{r,i} k_r(z_i, .).

For fixed theta the inner problem

    R_lambda(theta) = max_alpha (1/n) sum_i phi(v_i) - (lambda/2) sum_r alpha_r^T K_r alpha_r,
    v_i = sum_r (K_r alpha_r)_i psi_r(x_i; theta)

is strictly concave for lambda > 0. The outer problem minimizes R_lambda over
theta with L-BFGS; by Danskin's lemma the gradient is the partial theta
gradient of the inner objective at the inner maximizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from fgel.models.dataset import Dataset
from fgel.models.divergence import GelDivergence, implied_probabilities
from fgel.models.errors import ConfigError, IllPosedError, OptimizationError
from fgel.models.moments import MomentFunction
from fgel.models.results import KernelFgelResult, TraceRecord
from fgel.utils.kernel import GramSet, rkhs_norm_sq
from fgel.utils.optimize import LbfgsConfig, LbfgsResult, lbfgs_minimize

logger = logging.getLogger(__name__)

INNER_METHODS = ("auto", "lbfgs", "closed_form")


@dataclass
class KernelFgelProblem:
    data: Dataset
    moments: MomentFunction
    grams: GramSet
    divergence: GelDivergence
    lam: float
    theta0: np.ndarray | None = None
    inner_method: str = "auto"
    warm_start: bool = False
    inner_cfg: LbfgsConfig = field(default_factory=LbfgsConfig)
    outer_cfg: LbfgsConfig = field(default_factory=LbfgsConfig)
    _last_beta: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.grams.n != self.data.n:
            raise ValueError(f"Gram matrices are {self.grams.n}x{self.grams.n} but the dataset has {self.data.n} rows")
        if self.grams.m != self.moments.m:
            raise ValueError(f"Need one Gram matrix per moment component: {self.grams.m} != {self.moments.m}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.inner_method not in INNER_METHODS:
            raise ConfigError(f"Unknown inner_method '{self.inner_method}'. Allowed: {', '.join(INNER_METHODS)}")

    @property
    def n(self) -> int:
        return self.data.n

    def psi(self, theta: np.ndarray) -> np.ndarray:
        return self.moments.evaluate(self.data.x, theta)

    def resolve_method(self, method: str | None = None) -> str:
        method = method or self.inner_method
        if method == "auto":
            return "closed_form" if self.divergence.quadratic else "lbfgs"
        return method


class InnerEvaluation(NamedTuple):
    value: float
    grad: np.ndarray | None
    feasible: bool


class InnerSolution(NamedTuple):
    alpha: np.ndarray
    value: float
    v: np.ndarray
    h: np.ndarray
    optimizer: LbfgsResult | None


def moment_values(problem: KernelFgelProblem, theta: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """v_i = sum_r (K_r alpha_r)_i psi_r(x_i; theta)."""
    return np.sum(problem.grams.values(alpha) * problem.psi(theta), axis=1)


def inner_objective(problem: KernelFgelProblem, theta: np.ndarray, alpha: np.ndarray) -> InnerEvaluation:
    """Inner value and its alpha gradient (m, n). Outside dom(phi) the value is -inf and `feasible` is False."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    psi = problem.psi(theta)
    h = problem.grams.values(alpha)
    v = np.sum(h * psi, axis=1)
    if not problem.divergence.in_domain(v, problem.n):
        return InnerEvaluation(-np.inf, None, False)

    div = problem.divergence
    value = float(np.mean(div.phi(v)) - 0.5 * problem.lam * rkhs_norm_sq(alpha, problem.grams))
    weighted = div.phi1(v)[:, None] * psi / problem.n
    grad = np.stack([
        mat @ (weighted[:, r] - problem.lam * a)
        for r, (mat, a) in enumerate(zip(problem.grams.mats, alpha))
    ])
    return InnerEvaluation(value, grad, True)


def _whitened_parts(problem: KernelFgelProblem, psi: np.ndarray, beta: np.ndarray):
    h = problem.grams.values_from_whitened(beta)
    return h, np.sum(h * psi, axis=1)


def _solve_lbfgs(problem: KernelFgelProblem, theta: np.ndarray) -> InnerSolution:
    psi = problem.psi(theta)
    m, n = problem.grams.m, problem.n
    div = problem.divergence
    factors = problem.grams.factors()

    def negated(flat):
        beta = flat.reshape(m, n)
        h, v = _whitened_parts(problem, psi, beta)
        value = np.mean(div.phi(v)) - 0.5 * problem.lam * np.sum(beta**2)
        weighted = div.phi1(v)[:, None] * psi / n
        grad = np.stack([s * (u.T @ weighted[:, r]) for r, (u, s) in enumerate(factors)]) - problem.lam * beta
        return -value, -grad.ravel()

    def feasible(flat):
        _, v = _whitened_parts(problem, psi, flat.reshape(m, n))
        return div.in_domain(v, n)

    start = np.zeros(m * n)
    if problem.warm_start and problem._last_beta is not None and feasible(problem._last_beta):
        start = problem._last_beta
    try:
        result = lbfgs_minimize(negated, start, problem.inner_cfg, feasible=feasible)
    except OptimizationError as exc:
        raise OptimizationError(f"Inner solve failed at theta={np.ravel(theta).tolist()}: {exc}", trace=exc.trace, x=exc.x) from exc
    if not result.converged:
        logger.warning("Inner L-BFGS stopped without converging: %s", result.message)
    if problem.warm_start:
        problem._last_beta = result.x

    beta = result.x.reshape(m, n)
    h, v = _whitened_parts(problem, psi, beta)
    return InnerSolution(problem.grams.unwhiten(beta), -result.value, v, h, result)


def chi2_inner_closed_form(problem: KernelFgelProblem, theta: np.ndarray) -> np.ndarray:
    """Inner maximizer for divergences with constant phi2 (chi2, vmm_equiv).

    The first-order condition holds when, for every component r,
        n lambda alpha_r - phi2 D_r sum_s D_s K_s alpha_s = phi1(0) psi_r
    with D_r = diag(psi_r). The (n m) x (n m) system is solved directly.
    """
    div = problem.divergence
    if not div.quadratic:
        raise ConfigError(f"The closed-form inner solve needs a quadratic divergence, got '{div.name}'")
    if problem.lam <= 0:
        raise IllPosedError("ill-posed: regularization required")

    psi = problem.psi(theta)
    n, m = psi.shape
    phi1_0 = float(div.phi1(0.0))
    phi2 = float(div.phi2(0.0))

    system = n * problem.lam * np.eye(n * m)
    for r in range(m):
        for s, mat in enumerate(problem.grams.mats):
            block = (psi[:, r] * psi[:, s])[:, None] * mat
            system[r * n:(r + 1) * n, s * n:(s + 1) * n] -= phi2 * block
    rhs = phi1_0 * psi.T.ravel()
    return linalg.solve(system, rhs).reshape(m, n)


def inner_solve(problem: KernelFgelProblem, theta: np.ndarray, method: str | None = None) -> InnerSolution:
    """Maximize the inner objective over alpha; returns alpha*, R_lambda(theta) and the v-vector."""
    if problem.lam <= 0:
        raise IllPosedError("ill-posed: regularization required")
    method = problem.resolve_method(method)
    if method == "lbfgs":
        return _solve_lbfgs(problem, theta)

    alpha = chi2_inner_closed_form(problem, theta)
    evaluation = inner_objective(problem, theta, alpha)
    h = problem.grams.values(alpha)
    v = np.sum(h * problem.psi(theta), axis=1)
    return InnerSolution(alpha, evaluation.value, v, h, None)


def profile_gradient(problem: KernelFgelProblem, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """R_lambda(theta) and its theta gradient (1/n) sum_i phi1(v_i) sum_r h_r(z_i) d psi_r(x_i) / d theta."""
    theta = np.asarray(theta, dtype=float)
    solution = inner_solve(problem, theta)
    cotangent = problem.divergence.phi1(solution.v)[:, None] * solution.h / problem.n
    return solution.value, problem.moments.vjp(problem.data.x, theta, cotangent)


def estimate(problem: KernelFgelProblem) -> KernelFgelResult:
    theta0 = problem.theta0
    if theta0 is None:
        theta0 = problem.moments.initial_theta(problem.data)
    theta0 = np.asarray(theta0, dtype=float)

    trace: list[TraceRecord] = []

    def record(iteration, theta, value):
        trace.append(TraceRecord(iteration, np.array(theta), float(value)))

    value0, _ = profile_gradient(problem, theta0)
    record(0, theta0, value0)
    try:
        outer = lbfgs_minimize(lambda th: profile_gradient(problem, th), theta0, problem.outer_cfg, callback=record)
    except OptimizationError as exc:
        exc.trace = trace
        raise
    if not outer.converged:
        logger.warning("Kernel-FGEL outer L-BFGS stopped without converging: %s", outer.message)

    solution = inner_solve(problem, outer.x)
    implied_p = implied_probabilities(problem.divergence, solution.v)
    logger.debug("Kernel-FGEL %s lambda=%g theta=%s R=%.6g", problem.divergence.name, problem.lam, outer.x, solution.value)
    return KernelFgelResult(
        estimator="kernel_fgel",
        theta_hat=outer.x,
        objective=solution.value,
        converged=outer.converged,
        iterations=outer.iterations,
        diagnostics={"outer": outer.to_dict(), "inner_method": problem.resolve_method()},
        alpha_hat=solution.alpha,
        profile_value=solution.value,
        implied_p=implied_p,
        trace=trace,
        divergence=problem.divergence.name,
        lam=problem.lam,
    )
