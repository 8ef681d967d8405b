"""
Comparison estimators: least squares, GMM with a finite instrument basis
(continuously updated and two-step optimally weighted), the MMR estimator and
kernel VMM written in its own quadratic form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from fgel.estimators.kernel_fgel import KernelFgelProblem, inner_objective
from fgel.models.dataset import Dataset
from fgel.models.errors import ConfigError, DegenerateDataError, IllPosedError
from fgel.models.moments import LinearResidual, MomentFunction
from fgel.models.results import EstimatorResult
from fgel.utils.kernel import GramSet, rkhs_norm_sq
from fgel.utils.optimize import LbfgsConfig, lbfgs_minimize

logger = logging.getLogger(__name__)

COVARIANCE_RIDGE = 1e-8
WEIGHTINGS = ("identity", "inverse_covariance")


def lsq_estimate(data: Dataset, intercept: bool = False) -> EstimatorResult:
    """Ordinary least squares of the outcome column on the regressor columns."""
    model = LinearResidual(data.features.shape[1], intercept=intercept)
    design = model.predict_jacobian(data.features, np.zeros(model.p))
    if np.linalg.matrix_rank(design) < model.p:
        raise DegenerateDataError(f"Design matrix of shape {design.shape} is rank deficient")
    theta = linalg.solve(design.T @ design, design.T @ data.target, assume_a="pos")
    residual = data.target - design @ theta
    return EstimatorResult("lsq", theta, objective=float(np.mean(residual**2)))


# ---------------------------------------------------------------------------
# GMM WITH A FINITE INSTRUMENT BASIS
# ---------------------------------------------------------------------------

def polynomial_basis(z: np.ndarray, degree: int = 3) -> np.ndarray:
    """Columns 1, z_j, z_j^2, .., z_j^degree for every instrument column j."""
    z = np.asarray(z, dtype=float)
    z = z[:, None] if z.ndim == 1 else z
    columns = [np.ones(z.shape[0])]
    for j in range(z.shape[1]):
        columns.extend(z[:, j] ** k for k in range(1, degree + 1))
    return np.column_stack(columns)


def constant_basis(z: np.ndarray) -> np.ndarray:
    return np.ones((np.asarray(z).shape[0], 1))


@dataclass
class FiniteMomentProblem:
    """Unconditional moments g_i(theta) = psi(x_i; theta) (x) b(z_i), stacked to length m * B."""

    data: Dataset
    moments: MomentFunction
    basis: Callable[[np.ndarray], np.ndarray] = polynomial_basis
    weighting: str = "inverse_covariance"
    ridge: float = COVARIANCE_RIDGE
    cfg: LbfgsConfig = field(default_factory=LbfgsConfig)

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"Unknown weighting '{self.weighting}'. Allowed: {', '.join(WEIGHTINGS)}")
        self._b = self.basis(self.data.z)
        if self._b.shape[0] != self.data.n:
            raise ValueError(f"Basis returned shape {self._b.shape} for {self.data.n} samples")
        if self.dim < self.moments.p:
            raise ValueError(f"Stacked moment dimension {self.dim} is below the parameter dimension {self.moments.p}")

    @property
    def dim(self) -> int:
        return self.moments.m * self._b.shape[1]

    def stacked(self, theta: np.ndarray) -> np.ndarray:
        psi = self.moments.evaluate(self.data.x, theta)
        return (psi[:, :, None] * self._b[:, None, :]).reshape(self.data.n, -1)

    def stacked_jacobian(self, theta: np.ndarray) -> np.ndarray:
        jac = self.moments.jacobian(self.data.x, theta)
        n, m, p = jac.shape
        return (jac[:, :, None, :] * self._b[:, None, :, None]).reshape(n, -1, p)

    def covariance(self, theta: np.ndarray) -> np.ndarray:
        g = self.stacked(theta)
        return g.T @ g / self.data.n + self.ridge * np.eye(self.dim)


def _solve_weighted(omega: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return linalg.solve(omega, rhs, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise DegenerateDataError(f"Moment covariance is singular: {exc}") from exc


def cue_objective(problem: FiniteMomentProblem, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """g_bar^T Omega(theta)^{-1} g_bar with its analytic gradient."""
    n = problem.data.n
    g = problem.stacked(theta)
    jac = problem.stacked_jacobian(theta)
    g_bar = g.mean(axis=0)
    a = _solve_weighted(problem.covariance(theta), g_bar)
    ga = g @ a
    jac_a = np.einsum("nkp,k->np", jac, a)
    grad = 2.0 * jac.mean(axis=0).T @ a - (2.0 / n) * jac_a.T @ ga
    return float(g_bar @ a), grad


def gmm_objective(problem: FiniteMomentProblem, theta: np.ndarray, weight: np.ndarray) -> tuple[float, np.ndarray]:
    g_bar = problem.stacked(theta).mean(axis=0)
    jac_bar = problem.stacked_jacobian(theta).mean(axis=0)
    wg = weight @ g_bar
    return float(g_bar @ wg), 2.0 * jac_bar.T @ wg


def cue_estimate(problem: FiniteMomentProblem, theta0: np.ndarray | None = None) -> EstimatorResult:
    start = problem.moments.initial_theta(problem.data) if theta0 is None else np.asarray(theta0, dtype=float)
    result = lbfgs_minimize(lambda th: cue_objective(problem, th), start, problem.cfg)
    if not result.converged:
        logger.warning("CUE stopped without converging: %s", result.message)
    return EstimatorResult("cue", result.x, result.value, result.converged, result.iterations)


def owgmm_estimate(problem: FiniteMomentProblem, theta0: np.ndarray | None = None) -> EstimatorResult:
    """Two-step GMM: identity weighting first, then the inverse covariance at the first-step estimate."""
    start = problem.moments.initial_theta(problem.data) if theta0 is None else np.asarray(theta0, dtype=float)
    identity = np.eye(problem.dim)
    first = lbfgs_minimize(lambda th: gmm_objective(problem, th, identity), start, problem.cfg)
    if problem.weighting == "identity":
        return EstimatorResult("owgmm", first.x, first.value, first.converged, first.iterations)

    weight = _solve_weighted(problem.covariance(first.x), identity)
    weight = 0.5 * (weight + weight.T)
    second = lbfgs_minimize(lambda th: gmm_objective(problem, th, weight), first.x, problem.cfg)
    if not second.converged:
        logger.warning("OWGMM second step stopped without converging: %s", second.message)
    return EstimatorResult(
        "owgmm",
        second.x,
        second.value,
        second.converged,
        first.iterations + second.iterations,
        diagnostics={"theta_first_step": first.x.tolist()},
    )


# ---------------------------------------------------------------------------
# MMR
# ---------------------------------------------------------------------------

def mmr_objective(psi: np.ndarray, grams: GramSet) -> float:
    """V-statistic (1/n^2) sum_r psi_r^T K_r psi_r."""
    psi = np.asarray(psi, dtype=float)
    psi = psi[:, None] if psi.ndim == 1 else psi
    if psi.shape != (grams.n, grams.m):
        raise ValueError(f"psi has shape {psi.shape}, expected ({grams.n}, {grams.m})")
    n = grams.n
    return float(sum(psi[:, r] @ mat @ psi[:, r] for r, mat in enumerate(grams.mats)) / n**2)


def mmr_estimate(
    data: Dataset,
    moments: MomentFunction,
    grams: GramSet,
    theta0: np.ndarray | None = None,
    cfg: LbfgsConfig | None = None,
) -> EstimatorResult:
    n = data.n

    def objective(theta):
        psi = moments.evaluate(data.x, theta)
        cotangent = np.stack([mat @ psi[:, r] for r, mat in enumerate(grams.mats)], axis=1) * (2.0 / n**2)
        return mmr_objective(psi, grams), moments.vjp(data.x, theta, cotangent)

    start = moments.initial_theta(data) if theta0 is None else np.asarray(theta0, dtype=float)
    result = lbfgs_minimize(objective, start, cfg)
    if not result.converged:
        logger.warning("MMR stopped without converging: %s", result.message)
    return EstimatorResult("mmr", result.x, result.value, result.converged, result.iterations)


# ---------------------------------------------------------------------------
# KERNEL VMM
# ---------------------------------------------------------------------------

def _require_vmm(problem: KernelFgelProblem) -> None:
    if problem.divergence.name != "vmm_equiv":
        raise ConfigError(f"Kernel VMM needs the vmm_equiv divergence, got '{problem.divergence.name}'")


def vmm_value(problem: KernelFgelProblem, theta: np.ndarray, alpha: np.ndarray) -> float:
    """E[psi^T h] - 1/4 E[(psi^T h)^2] - (lambda_vmm / 4) ||h||^2 with lambda_vmm = 2 lambda."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    v = np.sum(problem.grams.values(alpha) * problem.psi(theta), axis=1)
    lam_vmm = 2.0 * problem.lam
    return float(np.mean(v) - 0.25 * np.mean(v**2) - 0.25 * lam_vmm * rkhs_norm_sq(alpha, problem.grams))


def kernel_vmm_objective_identity(problem: KernelFgelProblem, theta: np.ndarray, alpha: np.ndarray) -> tuple[float, float]:
    """(lhs, rhs) with lhs the FGEL inner value under phi(v) = -(1 + v/2)^2 at alpha,
    and rhs the VMM value at the mirrored instrument -h. They satisfy lhs = rhs - 1."""
    _require_vmm(problem)
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    lhs = inner_objective(problem, theta, alpha).value
    return lhs, vmm_value(problem, theta, -alpha)


def vmm_inner_solve(problem: KernelFgelProblem, theta: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Maximizer of the VMM value over alpha.

    Stationarity holds when n lambda alpha_r + 1/2 D_r sum_s D_s K_s alpha_s = psi_r
    for every component, with D_r = diag(psi_r).
    """
    psi = problem.psi(theta)
    n, m = psi.shape
    system = n * problem.lam * np.eye(n * m)
    for r in range(m):
        for s, mat in enumerate(problem.grams.mats):
            system[r * n:(r + 1) * n, s * n:(s + 1) * n] += 0.5 * (psi[:, r] * psi[:, s])[:, None] * mat
    alpha = linalg.solve(system, psi.T.ravel()).reshape(m, n)
    h = problem.grams.values(alpha)
    return alpha, vmm_value(problem, theta, alpha), h


def kernel_vmm_estimate(problem: KernelFgelProblem) -> EstimatorResult:
    """Minimize max_alpha of the VMM value over theta (continuously updated kernel VMM)."""
    _require_vmm(problem)
    if problem.lam <= 0:
        raise IllPosedError("ill-posed: regularization required")

    def objective(theta):
        _, value, h = vmm_inner_solve(problem, theta)
        v = np.sum(h * problem.psi(theta), axis=1)
        cotangent = (1.0 - 0.5 * v)[:, None] * h / problem.n
        return value, problem.moments.vjp(problem.data.x, theta, cotangent)

    start = problem.theta0 if problem.theta0 is not None else problem.moments.initial_theta(problem.data)
    result = lbfgs_minimize(objective, np.asarray(start, dtype=float), problem.outer_cfg)
    if not result.converged:
        logger.warning("Kernel VMM stopped without converging: %s", result.message)
    return EstimatorResult("kernel_vmm", result.x, result.value, result.converged, result.iterations)
