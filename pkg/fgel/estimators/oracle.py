"""
Brute-force solvers for small instances, used to check the estimator math.

The primal profile (chi2 only) is a second-order cone program over weights
q = n p; the dual keeps mu and the (unsquared) RKHS-norm penalty. Instruments
are restricted to the span of the kernel sections at the sample, which is exact
for the evaluation functionals in the constraint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import cvxpy as cp
import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar

from fgel.models.dataset import Dataset, RngStream
from fgel.models.divergence import GelDivergence, make_divergence
from fgel.models.errors import InfeasibleProblemError
from fgel.models.moments import LinearResidual, MomentFunction
from fgel.utils.kernel import GramSet
from fgel.utils.optimize import LbfgsConfig, lbfgs_minimize

logger = logging.getLogger(__name__)

MAX_ORACLE_N = 10
NORM_SMOOTHING = 1e-12


@dataclass
class OracleInstance:
    data: Dataset
    moments: MomentFunction
    theta: np.ndarray
    lam: float
    grams: GramSet

    def __post_init__(self):
        if self.data.n > MAX_ORACLE_N:
            raise ValueError(f"Oracle instances are limited to {MAX_ORACLE_N} samples, got {self.data.n}")
        if self.grams.n != self.data.n:
            raise ValueError(f"Gram size {self.grams.n} does not match {self.data.n} samples")

    @property
    def n(self) -> int:
        return self.data.n

    def psi(self) -> np.ndarray:
        return self.moments.evaluate(self.data.x, self.theta)

    def with_lambda(self, lam: float) -> "OracleInstance":
        return OracleInstance(self.data, self.moments, self.theta, lam, self.grams)


def constraint_norm(instance: OracleInstance, q: np.ndarray) -> float:
    """||(1/n) sum_i q_i Psi_i||_{H*} for weights q = n p."""
    psi = instance.psi()
    total = sum((q * psi[:, r]) @ mat @ (q * psi[:, r]) for r, mat in enumerate(instance.grams.mats))
    return float(np.sqrt(max(total, 0.0)) / instance.n)


def feasibility_threshold(instance: OracleInstance) -> float:
    """Smallest lambda for which some weights with sum(q) = n satisfy the norm constraint."""
    psi = instance.psi()
    quad = sum(psi[:, r][:, None] * mat * psi[:, r][None, :] for r, mat in enumerate(instance.grams.mats))
    ones = np.ones(instance.n)
    denom = ones @ linalg.pinv(quad, atol=1e-12) @ ones
    if denom <= 0:
        return 0.0
    return float(np.sqrt(1.0 / denom))


def make_instance(seed: int, n: int, lam: float | None = None) -> OracleInstance:
    """Random linear-IV instance. Without `lam`, lambda sits halfway between the
    feasibility threshold and the norm of the uniform-weight moment, so the
    constraint is feasible and active."""
    gen = RngStream(seed, n).generator
    z = gen.uniform(-2.0, 2.0, size=n)
    x = z + 0.5 * gen.standard_normal(n)
    y = 0.8 * x + gen.standard_normal(n)
    data = Dataset(np.column_stack([x, y]), z[:, None])
    theta = np.array([0.8 + gen.standard_normal()])
    instance = OracleInstance(data, LinearResidual(1), theta, 1.0, GramSet.from_instruments(data.z, 1))
    if lam is None:
        lower = feasibility_threshold(instance)
        upper = constraint_norm(instance, np.ones(n))
        lam = lower + 0.5 * (upper - lower)
    return instance.with_lambda(lam)


# ---------------------------------------------------------------------------
# PRIMAL (chi2)
# ---------------------------------------------------------------------------

class PrimalSolution(NamedTuple):
    value: float
    p: np.ndarray | None
    status: str

    @property
    def feasible(self) -> bool:
        return self.p is not None


def primal_profile_chi2(instance: OracleInstance) -> PrimalSolution:
    """min_q (1/n) sum_i (q_i - 1)^2 / 2  s.t.  sum_i q_i = n,  ||(1/n) sum_i q_i Psi_i|| <= lambda."""
    n = instance.n
    psi = instance.psi()
    q = cp.Variable(n)
    blocks = [(u * s).T @ cp.multiply(psi[:, r], q) for r, (u, s) in enumerate(instance.grams.factors())]
    problem = cp.Problem(
        cp.Minimize(cp.sum_squares(q - 1) / (2 * n)),
        [cp.sum(q) == n, cp.norm(cp.hstack(blocks), 2) <= n * instance.lam],
    )
    problem.solve()
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return PrimalSolution(np.inf, None, "infeasible")
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return PrimalSolution(np.nan, None, problem.status)
    weights = np.asarray(q.value, dtype=float)
    return PrimalSolution(float(problem.value), weights / n, problem.status)


# ---------------------------------------------------------------------------
# DUAL
# ---------------------------------------------------------------------------

class DualSolution(NamedTuple):
    value: float
    mu: float
    alpha: np.ndarray
    v: np.ndarray
    weights: np.ndarray


def dual_objective(instance: OracleInstance, divergence: GelDivergence, beta: np.ndarray, mu: float, smooth: bool = True) -> float:
    """mu - (1/n) sum_i phi*(v_i + mu) - lambda ||h|| in whitened coordinates beta.

    phi* is the Legendre conjugate of the divergence generator. Returns -inf
    outside its domain.
    """
    beta = np.atleast_2d(beta)
    v = np.sum(instance.grams.values_from_whitened(beta) * instance.psi(), axis=1)
    u = v + mu
    if not divergence.in_domain(u):
        return -np.inf
    norm_sq = float(np.sum(beta**2))
    norm = np.sqrt(norm_sq + NORM_SMOOTHING) if smooth else np.sqrt(norm_sq)
    return float(mu - np.mean(divergence.legendre_conjugate(u)) - instance.lam * norm)


def dual_profile(instance: OracleInstance, divergence: GelDivergence | None = None, cfg: LbfgsConfig | None = None) -> DualSolution:
    divergence = divergence or make_divergence("chi2")
    n, m = instance.n, instance.grams.m
    psi = instance.psi()
    factors = instance.grams.factors()

    def split(flat):
        return flat[:-1].reshape(m, n), flat[-1]

    def negated(flat):
        beta, mu = split(flat)
        h = instance.grams.values_from_whitened(beta)
        u = np.sum(h * psi, axis=1) + mu
        slope = divergence.implied_weight(u)
        norm = np.sqrt(np.sum(beta**2) + NORM_SMOOTHING)
        value = mu - np.mean(divergence.legendre_conjugate(u)) - instance.lam * norm
        grad_beta = np.stack([-s * (uu.T @ (slope * psi[:, r])) / n for r, (uu, s) in enumerate(factors)])
        grad_beta -= instance.lam * beta / norm
        grad_mu = 1.0 - np.mean(slope)
        return -value, -np.concatenate([grad_beta.ravel(), [grad_mu]])

    def feasible(flat):
        beta, mu = split(flat)
        u = np.sum(instance.grams.values_from_whitened(beta) * psi, axis=1) + mu
        return divergence.in_domain(u)

    result = lbfgs_minimize(negated, np.zeros(m * n + 1), cfg, feasible=feasible)
    if not result.converged:
        logger.warning("Dual profile stopped without converging: %s", result.message)
    beta, mu = split(result.x)
    v = np.sum(instance.grams.values_from_whitened(beta) * psi, axis=1)
    value = dual_objective(instance, divergence, beta, mu, smooth=False)
    weights = divergence.implied_weight(v + mu) / n
    return DualSolution(value, float(mu), instance.grams.unwhiten(beta), v, weights)


def implied_weights_roundtrip(instance: OracleInstance) -> float:
    """Largest elementwise gap between the primal weights and those implied by the dual solution (chi2)."""
    primal = primal_profile_chi2(instance)
    if not primal.feasible:
        raise InfeasibleProblemError(f"Primal is {primal.status} at lambda={instance.lam}")
    dual = dual_profile(instance, make_divergence("chi2"))
    return float(np.max(np.abs(primal.p - dual.weights)))


# ---------------------------------------------------------------------------
# CONJUGATES
# ---------------------------------------------------------------------------

CONJUGATE_BOUNDS = {
    "chi2": (-50.0, 50.0),
    "el": (1e-9, 1e3),
    "kl": (1e-12, 1e3),
    "vmm_equiv": (-50.0, 50.0),
}


def numeric_conjugate(divergence: GelDivergence, v: float) -> float:
    """sup_p p v - f(p) by bounded scalar search, f the generator of the divergence."""
    result = minimize_scalar(
        lambda p: -(p * v - divergence.generator(p)),
        bounds=CONJUGATE_BOUNDS[divergence.name],
        method="bounded",
        options={"xatol": 1e-10, "maxiter": 1000},
    )
    return float(-result.fun)


def conjugate_grid(divergence: GelDivergence, points: int = 50) -> np.ndarray:
    upper = 0.9 if divergence.domain_upper is not None else 2.0
    return np.linspace(-2.0, upper, points)
