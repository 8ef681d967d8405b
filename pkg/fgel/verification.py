"""
Self-checks run by `fgel verify <suite>` and GET /api/verify/<suite>.

duality: primal (SOCP) vs dual profile on small chi2 instances, plus the
    implied-weight roundtrip.
gradients: profile gradients of kernel FGEL and both gradients of the neural
    game against central finite differences.
conjugates: closed-form Legendre conjugates against numeric maximisation,
    and the normalisation phi1(0) = phi2(0) = -1.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from fgel.estimators.kernel_fgel import KernelFgelProblem, profile_gradient
from fgel.estimators.neural_fgel import NeuralFgelProblem, neural_objective
from fgel.estimators.oracle import (
    conjugate_grid,
    dual_profile,
    implied_weights_roundtrip,
    make_instance,
    numeric_conjugate,
    primal_profile_chi2,
)
from fgel.models.dataset import RngStream, gen_heteroskedastic, gen_iv
from fgel.models.divergence import make_divergence
from fgel.models.errors import ConfigError, FgelError
from fgel.models.moments import LinearResidual, MlpResidual
from fgel.utils.kernel import GramSet
from fgel.utils.mlp import Mlp

logger = logging.getLogger(__name__)

DUALITY_TOL = 1e-4
ROUNDTRIP_TOL = 1e-3
GRADIENT_TOL = 1e-4
CONJUGATE_TOL = 1e-4

DUALITY_INSTANCES = 10
KERNEL_PROBES = 10
NEURAL_PROBES = 20
PROBE_N = 30
PROBE_LAMBDA = 0.1


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def to_dict(self) -> dict:
        return asdict(self)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tolerance:.0e})"


def _check(name: str, value: float, tolerance: float) -> CheckResult:
    value = float(value)
    return CheckResult(name, bool(np.isfinite(value) and value <= tolerance), value, tolerance)


def _relative_error(grad: np.ndarray, fd: np.ndarray) -> float:
    return float(np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-8))


# ---------------------------------------------------------------------------
# DUALITY
# ---------------------------------------------------------------------------

def duality_suite() -> list[CheckResult]:
    checks = []
    for k in range(DUALITY_INSTANCES):
        n = 4 + k % 5
        instance = make_instance(seed=k, n=n)
        try:
            primal = primal_profile_chi2(instance)
            dual = dual_profile(instance, make_divergence("chi2"))
            gap = abs(primal.value - dual.value)
            roundtrip = implied_weights_roundtrip(instance)
        except FgelError as exc:
            logger.warning("Duality instance %d failed: %s", k, exc)
            gap = roundtrip = np.inf
        checks.append(_check(f"duality gap (seed={k}, n={n})", gap, DUALITY_TOL))
        checks.append(_check(f"implied weights (seed={k}, n={n})", roundtrip, ROUNDTRIP_TOL))
    return checks


# ---------------------------------------------------------------------------
# GRADIENTS
# ---------------------------------------------------------------------------

def kernel_gradient_error(problem: KernelFgelProblem, theta: np.ndarray, step: float = 1e-5) -> float:
    """Relative error of the profile gradient against central differences."""
    _, grad = profile_gradient(problem, theta)
    fd = np.zeros_like(theta)
    for j in range(theta.size):
        shift = np.zeros_like(theta)
        shift[j] = step
        upper, _ = profile_gradient(problem, theta + shift)
        lower, _ = profile_gradient(problem, theta - shift)
        fd[j] = (upper - lower) / (2 * step)
    return _relative_error(grad, fd)


def neural_gradient_errors(
    problem: NeuralFgelProblem, theta: np.ndarray, omega: np.ndarray, stream: RngStream, step: float = 1e-6
) -> tuple[float, float]:
    """Relative errors of the theta and omega gradients along random unit directions."""
    evaluation = neural_objective(problem, theta, omega)
    gen = stream.generator

    def directional(fn: Callable[[np.ndarray], float], point: np.ndarray, grad: np.ndarray) -> float:
        direction = gen.standard_normal(point.size)
        direction /= np.linalg.norm(direction)
        fd = (fn(point + step * direction) - fn(point - step * direction)) / (2 * step)
        return _relative_error(np.array([grad @ direction]), np.array([fd]))

    theta_error = directional(lambda t: neural_objective(problem, t, omega).value, theta, evaluation.grad_theta)
    omega_error = directional(lambda w: neural_objective(problem, theta, w).value, omega, evaluation.grad_omega)
    return theta_error, omega_error


def gradients_suite() -> list[CheckResult]:
    checks = []
    chi2 = make_divergence("chi2")
    for k in range(KERNEL_PROBES):
        stream = RngStream(k, 1)
        data, theta0 = gen_heteroskedastic(PROBE_N, stream)
        moments = LinearResidual(1)
        problem = KernelFgelProblem(data, moments, GramSet.from_instruments(data.z, 1), chi2, PROBE_LAMBDA)
        theta = np.array([theta0]) + stream.generator.standard_normal(1)
        checks.append(_check(f"kernel profile gradient (heteroskedastic, seed={k})", kernel_gradient_error(problem, theta), GRADIENT_TOL))

    for k in range(KERNEL_PROBES):
        stream = RngStream(k, 2)
        data = gen_iv(PROBE_N, "sin", stream)
        moments = LinearResidual(1, intercept=True)
        problem = KernelFgelProblem(data, moments, GramSet.from_instruments(data.z, 1), chi2, PROBE_LAMBDA)
        theta = stream.generator.standard_normal(2)
        checks.append(_check(f"kernel profile gradient (iv, seed={k})", kernel_gradient_error(problem, theta), GRADIENT_TOL))

    # even probes use a linear model, odd probes a small network model
    for k in range(NEURAL_PROBES):
        stream = RngStream(k, 3)
        data, _ = gen_heteroskedastic(PROBE_N // 2, stream)
        if k % 2:
            moments = MlpResidual(Mlp(1, [4, 3], 1), stream.child(4))
            theta = moments.initial_theta(data) + 0.1 * stream.generator.standard_normal(moments.p)
        else:
            moments = LinearResidual(1)
            theta = stream.generator.standard_normal(1)
        instrument = Mlp(data.d_z, [4, 3], moments.m)
        problem = NeuralFgelProblem(data, moments, instrument, chi2, PROBE_LAMBDA, init_stream=stream.child(0))
        kind = "mlp" if k % 2 else "linear"
        omega = problem.initial_omega()
        theta_error, omega_error = neural_gradient_errors(problem, theta, omega, stream.child(2))
        checks.append(_check(f"neural theta gradient ({kind} model, seed={k})", theta_error, GRADIENT_TOL))
        checks.append(_check(f"neural omega gradient ({kind} model, seed={k})", omega_error, GRADIENT_TOL))
    return checks


# ---------------------------------------------------------------------------
# CONJUGATES
# ---------------------------------------------------------------------------

def conjugates_suite() -> list[CheckResult]:
    checks = []
    for name in ("chi2", "el", "kl"):
        divergence = make_divergence(name)
        grid = conjugate_grid(divergence)
        exact = divergence.legendre_conjugate(grid)
        numeric = np.array([numeric_conjugate(divergence, v) for v in grid])
        checks.append(_check(f"{name} conjugate", np.max(np.abs(exact - numeric)), CONJUGATE_TOL))
        zero = np.zeros(1)
        normalisation = max(abs(divergence.phi1(zero)[0] + 1.0), abs(divergence.phi2(zero)[0] + 1.0))
        checks.append(_check(f"{name} phi1(0) = phi2(0) = -1", normalisation, 1e-12))
    return checks


SUITES: dict[str, Callable[[], list[CheckResult]]] = {
    "duality": duality_suite,
    "gradients": gradients_suite,
    "conjugates": conjugates_suite,
}


def run_suite(name: str) -> list[CheckResult]:
    try:
        suite = SUITES[name]
    except KeyError:
        raise ConfigError(f"Unknown verification suite '{name}'. Allowed: {', '.join(SUITES)}") from None
    checks = suite()
    failed = sum(not check.passed for check in checks)
    logger.info("Suite %s: %d/%d checks passed", name, len(checks) - failed, len(checks))
    return checks
