import numpy as np
import pytest
from numpy.testing import assert_allclose

from fgel.estimators.oracle import (
    MAX_ORACLE_N,
    OracleInstance,
    constraint_norm,
    dual_objective,
    dual_profile,
    feasibility_threshold,
    implied_weights_roundtrip,
    make_instance,
    primal_profile_chi2,
)
from fgel.models.dataset import Dataset, RngStream
from fgel.models.divergence import make_divergence
from fgel.models.errors import InfeasibleProblemError
from fgel.models.moments import LinearResidual
from fgel.utils.kernel import GramSet
from fgel.verification import duality_suite


def exact_instance(n=6, lam=0.1):
    """psi vanishes at every sample."""
    x = np.linspace(-1.0, 1.0, n)
    data = Dataset(np.column_stack([x, 0.8 * x]), x[:, None])
    return OracleInstance(data, LinearResidual(1), np.array([0.8]), lam, GramSet.from_instruments(data.z, 1))


def test_instance_size_limit():
    with pytest.raises(ValueError):
        make_instance(seed=0, n=MAX_ORACLE_N + 1)


def test_default_lambda_keeps_the_constraint_active():
    instance = make_instance(seed=3, n=6)
    assert feasibility_threshold(instance) < instance.lam < constraint_norm(instance, np.ones(6))


@pytest.mark.parametrize("lam", [0.1, 1e3])
def test_exact_moments_give_uniform_weights(lam):
    instance = exact_instance(lam=lam)
    primal = primal_profile_chi2(instance)
    assert primal.feasible
    assert primal.value == pytest.approx(0.0, abs=1e-6)
    assert_allclose(primal.p, 1.0 / 6, atol=1e-5)

    dual = dual_profile(instance)
    assert dual.value == pytest.approx(0.0, abs=1e-12)
    assert_allclose(dual.weights, 1.0 / 6, atol=1e-12)


def test_duality_suite_passes():
    checks = duality_suite()
    assert len(checks) == 20
    assert all(check.passed for check in checks), [str(check) for check in checks if not check.passed]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_primal_value_does_not_increase_with_lambda(seed):
    values = [primal_profile_chi2(make_instance(seed=seed, n=6, lam=lam)).value for lam in (0.01, 0.1, 1.0)]
    assert all(later <= earlier + 1e-7 for earlier, later in zip(values, values[1:]))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_primal_and_dual_vanish_for_large_lambda(seed):
    instance = make_instance(seed=seed, n=6, lam=1e3)
    primal = primal_profile_chi2(instance)
    assert primal.feasible
    assert primal.value == pytest.approx(0.0, abs=1e-4)
    assert dual_profile(instance).value == pytest.approx(0.0, abs=1e-4)


def test_primal_infeasible_below_threshold():
    base = make_instance(seed=2, n=5)
    primal = primal_profile_chi2(base.with_lambda(0.5 * feasibility_threshold(base)))
    assert not primal.feasible
    assert primal.value == np.inf
    assert primal.status == "infeasible"


def test_dual_objective_is_concave():
    instance = make_instance(seed=4, n=7)
    chi2 = make_divergence("chi2")
    gen = RngStream(4, 1).generator
    for _ in range(20):
        beta_a, beta_b = gen.standard_normal((2, 1, 7))
        mu_a, mu_b = gen.standard_normal(2)
        mid = dual_objective(instance, chi2, 0.5 * (beta_a + beta_b), 0.5 * (mu_a + mu_b), smooth=False)
        ends = 0.5 * (dual_objective(instance, chi2, beta_a, mu_a, smooth=False) + dual_objective(instance, chi2, beta_b, mu_b, smooth=False))
        assert mid >= ends - 1e-9


def test_dual_weights_sum_to_one():
    dual = dual_profile(make_instance(seed=5, n=8))
    assert dual.weights.sum() == pytest.approx(1.0, abs=1e-6)


def test_implied_weights_roundtrip_on_small_instances():
    for seed in range(3):
        assert implied_weights_roundtrip(make_instance(seed=seed, n=4 + seed)) < 1e-3


def test_implied_weights_roundtrip_needs_a_feasible_primal():
    instance = make_instance(seed=1, n=6)
    with pytest.raises(InfeasibleProblemError):
        implied_weights_roundtrip(instance.with_lambda(0.5 * feasibility_threshold(instance)))
