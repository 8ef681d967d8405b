import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from fgel.models.dataset import (
    HETEROSKEDASTIC_THETA,
    IV_NOISE_STD,
    Dataset,
    RngStream,
    gen_heteroskedastic,
    gen_iv,
    iv_function,
)
from fgel.models.errors import ConfigError
from fgel.models.moments import (
    LinearResidual,
    LocationMoment,
    MlpResidual,
    finite_difference_jacobian,
)
from fgel.utils.mlp import Mlp


# ── DATASET ───────────────────────────────────────────────────────────────────

def test_dataset_rejects_mismatched_rows():
    with pytest.raises(ValueError, match="same number of rows"):
        Dataset(np.zeros((3, 2)), np.zeros((4, 1)))


def test_dataset_rejects_non_finite_entries():
    x = np.array([[1.0, np.nan]])
    with pytest.raises(ValueError, match="finite"):
        Dataset(x, np.zeros((1, 1)))


def test_dataset_is_read_only():
    data = Dataset(np.ones((2, 2)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        data.x[0, 0] = 5.0


def test_csv_keeps_exact_floats(tmp_path):
    data, _ = gen_heteroskedastic(17, RngStream(3, 0))
    path = tmp_path / "data.csv"
    data.to_csv(path)

    assert path.read_text().splitlines()[0] == "x0,x1,z0"
    loaded = Dataset.from_csv(path)
    assert_array_equal(loaded.x, data.x)
    assert_array_equal(loaded.z, data.z)


def test_csv_without_instrument_columns_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1\n1,2\n")
    with pytest.raises(ConfigError):
        Dataset.from_csv(path)


# ── RANDOM STREAMS ────────────────────────────────────────────────────────────

def test_equal_streams_reproduce_draws():
    first, _ = gen_heteroskedastic(50, RngStream(11, 4))
    second, _ = gen_heteroskedastic(50, RngStream(11, 4))
    assert_array_equal(first.x, second.x)


def test_distinct_stream_ids_differ():
    first, _ = gen_heteroskedastic(50, RngStream(11, 4))
    second, _ = gen_heteroskedastic(50, RngStream(11, 5))
    assert not np.array_equal(first.x, second.x)


def test_child_streams_are_reproducible_and_distinct():
    parent = RngStream(2, 1)
    a = parent.child(0).generator.standard_normal(5)
    b = RngStream(2, 1).child(0).generator.standard_normal(5)
    c = parent.child(1).generator.standard_normal(5)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# ── HETEROSKEDASTIC PROCESS ───────────────────────────────────────────────────

def test_heteroskedastic_returns_true_parameter():
    data, theta0 = gen_heteroskedastic(10, RngStream(0, 0))
    assert theta0 == 1.7
    assert_array_equal(data.z[:, 0], data.x[:, 0])
    assert np.all(np.abs(data.x[:, 0]) <= 1.5)


def test_heteroskedastic_without_noise_is_exact():
    data, _ = gen_heteroskedastic(100, RngStream(0, 0), noise_scale=0.0)
    assert_allclose(data.target, HETEROSKEDASTIC_THETA * data.features[:, 0], rtol=0, atol=0)


def test_heteroskedastic_noise_has_standard_deviation_five_x_squared():
    data, _ = gen_heteroskedastic(100_000, RngStream(1, 0))
    x = data.features[:, 0]
    keep = np.abs(x) > 0.1
    standardized = (data.target[keep] - 1.7 * x[keep]) / (5.0 * x[keep] ** 2)
    assert abs(standardized.var() - 1.0) < 0.03


def test_smooth_noise_profile():
    data, _ = gen_heteroskedastic(100_000, RngStream(1, 0), noise="smooth")
    x = data.features[:, 0]
    standardized = (data.target - 1.7 * x) / (1.0 + x**2)
    assert abs(standardized.var() - 1.0) < 0.03


def test_unknown_noise_profile():
    with pytest.raises(ConfigError):
        gen_heteroskedastic(5, RngStream(0, 0), noise="loud")


# ── IV PROCESS ────────────────────────────────────────────────────────────────

def test_noiseless_linear_iv_collapses_to_identity():
    data = gen_iv(200, "linear", RngStream(0, 0), noise_scale=0.0)
    assert_array_equal(data.features[:, 0], data.z[:, 0])
    assert_array_equal(data.target, data.z[:, 0])


def test_step_function_is_inclusive_at_zero():
    step = iv_function("step")
    assert_array_equal(step(np.array([-0.3, 0.0, 2.0])), [0.0, 1.0, 1.0])


def test_unknown_structural_function():
    with pytest.raises(ConfigError):
        gen_iv(10, "cubic", RngStream(0, 0))


def test_iv_confounding_correlation():
    data = gen_iv(100_000, "sin", RngStream(5, 0))
    x = data.features[:, 0]
    noise = data.target - np.sin(x)
    var_x = 3.0 + 1.0 + IV_NOISE_STD**2
    expected = 1.0 / np.sqrt(var_x * (1.0 + IV_NOISE_STD**2))
    assert abs(np.corrcoef(x, noise)[0, 1] - expected) < 0.01


# ── MOMENT FUNCTIONS ──────────────────────────────────────────────────────────

def test_residual_vanishes_on_noiseless_data(noiseless_line):
    psi = LinearResidual(1).evaluate(noiseless_line.x, np.array([1.7]))
    assert_allclose(psi, 0.0, atol=1e-15)


def test_linear_residual_jacobian_matches_finite_differences():
    gen = RngStream(0, 9).generator
    x = gen.standard_normal((30, 3))
    model = LinearResidual(2, intercept=True)
    for _ in range(100):
        theta = gen.standard_normal(3)
        assert_allclose(model.jacobian(x, theta), finite_difference_jacobian(model, x, theta), rtol=1e-5, atol=1e-7)


def test_mlp_residual_jacobian_matches_finite_differences():
    stream = RngStream(0, 10)
    model = MlpResidual(Mlp(1, [5, 3], 1), stream.child(0))
    gen = stream.generator
    x = gen.standard_normal((12, 2))
    theta = model.initial_theta(None)
    for _ in range(20):
        probe = theta + 0.1 * gen.standard_normal(theta.size)
        assert_allclose(model.jacobian(x, probe), finite_difference_jacobian(model, x, probe), rtol=1e-5, atol=1e-7)


def test_mlp_residual_vjp_matches_jacobian_contraction():
    stream = RngStream(4, 0)
    model = MlpResidual(Mlp(1, [4, 3], 1), stream.child(0))
    gen = stream.generator
    x = gen.standard_normal((9, 2))
    theta = model.initial_theta(None)
    cotangent = gen.standard_normal((9, 1))
    expected = np.einsum("nm,nmp->p", cotangent, model.jacobian(x, theta))
    assert_allclose(model.vjp(x, theta, cotangent), expected, rtol=1e-10, atol=1e-12)


def test_row_view_matches_batch():
    model = LinearResidual(1, intercept=True)
    x = np.array([[0.5, 2.0], [1.0, -1.0]])
    theta = np.array([2.0, 0.5])
    assert_allclose(model.evaluate_row(x[1], theta), model.evaluate(x, theta)[1])
    assert model.jacobian_row(x[1], theta).shape == (1, 2)


def test_location_moment():
    model = LocationMoment()
    x = np.array([[1.0], [2.0], [3.0]])
    assert_allclose(model.evaluate(x, np.array([2.0]))[:, 0], [-1.0, 0.0, 1.0])
    assert_allclose(model.jacobian(x, np.array([2.0])), -np.ones((3, 1, 1)))
