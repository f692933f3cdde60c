"""Tests for plaintext conditioning and the conditional mixture."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from tests.conftest import random_params
from vpgmm.domain.models import ConditionalGmm, Dims, GmmParams
from vpgmm.errors import ConditioningError, ContractViolationError
from vpgmm.gmm.conditional import conditional_params, conditioning_block


def _bivariate(rho: float) -> GmmParams:
    """One farm, two periods, one component with unit variances."""
    cov = np.array([[[1.0, rho], [rho, 1.0]]])
    return GmmParams.from_moments(np.array([1.0]), np.array([[0.5, 1.5]]), cov)


def test_bivariate_closed_form() -> None:
    """Test the textbook conditional of a bivariate normal."""
    rho = 0.6
    cond = conditional_params(_bivariate(rho), np.array([1.0]), v0=1, farm=1, period=2)
    assert cond.weights[0] == pytest.approx(1.0)
    assert cond.means[0] == pytest.approx(1.5 + rho * (1.0 - 0.5))
    assert cond.variances[0] == pytest.approx(1.0 - rho**2)


def test_conditional_matches_dense_formula() -> None:
    """Test means, variances and weights against explicit dense algebra."""
    dims = Dims(num_farms=3, num_periods=3, num_obs=5, num_components=2)
    params = random_params(dims, seed=9)
    y = np.array([0.4, 0.5, 0.6])
    v0, farm, period = 2, 3, 3
    cond = conditional_params(params, y, v0, farm, period)

    cols = dims.period_columns(v0)
    target = dims.flat(farm, period)
    factors = []
    for j in range(2):
        s_vv = params.covariances[j][np.ix_(cols, cols)]
        s_tv = params.covariances[j][target, cols]
        a = np.linalg.solve(s_vv, s_tv)
        assert cond.means[j] == pytest.approx(params.means[j, target] + a @ (y - params.means[j, cols]))
        assert cond.variances[j] == pytest.approx(params.covariances[j][target, target] - a @ s_tv)
        factors.append(params.weights[j] * stats.multivariate_normal(params.means[j, cols], s_vv).pdf(y))
    np.testing.assert_allclose(cond.weights, np.array(factors) / sum(factors), rtol=1e-10)


def test_conditioning_block_same_period() -> None:
    """Test that conditioning a period on itself is rejected."""
    with pytest.raises(ContractViolationError, match="equals the conditioning period"):
        conditioning_block(_bivariate(0.3), num_farms=1, v0=2, farm=1, period=2)


def test_conditioning_block_out_of_range() -> None:
    """Test that out-of-range farms and periods are rejected."""
    params = _bivariate(0.3)
    with pytest.raises(ContractViolationError, match="periods must lie"):
        conditioning_block(params, num_farms=1, v0=1, farm=1, period=3)
    with pytest.raises(ContractViolationError, match="farm must lie"):
        conditioning_block(params, num_farms=1, v0=1, farm=2, period=2)


def test_conditioning_block_singular() -> None:
    """Test that a singular Σ_{j,v0} raises ConditioningError."""
    params = GmmParams.from_moments(np.array([1.0]), np.zeros((1, 4)), np.eye(4)[None])
    singular = params.covariances.copy()
    # farms 1 and 2 perfectly correlated at period 1
    singular[0][np.ix_([0, 2], [0, 2])] = 1.0
    broken = GmmParams(params.weights, params.means, singular, params.precisions, params.log_dets)
    with pytest.raises(ConditioningError, match="j=0"):
        conditioning_block(broken, num_farms=2, v0=1, farm=1, period=2)


def test_conditional_pdf_integrates_to_one() -> None:
    """Test that the conditional mixture density has unit mass."""
    cond = ConditionalGmm(1, 2, np.array([0.3, 0.7]), np.array([-1.0, 2.0]), np.array([0.5, 1.5]))
    mass, _ = integrate.quad(lambda y: float(cond.pdf(y)), -np.inf, np.inf)
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_quantiles_monotone_and_accurate() -> None:
    """Test that quantiles are non-decreasing and hit their probability levels."""
    cond = ConditionalGmm(1, 2, np.array([0.5, 0.5]), np.array([0.0, 5.0]), np.array([1.0, 0.25]))
    levels = [0.05, 0.25, 0.5, 0.75, 0.95]
    q = cond.quantiles(levels)
    assert np.all(np.diff(q) >= 0)
    np.testing.assert_allclose(cond.cdf(q), levels, atol=1e-7)


def test_quantile_single_component_is_normal() -> None:
    """Test that a one-component quantile equals the normal quantile."""
    cond = ConditionalGmm(2, 3, np.array([1.0]), np.array([1.0]), np.array([4.0]))
    assert cond.quantile(0.9) == pytest.approx(stats.norm(1.0, 2.0).ppf(0.9), abs=1e-6)


def test_quantile_level_out_of_range() -> None:
    """Test that levels outside (0, 1) are rejected."""
    cond = ConditionalGmm(1, 2, np.array([1.0]), np.array([0.0]), np.array([1.0]))
    with pytest.raises(ContractViolationError, match="quantile level"):
        cond.quantile(1.0)


def test_conditional_gmm_rejects_non_positive_variance() -> None:
    """Test that a zero conditional variance is rejected."""
    with pytest.raises(ContractViolationError, match="must be positive"):
        ConditionalGmm(1, 2, np.array([1.0]), np.array([0.0]), np.array([0.0]))


@settings(max_examples=200, deadline=None)
@given(
    num_farms=st.integers(min_value=1, max_value=3),
    num_periods=st.integers(min_value=2, max_value=3),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_single_component_is_gaussian_conditioning(
    num_farms: int, num_periods: int, seed: int
) -> None:
    """Test that one component conditions like a plain multivariate normal."""
    dims = Dims(num_farms, num_periods, num_obs=5, num_components=1)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dims.dim, dims.dim)) * 0.5
    cov = a @ a.T + 0.5 * np.eye(dims.dim)
    mean = rng.uniform(0.0, 1.0, size=dims.dim)
    params = GmmParams.from_moments(np.array([1.0]), mean[None], cov[None])
    v0 = int(rng.integers(1, num_periods + 1))
    period = 1 + (v0 % num_periods)
    farm = int(rng.integers(1, num_farms + 1))
    y = rng.uniform(0.0, 1.0, size=num_farms)

    cond = conditional_params(params, y, v0, farm, period)

    cols = dims.period_columns(v0)
    target = dims.flat(farm, period)
    gain = np.linalg.solve(cov[np.ix_(cols, cols)], cov[cols, target])
    mu = mean[target] + gain @ (y - mean[cols])
    var = cov[target, target] - gain @ cov[cols, target]
    assert cond.weights[0] == 1.0
    assert abs(cond.means[0] - mu) <= 1e-9 * (1.0 + abs(mu))
    assert abs(cond.variances[0] - var) <= 1e-9 * (1.0 + var)
