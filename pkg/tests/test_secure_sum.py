"""Tests for the ring secure sum."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vpgmm.domain.config import PipelineConfig
from vpgmm.errors import ContractViolationError, PrivacyWarning, SecureSumOverflowError
from vpgmm.simnet.bus import Bus
from vpgmm.smc.fixed_point import FixedPointCodec
from vpgmm.smc.secure_sum import run_secure_sum, secure_sum


def test_secure_sum_scalar() -> None:
    """Test a three-party scalar sum delivered to everyone."""
    bus = Bus([1, 2, 3])
    result = secure_sum(bus, [1, 2, 3], [1.5, 2.5, -0.75], modulus=100.0, seed=4)
    assert result == pytest.approx(3.25, abs=1e-12)
    assert isinstance(result, float)


def test_secure_sum_vector_and_messages() -> None:
    """Test a vector sum: M ring messages plus M−1 result messages."""
    bus = Bus([1, 2, 3, 4])
    addends = {p: np.array([p, -2.0 * p, 0.5]) for p in (1, 2, 3, 4)}
    session = run_secure_sum(bus, [1, 2, 3, 4], addends, modulus=1e3, seed=0, tag="v")
    np.testing.assert_allclose(session.result, [10.0, -20.0, 2.0], atol=1e-9)
    assert session.delivered == (1, 2, 3, 4)
    assert len(bus.transcript) == 4 + 3
    assert [m.tag for m in bus.transcript[:4]] == ["v/V1", "v/V2", "v/V3", "v/V4"]


def test_secure_sum_partials_in_range() -> None:
    """Test that every transmitted partial lies in [0, N)."""
    bus = Bus([1, 2, 3])
    addends = {1: np.array([40.0]), 2: np.array([-10.0]), 3: np.array([5.0])}
    session = run_secure_sum(bus, [1, 2, 3], addends, modulus=200.0, seed=7, arithmetic="real")
    for partial in session.partials:
        assert np.all((partial >= 0) & (partial < 200.0))
    assert session.result[0] == pytest.approx(35.0, abs=1e-9)


def test_secure_sum_first_partial_is_blinded() -> None:
    """Test that the first partial hides the first addend and depends on the seed."""
    addends = {1: np.array([3.0]), 2: np.array([4.0]), 3: np.array([5.0])}
    a = run_secure_sum(Bus([1, 2, 3]), [1, 2, 3], addends, 100.0, seed=1, arithmetic="real")
    b = run_secure_sum(Bus([1, 2, 3]), [1, 2, 3], addends, 100.0, seed=2, arithmetic="real")
    assert a.partials[0][0] != pytest.approx(3.0 + 50.0)
    assert a.partials[0][0] != b.partials[0][0]
    assert a.result[0] == pytest.approx(b.result[0])


def test_secure_sum_fixed_arithmetic() -> None:
    """Test the ring-integer variant."""
    bus = Bus([1, 2, 3])
    addends = {1: np.array([0.1, 7.25]), 2: np.array([0.2, -3.0]), 3: np.array([0.3, 1.0])}
    session = run_secure_sum(bus, [1, 2, 3], addends, 50.0, seed=3, arithmetic="fixed")
    np.testing.assert_allclose(session.result, [0.6, 5.25], atol=1e-11)
    assert session.partials[0].dtype == object


def test_secure_sum_without_broadcast() -> None:
    """Test that only the first ring member learns the result when broadcasting is off."""
    bus = Bus([1, 2, 3])
    session = run_secure_sum(
        bus, [2, 1, 3], {1: 1.0, 2: 0.0, 3: 2.0}, 10.0, seed=0, broadcast_result=False
    )
    assert session.delivered == (2,)
    assert session.result[0] == pytest.approx(3.0)
    assert len(bus.transcript) == 3
    assert bus.transcript[0].sender == 2


def test_secure_sum_two_parties_warns() -> None:
    """Test that a two-party ring warns and records the caveat on the session."""
    with pytest.warns(PrivacyWarning, match="two parties"):
        result = secure_sum(Bus([1, 2]), [1, 2], [1.0, 2.0], 10.0)
    assert result == pytest.approx(3.0)
    with pytest.warns(PrivacyWarning):
        session = run_secure_sum(Bus([1, 2]), [2, 1], {1: 1.0, 2: 2.0}, 10.0, seed=0)
    assert "two parties" in session.privacy_note
    three = run_secure_sum(Bus([1, 2, 3]), [1, 2, 3], {1: 1.0, 2: 2.0, 3: 0.5}, 10.0, seed=0)
    assert three.privacy_note is None


def test_secure_sum_debug_oracle_overflow() -> None:
    """Test that the debug oracle flags sums outside [−N/2, N/2)."""
    config = dataclasses.replace(PipelineConfig(), debug_oracle=True)
    with pytest.raises(SecureSumOverflowError, match="out of range"):
        secure_sum(Bus([1, 2, 3]), [1, 2, 3], [3.0, 3.0, 3.0], 10.0, config=config)


def test_secure_sum_rejects_bad_rings() -> None:
    """Test the ring preconditions."""
    with pytest.raises(ContractViolationError, match="at least two parties"):
        secure_sum(Bus([1, 2]), [1], [1.0], 10.0)
    with pytest.raises(ContractViolationError, match="repeated parties"):
        secure_sum(Bus([1, 2, 3]), [1, 2, 1], [1.0, 1.0, 1.0], 10.0)
    with pytest.raises(ContractViolationError, match="addends given for"):
        run_secure_sum(Bus([1, 2, 3]), [1, 2, 3], {1: 1.0, 2: 1.0}, 10.0, seed=0)
    with pytest.raises(ContractViolationError, match="modulus must be positive"):
        secure_sum(Bus([1, 2, 3]), [1, 2, 3], [1.0, 1.0, 1.0], 0.0)


@settings(max_examples=500, deadline=None)
@given(
    addends=st.integers(min_value=3, max_value=8).flatmap(
        lambda m: st.lists(
            st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=m, max_size=m
        )
    ),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_secure_sum_random_rings(addends: list[float], seed: int) -> None:
    """Test default-mode sums over random rings at a capacity-scaled modulus."""
    ring = list(range(1, len(addends) + 1))
    modulus = 1e6 * len(ring)
    result = secure_sum(Bus(ring), ring, addends, modulus, seed=seed)
    assert result == pytest.approx(float(np.sum(addends)), abs=1e-9)


def test_secure_sum_default_is_fixed_point() -> None:
    """Test that secure sums without an explicit mode run in the integer ring."""
    session = run_secure_sum(Bus([1, 2, 3]), [1, 2, 3], {1: 0.5, 2: 0.25, 3: -0.125}, 3e6, seed=1)
    assert session.arithmetic == "fixed"
    assert session.result[0] == 0.625


@pytest.mark.parametrize("arithmetic", ["real", "fixed"])
def test_secure_sum_partials_look_uniform(arithmetic: str) -> None:
    """Test that each transmitted partial is spread uniformly over [0, N)."""
    rng = np.random.default_rng(11)
    modulus = 50.0
    addends = {p: rng.uniform(-2.0, 2.0, size=400) for p in (1, 2, 3, 4)}
    session = run_secure_sum(
        Bus([1, 2, 3, 4]), [1, 2, 3, 4], addends, modulus, seed=21, arithmetic=arithmetic
    )
    if arithmetic == "real":
        scale = modulus
    else:
        scale = FixedPointCodec.for_real_modulus(40, modulus).modulus
    for partial in session.partials:
        unit = np.array([float(v) / scale for v in partial])
        assert np.all((unit >= 0.0) & (unit < 1.0))
        assert stats.kstest(unit, "uniform").pvalue > 1e-4
