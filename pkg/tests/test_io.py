"""Tests for parameter and forecast file I/O."""

import numpy as np
import pytest

from tests.conftest import random_params
from vpgmm.domain.models import ConditionalGmm
from vpgmm.errors import ContractViolationError, DataFormatError
from vpgmm.utils.io import (
    load_forecast_csv,
    load_params,
    quantile_column,
    quantile_frame,
    save_forecast_csv,
    save_params,
)


def test_params_round_trip(tmp_path, small_dims) -> None:
    """Test that saved parameters load back bit for bit."""
    params = random_params(small_dims, seed=3)
    path = tmp_path / "params.txt"
    save_params(path, params, small_dims)
    dims, loaded = load_params(path)
    assert dims == small_dims
    np.testing.assert_array_equal(loaded.weights, params.weights)
    np.testing.assert_array_equal(loaded.means, params.means)
    np.testing.assert_array_equal(loaded.covariances, params.covariances)


def test_params_header_line(tmp_path, small_dims) -> None:
    """Test the header and total line count of the text format."""
    path = tmp_path / "params.txt"
    save_params(path, random_params(small_dims, seed=0), small_dims)
    lines = path.read_text().splitlines()
    assert lines[0] == "vpgmm-params v1 3 2 10 2"
    assert len(lines) == 1 + 1 + 2 + 2 * 6


def test_save_params_dims_mismatch(tmp_path, small_dims, desk_dims) -> None:
    """Test that parameters must match the recorded dimensions."""
    with pytest.raises(ContractViolationError, match="expected D=12"):
        save_params(tmp_path / "p.txt", random_params(small_dims, seed=0), desk_dims)


def test_load_params_missing(tmp_path) -> None:
    """Test that a missing file raises FileNotFoundError."""
    with pytest.raises(FileNotFoundError, match="Parameter file not found"):
        load_params(tmp_path / "absent.txt")


def test_load_params_bad_header(tmp_path) -> None:
    """Test rejection of a foreign header."""
    path = tmp_path / "p.txt"
    path.write_text("gmm v2 1 1 1 1\n1\n0.5\n1\n")
    with pytest.raises(DataFormatError, match="header must be 'vpgmm-params v1 M T I J'"):
        load_params(path)


def test_load_params_truncated(tmp_path, small_dims) -> None:
    """Test rejection of a file with missing covariance rows."""
    path = tmp_path / "p.txt"
    save_params(path, random_params(small_dims, seed=0), small_dims)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DataFormatError, match="expected 16 lines"):
        load_params(path)


def test_load_params_short_line(tmp_path, small_dims) -> None:
    """Test rejection of a line with the wrong number of values."""
    path = tmp_path / "p.txt"
    save_params(path, random_params(small_dims, seed=0), small_dims)
    lines = path.read_text().splitlines()
    lines[1] = "0.5"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="line 2 has 1 values, expected 2"):
        load_params(path)


def test_forecast_csv_round_trip(tmp_path) -> None:
    """Test that forecast files load back per farm."""
    forecasts = [
        ConditionalGmm(1, 3, np.array([0.25, 0.75]), np.array([0.1, 0.4]), np.array([0.01, 0.02])),
        ConditionalGmm(2, 3, np.array([0.6, 0.4]), np.array([0.3, 0.5]), np.array([0.03, 0.04])),
    ]
    path = tmp_path / "forecast.csv"
    save_forecast_csv(path, forecasts)
    assert path.read_text().splitlines()[0] == "farm,t,j,w_c,mu_c,sigma_c"
    loaded = load_forecast_csv(path)
    assert [(c.farm, c.period) for c in loaded] == [(1, 3), (2, 3)]
    for before, after in zip(forecasts, loaded):
        np.testing.assert_array_equal(after.weights, before.weights)
        np.testing.assert_array_equal(after.means, before.means)
        np.testing.assert_array_equal(after.variances, before.variances)


def test_load_forecast_missing_columns(tmp_path) -> None:
    """Test rejection of a forecast file without the mixture columns."""
    path = tmp_path / "forecast.csv"
    path.write_text("farm,t,j\n1,2,1\n")
    with pytest.raises(DataFormatError, match="missing columns"):
        load_forecast_csv(path)


def test_quantile_column() -> None:
    """Test probability-level column names."""
    assert quantile_column(0.05) == "q05"
    assert quantile_column(0.5) == "q50"
    assert quantile_column(0.95) == "q95"


def test_quantile_frame() -> None:
    """Test quantiles of a single-component forecast against the normal quantile."""
    cond = ConditionalGmm(2, 5, np.array([1.0]), np.array([0.4]), np.array([0.01]))
    frame = quantile_frame([cond], [0.05, 0.5, 0.95])
    assert list(frame.columns) == ["farm", "t", "q05", "q50", "q95"]
    row = frame.iloc[0]
    assert row["farm"] == 2
    assert row["q50"] == pytest.approx(0.4, abs=1e-7)
    assert row["q95"] - row["q50"] == pytest.approx(1.6448536269514722 * 0.1, abs=1e-6)
    assert row["q05"] < row["q50"] < row["q95"]
