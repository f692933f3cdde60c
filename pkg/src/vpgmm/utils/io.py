"""Input/output utility functions for parameter and forecast files."""

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from vpgmm.domain.models import ConditionalGmm, Dims, GmmParams
from vpgmm.errors import ContractViolationError, DataFormatError

PARAMS_MAGIC = "vpgmm-params"
PARAMS_VERSION = "v1"
FORECAST_COLUMNS = ["farm", "t", "j", "w_c", "mu_c", "sigma_c"]


def _fmt(values: np.ndarray) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def save_params(filepath: Path, params: GmmParams, dims: Dims) -> None:
    """Save mixture parameters as a ``vpgmm-params v1`` text file.

    Layout: header ``vpgmm-params v1 M T I J``, one line of J weights, J lines of
    means, then J·D lines of covariance rows; every value with 17 significant digits.

    Args:
        filepath: Path to save the file
        params: Parameters to save
        dims: Dimensions recorded in the header
    """
    params.check_dims(dims)
    lines = [
        f"{PARAMS_MAGIC} {PARAMS_VERSION} {dims.num_farms} {dims.num_periods} "
        f"{dims.num_obs} {dims.num_components}",
        _fmt(params.weights),
    ]
    lines.extend(_fmt(row) for row in params.means)
    lines.extend(_fmt(row) for cov in params.covariances for row in cov)
    Path(filepath).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(filepath: Path) -> tuple[Dims, GmmParams]:
    """Load a ``vpgmm-params v1`` file.

    Args:
        filepath: Path to the parameter file

    Returns:
        Tuple of (dims, params); precisions are recomputed from the covariances

    Raises:
        FileNotFoundError: If the file does not exist
        DataFormatError: If the file format is invalid
    """
    filepath = Path(filepath)
    if not filepath.exists():
        raise FileNotFoundError(f"Parameter file not found: {filepath}")

    lines = filepath.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataFormatError(f"{filepath}: empty parameter file")
    header = lines[0].split()
    if len(header) != 6 or header[0] != PARAMS_MAGIC or header[1] != PARAMS_VERSION:
        raise DataFormatError(
            f"{filepath}: header must be '{PARAMS_MAGIC} {PARAMS_VERSION} M T I J', "
            f"found '{lines[0]}'"
        )
    try:
        dims = Dims(*(int(v) for v in header[2:]))
    except (ValueError, ContractViolationError) as e:
        raise DataFormatError(f"{filepath}: invalid dimensions in header: {e}") from e

    J, D = dims.num_components, dims.dim
    expected_lines = 1 + 1 + J + J * D
    if len(lines) != expected_lines:
        raise DataFormatError(
            f"{filepath}: expected {expected_lines} lines for J={J}, D={D}, found {len(lines)}"
        )

    def parse(line_no: int, count: int) -> np.ndarray:
        tokens = lines[line_no - 1].split()
        if len(tokens) != count:
            raise DataFormatError(
                f"{filepath}: line {line_no} has {len(tokens)} values, expected {count}"
            )
        try:
            return np.array([float(tok) for tok in tokens])
        except ValueError as e:
            raise DataFormatError(f"{filepath}: line {line_no}: {e}") from e

    weights = parse(2, J)
    means = np.stack([parse(3 + j, D) for j in range(J)])
    start = 3 + J
    covariances = np.stack(
        [np.stack([parse(start + j * D + r, D) for r in range(D)]) for j in range(J)]
    )
    return dims, GmmParams.from_moments(weights, means, covariances)


def forecast_frame(forecasts: Sequence[ConditionalGmm]) -> pd.DataFrame:
    """One row per (farm, component): ``farm,t,j,w_c,mu_c,sigma_c``."""
    rows = [
        (cond.farm, cond.period, j + 1, cond.weights[j], cond.means[j], cond.variances[j])
        for cond in forecasts
        for j in range(cond.weights.shape[0])
    ]
    return pd.DataFrame(rows, columns=FORECAST_COLUMNS)


def save_forecast_csv(filepath: Path, forecasts: Sequence[ConditionalGmm]) -> None:
    """Save conditional mixtures as a forecast CSV."""
    forecast_frame(forecasts).to_csv(
        filepath, index=False, float_format="%.17g", lineterminator="\n"
    )


def load_forecast_csv(filepath: Path) -> list[ConditionalGmm]:
    """Load a forecast CSV written by :func:`save_forecast_csv`.

    Raises:
        FileNotFoundError: If the file does not exist
        DataFormatError: If required columns are missing
    """
    filepath = Path(filepath)
    if not filepath.exists():
        raise FileNotFoundError(f"Forecast file not found: {filepath}")
    frame = pd.read_csv(filepath)
    missing = [c for c in FORECAST_COLUMNS if c not in frame.columns]
    if missing:
        raise DataFormatError(f"{filepath}: missing columns {missing}")
    out = []
    for (farm, period), group in frame.groupby(["farm", "t"], sort=False):
        group = group.sort_values("j")
        out.append(
            ConditionalGmm(
                int(farm),
                int(period),
                group["w_c"].to_numpy(),
                group["mu_c"].to_numpy(),
                group["sigma_c"].to_numpy(),
            )
        )
    return out


def quantile_column(level: float) -> str:
    """Column name for a probability level, e.g. 0.05 -> ``q05``."""
    return f"q{int(round(level * 100)):02d}"


def quantile_frame(
    forecasts: Sequence[ConditionalGmm], levels: Sequence[float], tol: float = 1e-8
) -> pd.DataFrame:
    """Mixture quantiles per forecast: ``farm,t,q05,...``."""
    records = []
    for cond in forecasts:
        record = {"farm": cond.farm, "t": cond.period}
        for level, value in zip(levels, cond.quantiles(levels, tol)):
            record[quantile_column(level)] = value
        records.append(record)
    return pd.DataFrame(records, columns=["farm", "t"] + [quantile_column(q) for q in levels])


def save_quantiles_csv(
    filepath: Path, forecasts: Sequence[ConditionalGmm], levels: Sequence[float], tol: float = 1e-8
) -> None:
    """Save mixture quantiles per forecast."""
    quantile_frame(forecasts, levels, tol).to_csv(
        filepath, index=False, float_format="%.17g", lineterminator="\n"
    )
