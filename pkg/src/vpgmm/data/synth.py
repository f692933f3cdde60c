"""Synthetic wind-farm outputs with temporal and spatial correlation."""

import logging
from collections.abc import Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit

from vpgmm.data.slices import FullDataset, partition
from vpgmm.domain.models import Dims
from vpgmm.errors import ContractViolationError

logger = logging.getLogger(__name__)


def ar1_correlation(size: int, rho: float) -> np.ndarray:
    """Correlation matrix with entries rho^|a−b|."""
    lags = np.abs(np.subtract.outer(np.arange(size), np.arange(size)))
    return np.power(rho, lags, dtype=float)


def synth_generate(
    dims: Dims,
    capacities: Sequence[float],
    temporal_corr: float,
    spatial_corr: float,
    seed: int,
) -> FullDataset:
    """Draw a dataset from a squashed Gaussian with Kronecker correlation.

    The latent D-dimensional Gaussian has covariance (ρ_s^{|m−n|}) ⊗ (ρ_t^{|t−v|});
    each latent value z becomes capacity_m / (1 + e^{−z}).

    Args:
        dims: Problem dimensions
        capacities: Per-farm capacities in MW, length M
        temporal_corr: ρ_t in (−1, 1)
        spatial_corr: ρ_s in (−1, 1)
        seed: Random seed

    Returns:
        Dataset with every value in [0, capacity_m]

    Raises:
        ContractViolationError: If a correlation is out of range or the latent
            covariance is not positive definite
    """
    for name, rho in (("temporal_corr", temporal_corr), ("spatial_corr", spatial_corr)):
        if not -1.0 < rho < 1.0:
            raise ContractViolationError(f"{name} must lie in (-1, 1), got {rho}")
    capacities = np.asarray(capacities, dtype=float)
    if capacities.shape != (dims.num_farms,) or np.any(capacities <= 0):
        raise ContractViolationError(
            f"capacities must be {dims.num_farms} positive values, got {capacities}"
        )

    latent_cov = np.kron(
        ar1_correlation(dims.num_farms, spatial_corr),
        ar1_correlation(dims.num_periods, temporal_corr),
    )
    try:
        chol = linalg.cholesky(latent_cov, lower=True)
    except linalg.LinAlgError as exc:
        raise ContractViolationError(
            f"latent covariance for rho_t={temporal_corr}, rho_s={spatial_corr} is not SPD"
        ) from exc

    rng = np.random.default_rng(seed)
    latent = rng.standard_normal((dims.num_obs, dims.dim)) @ chol.T
    column_caps = np.repeat(capacities, dims.num_periods)
    values = np.clip(column_caps * expit(latent), 0.0, column_caps)
    logger.debug("Generated %d x %d synthetic outputs (seed %d)", *values.shape, seed)
    return partition(values, dims, capacities)
