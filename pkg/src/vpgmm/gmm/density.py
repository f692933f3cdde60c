"""Gaussian and mixture density evaluation."""

import math

import numpy as np
from scipy.special import logsumexp

from vpgmm.domain.models import GmmParams
from vpgmm.errors import ContractViolationError

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_logpdf(
    x: np.ndarray, mean: np.ndarray, precision: np.ndarray, log_det: float
) -> float:
    """Log-density of a multivariate Gaussian given its precision matrix.

    Args:
        x: Point, shape (D,)
        mean: Mean, shape (D,)
        precision: Precision matrix Φ = Σ^{-1}, shape (D, D)
        log_det: log|Σ|

    Returns:
        −½(x−μ)Φ(x−μ)′ − ½(D·ln 2π + log|Σ|)

    Raises:
        ContractViolationError: If the shapes disagree
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    precision = np.atleast_2d(np.asarray(precision, dtype=float))
    D = x.shape[0]
    if x.ndim != 1 or mean.shape != (D,) or precision.shape != (D, D):
        raise ContractViolationError(
            f"dimension mismatch: x {x.shape}, mean {mean.shape}, precision {precision.shape}"
        )
    diff = x - mean
    return float(-0.5 * (diff @ precision @ diff) - 0.5 * (D * LOG_2PI + log_det))


def quadratic_forms(data: np.ndarray, params: GmmParams) -> np.ndarray:
    """Quadratic forms g_j(y^i) = (y^i−μ_j)Φ_j(y^i−μ_j)′, shape (I, J)."""
    data = _check_data(data, params)
    out = np.empty((data.shape[0], params.num_components))
    for j in range(params.num_components):
        diff = data - params.means[j]
        out[:, j] = np.einsum("id,de,ie->i", diff, params.precisions[j], diff)
    return out


def log_gaussian_from_quadratic(g: np.ndarray, params: GmmParams) -> np.ndarray:
    """Turn quadratic forms (I, J) into Gaussian log-densities (I, J)."""
    return -0.5 * (g + params.dim * LOG_2PI + params.log_dets)


def component_log_densities(data: np.ndarray, params: GmmParams) -> np.ndarray:
    """log N(y^i; μ_j, Σ_j) for every row and component, shape (I, J)."""
    return log_gaussian_from_quadratic(quadratic_forms(data, params), params)


def log_weights(params: GmmParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(params.weights)


def log_likelihood(data: np.ndarray, params: GmmParams) -> float:
    """Σ_i log Σ_j w_j N(y^i; μ_j, Σ_j)."""
    weighted = component_log_densities(data, params) + log_weights(params)
    return float(logsumexp(weighted, axis=1).sum())


def gmm_pdf(x: np.ndarray, params: GmmParams) -> float:
    """Mixture density Σ_j w_j N(x; μ_j, Σ_j) at a single point.

    Raises:
        ContractViolationError: If ``params`` is invalid or ``x`` has the wrong length
    """
    params.validate()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (params.dim,):
        raise ContractViolationError(f"x must have shape ({params.dim},), got {x.shape}")
    weighted = component_log_densities(x[None, :], params)[0] + log_weights(params)
    return float(np.exp(logsumexp(weighted)))


def _check_data(data: np.ndarray, params: GmmParams) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != params.dim:
        raise ContractViolationError(
            f"data must have shape (I, {params.dim}), got {data.shape}"
        )
    return data
