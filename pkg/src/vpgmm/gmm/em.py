"""Centralized EM oracle for the joint GMM.

Both the centralized fit and the distributed fit go through :func:`finalize_params`
for the SPD repair and through :func:`run_em` for the iteration and stopping rule,
so the two paths differ only in how the E- and M-step quantities are assembled.
"""

import logging
import math
import warnings
from collections.abc import Callable, Sequence
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from vpgmm.domain.config import PipelineConfig, resolve_config
from vpgmm.domain.models import Dims, GmmParams, Responsibilities
from vpgmm.errors import (
    ContractViolationError,
    ConvergenceWarning,
    EmptyComponentError,
    EmptyComponentWarning,
    NumericalDegeneracyError,
    SingularCovarianceError,
    VpgmmError,
)
from vpgmm.gmm.density import component_log_densities, log_weights

logger = logging.getLogger(__name__)

IterationCallback = Callable[[int, GmmParams], None]


class CentralizedFit(NamedTuple):
    """Result of an EM run."""

    params: GmmParams
    n_iter: int
    loglik_trace: list[float]
    converged: bool


def initialize_params(dims: Dims, capacities: Sequence[float], seed: int) -> GmmParams:
    """Deterministic initial parameters from a shared seed.

    Means are uniform in [0, capacity_m] per dimension, covariances are
    diag(capacity_m²/16) and weights are uniform. No data is needed, so every
    party derives the same θ⁰ on its own.

    Args:
        dims: Problem dimensions
        capacities: Per-farm capacities, length M
        seed: Shared seed

    Returns:
        Initial parameters θ⁰
    """
    capacities = np.asarray(capacities, dtype=float)
    if capacities.shape != (dims.num_farms,) or np.any(capacities <= 0):
        raise ContractViolationError(
            f"capacities must be {dims.num_farms} positive values, got {capacities}"
        )
    column_caps = np.repeat(capacities, dims.num_periods)
    rng = np.random.default_rng(seed)
    J, D = dims.num_components, dims.dim
    means = rng.uniform(0.0, 1.0, size=(J, D)) * column_caps
    covariances = np.broadcast_to(np.diag(column_caps**2 / 16.0), (J, D, D)).copy()
    weights = np.full(J, 1.0 / J)
    return GmmParams.from_moments(weights, means, covariances)


def repair_covariance(
    covariance: np.ndarray, component: int, config: PipelineConfig | None = None
) -> np.ndarray:
    """Symmetrize and add escalating diagonal jitter until Cholesky succeeds.

    Jitter ε·mean(diag)·I starts at ``jitter_eps`` and grows by ``jitter_growth``
    up to ``jitter_cap``.

    Raises:
        SingularCovarianceError: If the capped jitter still fails
    """
    cfg = resolve_config(config)
    sym = 0.5 * (covariance + covariance.T)
    scale = float(np.mean(np.diag(sym)))
    eye = np.eye(sym.shape[0])
    eps = cfg.jitter_eps
    while eps <= cfg.jitter_cap * (1.0 + 1e-12):
        candidate = sym + eps * scale * eye
        try:
            linalg.cho_factor(candidate, lower=True)
        except linalg.LinAlgError:
            logger.debug("Cholesky failed for j=%d at jitter %.1e", component, eps)
            eps *= cfg.jitter_growth
            continue
        return candidate
    raise SingularCovarianceError(component, f"jitter cap {cfg.jitter_cap:g} exceeded")


def finalize_params(
    weights: np.ndarray,
    means: np.ndarray,
    covariances: np.ndarray,
    config: PipelineConfig | None = None,
) -> GmmParams:
    """Renormalize weights, repair covariances and cache precisions."""
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    repaired = np.stack(
        [repair_covariance(cov, j, config) for j, cov in enumerate(np.asarray(covariances))]
    )
    return GmmParams.from_moments(weights, means, repaired)


def posterior_from_log_densities(log_densities: np.ndarray, params: GmmParams) -> Responsibilities:
    """Responsibilities from Gaussian log-densities (I, J), normalized in log space.

    Raises:
        NumericalDegeneracyError: If every component density of some row underflows
    """
    weighted = log_densities + log_weights(params)
    row = logsumexp(weighted, axis=1)
    bad = np.flatnonzero(~np.isfinite(row))
    if bad.size:
        raise NumericalDegeneracyError(
            f"All component densities underflow for observation i={bad[0] + 1}"
        )
    q = np.exp(weighted - row[:, None])
    q /= q.sum(axis=1, keepdims=True)
    return Responsibilities(q, row)


def e_step(data: np.ndarray, params: GmmParams) -> Responsibilities:
    """Posterior responsibilities Q[i, j] ∝ w_j N(y^i; μ_j, Σ_j).

    Args:
        data: Observations, shape (I, D)
        params: Current parameters

    Returns:
        Responsibilities with row log-densities

    Raises:
        NumericalDegeneracyError: If all component densities underflow for a row
    """
    return posterior_from_log_densities(component_log_densities(data, params), params)


def empty_components(totals: np.ndarray, config: PipelineConfig | None = None) -> np.ndarray:
    """Indices of components whose total responsibility is below the threshold."""
    cfg = resolve_config(config)
    return np.flatnonzero(np.asarray(totals) < cfg.empty_threshold)


def reseed_rows(resp: Responsibilities | np.ndarray, empty: np.ndarray) -> np.ndarray:
    """Observation rows used to reseed ``empty`` components, lowest density first.

    Raises:
        EmptyComponentError: If no row densities are available to choose from
    """
    if not isinstance(resp, Responsibilities):
        q = np.asarray(resp)
        j = int(empty[0])
        raise EmptyComponentError(j, float(q[:, j].sum()))
    order = np.argsort(resp.row_log_density, kind="stable")
    return order[: len(empty)]


def reseed_components(
    weights: np.ndarray,
    means: np.ndarray,
    covariances: np.ndarray,
    prev_params: GmmParams,
    empty: np.ndarray,
    rows: np.ndarray,
    num_obs: int,
) -> None:
    """Reseed empty components in place at the given observation rows.

    The reseeded component keeps its previous covariance and gets weight 1/I
    before renormalization.
    """
    for j, row in zip(empty, rows):
        warnings.warn(
            f"Component j={j} is empty; reseeded at the least likely observation",
            EmptyComponentWarning,
            stacklevel=3,
        )
        means[j] = row
        covariances[j] = prev_params.covariances[j]
        weights[j] = 1.0 / num_obs


def m_step(
    data: np.ndarray,
    resp: Responsibilities | np.ndarray,
    prev_params: GmmParams,
    config: PipelineConfig | None = None,
) -> GmmParams:
    """Re-estimate weights, means and covariances from responsibilities.

    Covariances are centred on the previous means μ_j^k unless
    ``config.use_updated_mean`` is set, in which case the fresh μ_j^{k+1} is used.

    Args:
        data: Observations, shape (I, D)
        resp: Responsibilities from :func:`e_step` (or a bare Q matrix)
        prev_params: Parameters θ^k that produced ``resp``
        config: Optional configuration override

    Returns:
        Parameters θ^{k+1}

    Raises:
        EmptyComponentError: If a component is empty and no row densities are available
        SingularCovarianceError: If the SPD repair exceeds the jitter cap
    """
    cfg = resolve_config(config)
    data = np.asarray(data, dtype=float)
    q = resp.q if isinstance(resp, Responsibilities) else np.asarray(resp, dtype=float)
    if q.shape != (data.shape[0], prev_params.num_components):
        raise ContractViolationError(
            f"Q must have shape ({data.shape[0]}, {prev_params.num_components}), got {q.shape}"
        )
    I, J = q.shape
    totals = q.sum(axis=0)
    empty = empty_components(totals, cfg)
    safe_totals = totals.copy()
    safe_totals[empty] = 1.0

    means = (q.T @ data) / safe_totals[:, None]
    centres = means if cfg.use_updated_mean else prev_params.means
    covariances = np.empty((J, data.shape[1], data.shape[1]))
    for j in range(J):
        diff = data - centres[j]
        covariances[j] = (diff * q[:, j : j + 1]).T @ diff / safe_totals[j]
    weights = totals / I

    if empty.size:
        rows = reseed_rows(resp, empty)
        reseed_components(weights, means, covariances, prev_params, empty, data[rows], I)
    return finalize_params(weights, means, covariances, cfg)


def run_em(
    e_step_fn: Callable[[GmmParams], Responsibilities],
    m_step_fn: Callable[[Responsibilities, GmmParams], GmmParams],
    init: GmmParams,
    tol: float,
    max_iter: int,
    callback: IterationCallback | None = None,
) -> CentralizedFit:
    """Alternate E- and M-steps until the relative log-likelihood change is below ``tol``.

    The log-likelihood of θ^k is read off the E-step at iteration k+1, so the trace
    holds ℓ(θ⁰), ℓ(θ¹), ... and the returned parameters are the last ones evaluated.
    A non-finite ``tol`` accepts ``init`` without running any step.
    """
    if not math.isfinite(tol):
        return CentralizedFit(init, 0, [], True)

    params = init
    trace: list[float] = []
    n_iter = 0
    for k in range(1, max_iter + 2):
        try:
            resp = e_step_fn(params)
        except VpgmmError as exc:
            exc.args = (f"EM iteration {k}: {exc}",)
            raise
        loglik = resp.log_likelihood
        trace.append(loglik)
        logger.info("EM iteration %d: log-likelihood %.10g", n_iter, loglik)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol * abs(trace[-2]):
            return CentralizedFit(params, n_iter, trace, True)
        if n_iter == max_iter:
            break
        try:
            params = m_step_fn(resp, params)
        except VpgmmError as exc:
            exc.args = (f"EM iteration {k}: {exc}",)
            raise
        n_iter = k
        if callback is not None:
            callback(k, params)

    warnings.warn(
        f"EM stopped after max_iter={max_iter} iterations without meeting tol={tol:g}",
        ConvergenceWarning,
        stacklevel=3,
    )
    return CentralizedFit(params, n_iter, trace, False)


def fit_centralized(
    data: np.ndarray,
    num_components: int,
    init: GmmParams,
    tol: float | None = None,
    max_iter: int | None = None,
    callback: IterationCallback | None = None,
    config: PipelineConfig | None = None,
) -> CentralizedFit:
    """Fit the GMM on assembled data with plain EM.

    Args:
        data: Assembled observations, shape (I, D)
        num_components: Number of components J
        init: Initial parameters valid for (D, J)
        tol: Relative log-likelihood tolerance (config default if None)
        max_iter: Iteration cap (config default if None)
        callback: Called as ``callback(k, θ^k)`` after every M-step
        config: Optional configuration override

    Returns:
        ``CentralizedFit(params, n_iter, loglik_trace, converged)``
    """
    cfg = resolve_config(config)
    data = np.asarray(data, dtype=float)
    if init.num_components != num_components or init.dim != data.shape[1]:
        raise ContractViolationError(
            f"init has J={init.num_components}, D={init.dim}; "
            f"expected J={num_components}, D={data.shape[1]}"
        )
    return run_em(
        lambda params: e_step(data, params),
        lambda resp, params: m_step(data, resp, params, cfg),
        init,
        cfg.tol if tol is None else tol,
        cfg.max_iter if max_iter is None else max_iter,
        callback,
    )
