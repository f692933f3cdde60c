"""Conditional (predictive) distribution of one farm-period given all farms at period v0."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from vpgmm.domain.models import ConditionalGmm, GmmParams
from vpgmm.errors import ConditioningError, ContractViolationError, NumericalDegeneracyError
from vpgmm.gmm.density import LOG_2PI, log_weights


@dataclass(frozen=True, eq=False)
class ConditioningBlock:
    """Slices of θ at the flat columns {(n, v0)} and the target (m, t).

    Everything here is a public function of θ, so any party can build it.

    Attributes:
        farm: Target farm m
        period: Target period t
        v0: Conditioning period
        columns: Flat columns of (n, v0), n = 1..M
        target: Flat column of (m, t)
        mean_v0: μ_{j,v0}, shape (J, M)
        cov_v0: Σ_{j,v0}, shape (J, M, M)
        precision_v0: (Σ_{j,v0})^{-1}, shape (J, M, M)
        log_det_v0: log|Σ_{j,v0}|, shape (J,)
        cross: Σ^{m,t}_{j,v0}, shape (J, M)
        target_mean: μ_{j,m,t}, shape (J,)
        target_var: σ_{j,(m,t),(m,t)}, shape (J,)
        coefficients: a_j = Σ^{m,t}_{j,v0}(Σ_{j,v0})^{-1}, shape (J, M)
        variances: Conditional variances σ^c_j, shape (J,)
    """

    farm: int
    period: int
    v0: int
    columns: np.ndarray
    target: int
    mean_v0: np.ndarray
    cov_v0: np.ndarray
    precision_v0: np.ndarray
    log_det_v0: np.ndarray
    cross: np.ndarray
    target_mean: np.ndarray
    target_var: np.ndarray
    coefficients: np.ndarray
    variances: np.ndarray

    @property
    def num_farms(self) -> int:
        return int(self.columns.shape[0])


def conditioning_block(
    params: GmmParams, num_farms: int, v0: int, farm: int, period: int
) -> ConditioningBlock:
    """Slice θ for conditioning farm ``farm`` at ``period`` on all farms at ``v0``.

    Raises:
        ContractViolationError: If indices are out of range or ``period == v0``
        ConditioningError: If some Σ_{j,v0} is singular or a conditional variance is not positive
    """
    if num_farms < 1 or params.dim % num_farms:
        raise ContractViolationError(
            f"dimension D={params.dim} is not a multiple of M={num_farms}"
        )
    T = params.dim // num_farms
    if not 1 <= v0 <= T or not 1 <= period <= T:
        raise ContractViolationError(f"periods must lie in [1, {T}], got v0={v0}, t={period}")
    if not 1 <= farm <= num_farms:
        raise ContractViolationError(f"farm must lie in [1, {num_farms}], got {farm}")
    if period == v0:
        raise ContractViolationError(
            f"target period t={period} equals the conditioning period v0; the conditional "
            "variance would be zero"
        )

    columns = np.arange(num_farms) * T + (v0 - 1)
    target = (farm - 1) * T + (period - 1)
    J = params.num_components
    mean_v0 = params.means[:, columns]
    cov_v0 = params.covariances[:, columns[:, None], columns[None, :]]
    cross = params.covariances[:, target, columns]
    precision_v0 = np.empty_like(cov_v0)
    log_det_v0 = np.empty(J)
    coefficients = np.empty((J, num_farms))
    eye = np.eye(num_farms)
    for j in range(J):
        try:
            factor = linalg.cho_factor(cov_v0[j], lower=True)
        except linalg.LinAlgError as exc:
            raise ConditioningError(j, str(exc)) from exc
        precision_v0[j] = linalg.cho_solve(factor, eye)
        log_det_v0[j] = 2.0 * np.sum(np.log(np.diag(factor[0])))
        coefficients[j] = linalg.cho_solve(factor, cross[j])
    target_var = params.covariances[:, target, target]
    variances = target_var - np.einsum("jn,jn->j", coefficients, cross)
    bad = np.flatnonzero(variances <= 0)
    if bad.size:
        raise ConditioningError(int(bad[0]), f"conditional variance {variances[bad[0]]:.3e}")
    return ConditioningBlock(
        farm=farm,
        period=period,
        v0=v0,
        columns=columns,
        target=target,
        mean_v0=mean_v0,
        cov_v0=cov_v0,
        precision_v0=precision_v0,
        log_det_v0=log_det_v0,
        cross=cross,
        target_mean=params.means[:, target],
        target_var=target_var,
        coefficients=coefficients,
        variances=variances,
    )


def weights_from_quadratic(
    g: np.ndarray, block: ConditioningBlock, params: GmmParams
) -> np.ndarray:
    """Conditional weights w^c_j ∝ w_j N(y_{v0}; μ_{j,v0}, Σ_{j,v0}) from the quadratic forms g_j.

    Raises:
        NumericalDegeneracyError: If every component factor underflows
    """
    log_gauss = -0.5 * (g + block.num_farms * LOG_2PI + block.log_det_v0)
    weighted = log_gauss + log_weights(params)
    total = logsumexp(weighted)
    if not np.isfinite(total):
        raise NumericalDegeneracyError("All conditional weight factors underflow")
    weights = np.exp(weighted - total)
    return weights / weights.sum()


def conditional_params(
    params: GmmParams, y_v0: np.ndarray, v0: int, farm: int, period: int
) -> ConditionalGmm:
    """Plaintext conditional mixture of y_{m,t} given y_{v0}, via dense solves.

    Args:
        params: Fitted parameters
        y_v0: Outputs of all farms at ``v0``, shape (M,)
        v0: Conditioning period (1-based)
        farm: Target farm m (1-based)
        period: Target period t (1-based), different from ``v0``

    Returns:
        Conditional mixture {w^c, μ^c, σ^c}

    Raises:
        ConditioningError: If Σ_{j,v0} is singular for some component
    """
    y_v0 = np.asarray(y_v0, dtype=float)
    if y_v0.ndim != 1:
        raise ContractViolationError(f"y_v0 must be a vector, got shape {y_v0.shape}")
    block = conditioning_block(params, y_v0.shape[0], v0, farm, period)
    diff = y_v0 - block.mean_v0
    g = np.einsum("jn,jnk,jk->j", diff, block.precision_v0, diff)
    weights = weights_from_quadratic(g, block, params)
    means = block.target_mean + np.einsum("jn,jn->j", block.coefficients, diff)
    return ConditionalGmm(farm, period, weights, means, block.variances)
