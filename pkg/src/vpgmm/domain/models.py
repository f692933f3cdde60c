"""Domain models for mixture parameters and their index layout."""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, stats

from vpgmm.errors import ContractViolationError, SingularCovarianceError


@dataclass(frozen=True)
class Dims:
    """Problem dimensions shared by every party.

    Attributes:
        num_farms: Number of wind farms M
        num_periods: Number of periods per observation T
        num_obs: Number of observations I
        num_components: Number of mixture components J
    """

    num_farms: int
    num_periods: int
    num_obs: int
    num_components: int

    def __post_init__(self) -> None:
        for name in ("num_farms", "num_periods", "num_obs", "num_components"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ContractViolationError(f"{name} must be a positive integer, got {value}")
        if self.num_obs < 2:
            raise ContractViolationError(
                f"num_obs must be at least 2 to estimate a covariance, got {self.num_obs}"
            )

    @property
    def dim(self) -> int:
        """Joint dimension D = M·T."""
        return self.num_farms * self.num_periods

    def flat(self, farm: int, period: int) -> int:
        """Flat column of (farm, period), both 1-based."""
        return FlatIndex.of(self, farm, period).flat

    def block(self, farm: int) -> slice:
        """Columns owned by ``farm`` in the farm-major layout."""
        if not 1 <= farm <= self.num_farms:
            raise ContractViolationError(f"farm must lie in [1, {self.num_farms}], got {farm}")
        start = (farm - 1) * self.num_periods
        return slice(start, start + self.num_periods)

    def period_columns(self, period: int) -> np.ndarray:
        """Flat columns {(n, period)} for n = 1..M, in farm order."""
        if not 1 <= period <= self.num_periods:
            raise ContractViolationError(
                f"period must lie in [1, {self.num_periods}], got {period}"
            )
        return np.arange(self.num_farms) * self.num_periods + (period - 1)


@dataclass(frozen=True)
class FlatIndex:
    """A (farm, period) pair together with its flat column."""

    farm: int
    period: int
    flat: int

    @classmethod
    def of(cls, dims: Dims, farm: int, period: int) -> "FlatIndex":
        if not 1 <= farm <= dims.num_farms:
            raise ContractViolationError(f"farm must lie in [1, {dims.num_farms}], got {farm}")
        if not 1 <= period <= dims.num_periods:
            raise ContractViolationError(
                f"period must lie in [1, {dims.num_periods}], got {period}"
            )
        return cls(farm, period, (farm - 1) * dims.num_periods + (period - 1))

    @classmethod
    def from_flat(cls, dims: Dims, flat: int) -> "FlatIndex":
        if not 0 <= flat < dims.dim:
            raise ContractViolationError(f"flat index must lie in [0, {dims.dim}), got {flat}")
        farm, period = divmod(flat, dims.num_periods)
        return cls(farm + 1, period + 1, flat)


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GmmParams:
    """Mixture parameters θ = {w_j, μ_j, Σ_j} with cached precisions and log-determinants.

    Build instances with :meth:`from_moments`; it computes Φ_j and log|Σ_j| from a
    Cholesky factor of each Σ_j.

    Attributes:
        weights: Component weights, shape (J,)
        means: Component means, shape (J, D)
        covariances: Component covariances, shape (J, D, D)
        precisions: Inverses of the covariances, shape (J, D, D)
        log_dets: log|Σ_j|, shape (J,)
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    precisions: np.ndarray = field(repr=False)
    log_dets: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("weights", "means", "covariances", "precisions", "log_dets"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        J = self.weights.shape[0]
        if self.weights.ndim != 1 or J < 1:
            raise ContractViolationError(f"weights must be a non-empty vector, got {self.weights.shape}")
        if self.means.ndim != 2 or self.means.shape[0] != J:
            raise ContractViolationError(f"means must have shape (J, D), got {self.means.shape}")
        D = self.means.shape[1]
        for name in ("covariances", "precisions"):
            if getattr(self, name).shape != (J, D, D):
                raise ContractViolationError(
                    f"{name} must have shape {(J, D, D)}, got {getattr(self, name).shape}"
                )
        if self.log_dets.shape != (J,):
            raise ContractViolationError(f"log_dets must have shape ({J},), got {self.log_dets.shape}")

    @classmethod
    def from_moments(
        cls, weights: np.ndarray, means: np.ndarray, covariances: np.ndarray
    ) -> "GmmParams":
        """Build parameters from moments, computing Φ_j and log|Σ_j|.

        Args:
            weights: Component weights, shape (J,)
            means: Component means, shape (J, D)
            covariances: Symmetric positive-definite covariances, shape (J, D, D)

        Returns:
            Parameters with cached precisions and log-determinants

        Raises:
            SingularCovarianceError: If some Σ_j is not positive definite
        """
        covariances = np.asarray(covariances, dtype=float)
        J, D = covariances.shape[0], covariances.shape[-1]
        precisions = np.empty_like(covariances)
        log_dets = np.empty(J)
        eye = np.eye(D)
        for j in range(J):
            try:
                factor = linalg.cho_factor(covariances[j], lower=True)
            except linalg.LinAlgError as exc:
                raise SingularCovarianceError(j, str(exc)) from exc
            precisions[j] = linalg.cho_solve(factor, eye)
            precisions[j] = 0.5 * (precisions[j] + precisions[j].T)
            log_dets[j] = 2.0 * np.sum(np.log(np.diag(factor[0])))
        return cls(weights, means, covariances, precisions, log_dets)

    @property
    def num_components(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def validate(self, atol: float = 1e-12) -> None:
        """Check weight normalization, covariance symmetry and the precision identity.

        Raises:
            ContractViolationError: If an invariant does not hold
        """
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > atol:
            raise ContractViolationError(
                f"weights must be non-negative and sum to 1, got sum {self.weights.sum():.17g}"
            )
        asym = np.abs(self.covariances - np.swapaxes(self.covariances, 1, 2)).max()
        if asym > 1e-10:
            raise ContractViolationError(f"covariances are not symmetric (max asymmetry {asym:.3e})")
        identity = np.einsum("jab,jbc->jac", self.precisions, self.covariances)
        err = np.abs(identity - np.eye(self.dim)).max()
        if err > 1e-8:
            raise ContractViolationError(f"precisions do not invert covariances (max error {err:.3e})")

    def check_dims(self, dims: Dims) -> None:
        """Raise if these parameters do not match ``dims``."""
        if self.dim != dims.dim or self.num_components != dims.num_components:
            raise ContractViolationError(
                f"parameters have D={self.dim}, J={self.num_components}; "
                f"expected D={dims.dim}, J={dims.num_components}"
            )

    def same_as(self, other: "GmmParams") -> bool:
        """Bit-for-bit equality of every array."""
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("weights", "means", "covariances", "precisions", "log_dets")
        )


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """E-step posteriors Q together with per-row mixture log-densities.

    Attributes:
        q: Posterior matrix, shape (I, J); rows sum to 1
        row_log_density: log f(y^i) under the parameters that produced ``q``, shape (I,)
    """

    q: np.ndarray
    row_log_density: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _frozen(self.q))
        object.__setattr__(self, "row_log_density", _frozen(self.row_log_density))
        if self.q.ndim != 2 or self.row_log_density.shape != (self.q.shape[0],):
            raise ContractViolationError(
                f"inconsistent shapes q={self.q.shape}, row_log_density={self.row_log_density.shape}"
            )

    @property
    def log_likelihood(self) -> float:
        return float(self.row_log_density.sum())

    @property
    def totals(self) -> np.ndarray:
        """Total responsibility W_j per component."""
        return self.q.sum(axis=0)


@dataclass(frozen=True, eq=False)
class ConditionalGmm:
    """Scalar mixture of one farm's output at one period given current outputs.

    Attributes:
        farm: Target farm m (1-based)
        period: Target period t (1-based)
        weights: Conditional weights w^c, shape (J,)
        means: Conditional means μ^c, shape (J,)
        variances: Conditional variances σ^c, shape (J,)
    """

    farm: int
    period: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        for name in ("weights", "means", "variances"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        J = self.weights.shape[0]
        if self.means.shape != (J,) or self.variances.shape != (J,):
            raise ContractViolationError("weights, means and variances must share shape (J,)")
        if np.any(self.variances <= 0):
            raise ContractViolationError(f"conditional variances must be positive, got {self.variances}")

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def pdf(self, y: float | np.ndarray) -> np.ndarray:
        """Mixture density at ``y``."""
        y = np.asarray(y, dtype=float)
        comps = stats.norm.pdf(y[..., None], loc=self.means, scale=self.std)
        return comps @ self.weights

    def cdf(self, y: float | np.ndarray) -> np.ndarray:
        """Mixture distribution function at ``y``."""
        y = np.asarray(y, dtype=float)
        comps = stats.norm.cdf(y[..., None], loc=self.means, scale=self.std)
        return comps @ self.weights

    def quantile(self, level: float, tol: float = 1e-8) -> float:
        """Mixture quantile by bisection.

        Args:
            level: Probability level in (0, 1)
            tol: Tolerance on the probability at the returned point

        Returns:
            y with |F(y) − level| within ``tol``
        """
        if not 0 < level < 1:
            raise ContractViolationError(f"quantile level must lie in (0, 1), got {level}")
        lo = float(np.min(self.means - 40.0 * self.std))
        hi = float(np.max(self.means + 40.0 * self.std))
        # density never exceeds 1/(sqrt(2π)·σ_min), so this x-tolerance bounds the probability error
        xtol = tol * math.sqrt(2.0 * math.pi) * float(self.std.min())
        return float(
            optimize.bisect(lambda y: float(self.cdf(y)) - level, lo, hi, xtol=xtol, maxiter=500)
        )

    def quantiles(self, levels: Sequence[float], tol: float = 1e-8) -> np.ndarray:
        """Quantiles at each of ``levels``; non-decreasing for sorted levels."""
        return np.array([self.quantile(level, tol) for level in levels])
