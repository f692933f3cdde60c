"""Global configuration for EM, secure protocols and forecasting."""

import warnings
from dataclasses import dataclass

from vpgmm.errors import ContractViolationError, PrivacyWarning

MEAN_MODES = ("exact", "paper-literal", "paper-verbatim")
ARITHMETIC_MODES = ("real", "fixed")
MASK_SCOPES = ("invocation", "batch")


@dataclass(frozen=True)
class PipelineConfig:
    """Configuration shared by the centralized and distributed pipelines.

    Attributes:
        use_updated_mean: Centre the M-step covariance on μ^{k+1} instead of μ^k
        tol: Relative log-likelihood change at which EM stops
        max_iter: Maximum number of EM iterations
        jitter_eps: Initial diagonal jitter factor (relative to mean diagonal)
        jitter_growth: Factor by which the jitter escalates after a failed Cholesky
        jitter_cap: Largest jitter factor tried before giving up
        empty_threshold: Total responsibility below which a component counts as empty
        ssp_arithmetic: Arithmetic of the EM-side scalar products ("real" or "fixed")
        ss_arithmetic: Arithmetic of secure sums run without an explicit mode
            ("real" or "fixed"); real mode loses precision once N passes 1e6
        forecast_arithmetic: Secure-sum arithmetic for the forecast ("real" or "fixed")
        fixed_point_bits: Fractional bits of the fixed-point codec
        ssp_ring_bits: Ring size (bits) of the fixed-point scalar product
        ss_scale_guard: Factor applied to capacity sums to obtain the SS modulus N
        ssp_mask_scope: Draw the SSP matrix U per invocation or once per batch
        debug_oracle: Cross-check secure sums against a plaintext oracle
        mean_mode: Conditional-mean evaluation ("exact", "paper-literal", "paper-verbatim")
        quantile_levels: Probability levels reported by the forecast
        quantile_tol: Bisection tolerance in probability for mixture quantiles
    """

    use_updated_mean: bool = False
    tol: float = 1e-8
    max_iter: int = 500
    jitter_eps: float = 1e-9
    jitter_growth: float = 10.0
    jitter_cap: float = 1e-3
    empty_threshold: float = 1e-12

    ssp_arithmetic: str = "real"
    ss_arithmetic: str = "fixed"
    forecast_arithmetic: str = "fixed"
    fixed_point_bits: int = 40
    ssp_ring_bits: int = 128
    ss_scale_guard: float = 1e6
    ssp_mask_scope: str = "invocation"
    debug_oracle: bool = False

    mean_mode: str = "exact"
    quantile_levels: tuple[float, ...] = (0.05, 0.25, 0.5, 0.75, 0.95)
    quantile_tol: float = 1e-8

    def validate(self) -> "PipelineConfig":
        """Check every field against its admissible range.

        Returns:
            The configuration itself, so calls can be chained

        Raises:
            ContractViolationError: If any field is out of range
        """
        if self.tol < 0:
            raise ContractViolationError(f"tol must be non-negative, got {self.tol}")
        if self.max_iter < 0:
            raise ContractViolationError(f"max_iter must be >= 0, got {self.max_iter}")
        if not 0 < self.jitter_eps <= self.jitter_cap:
            raise ContractViolationError(
                f"Need 0 < jitter_eps <= jitter_cap, got {self.jitter_eps} and {self.jitter_cap}"
            )
        if self.jitter_growth <= 1:
            raise ContractViolationError(f"jitter_growth must exceed 1, got {self.jitter_growth}")
        if self.empty_threshold < 0:
            raise ContractViolationError("empty_threshold must be non-negative")
        for name in ("ssp_arithmetic", "ss_arithmetic", "forecast_arithmetic"):
            if getattr(self, name) not in ARITHMETIC_MODES:
                raise ContractViolationError(
                    f"{name} must be one of {ARITHMETIC_MODES}, got {getattr(self, name)!r}"
                )
        if not 8 <= self.fixed_point_bits <= 52:
            raise ContractViolationError(
                f"fixed_point_bits must lie in [8, 52], got {self.fixed_point_bits}"
            )
        if self.ssp_ring_bits < 2 * self.fixed_point_bits + 16:
            raise ContractViolationError(
                f"ssp_ring_bits={self.ssp_ring_bits} is too small for "
                f"{self.fixed_point_bits} fractional bits"
            )
        if self.ss_scale_guard < 2:
            raise ContractViolationError("ss_scale_guard must be at least 2")
        if self.ssp_mask_scope not in MASK_SCOPES:
            raise ContractViolationError(
                f"ssp_mask_scope must be one of {MASK_SCOPES}, got {self.ssp_mask_scope!r}"
            )
        if self.mean_mode not in MEAN_MODES:
            raise ContractViolationError(
                f"mean_mode must be one of {MEAN_MODES}, got {self.mean_mode!r}"
            )
        if any(not 0 < q < 1 for q in self.quantile_levels):
            raise ContractViolationError(
                f"quantile levels must lie in (0, 1), got {self.quantile_levels}"
            )
        if self.quantile_tol <= 0:
            raise ContractViolationError("quantile_tol must be positive")
        return self

    def warn_mask_scope(self) -> None:
        """Warn when one SSP mask matrix is reused across a whole batch."""
        if self.ssp_mask_scope == "batch":
            warnings.warn(
                "ssp_mask_scope='batch' reuses one mask matrix U for every scalar product "
                "in a batch; masked vectors of the same initiator become linearly related.",
                PrivacyWarning,
                stacklevel=3,
            )


# Global configuration instance
_config = PipelineConfig()


def get_config() -> PipelineConfig:
    """Get the global pipeline configuration.

    Returns:
        Current pipeline configuration
    """
    return _config


def set_config(config: PipelineConfig) -> None:
    """Set the global pipeline configuration.

    Args:
        config: New pipeline configuration

    Raises:
        ContractViolationError: If the configuration does not validate
    """
    global _config
    _config = config.validate()


def resolve_config(config: PipelineConfig | None) -> PipelineConfig:
    """Return ``config`` if given, else the global configuration."""
    return _config if config is None else config
