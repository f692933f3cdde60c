"""Private conditional (predictive) distribution of one farm's next output.

Every aggregate that multiplies raw current outputs goes through a secure sum;
everything else is a public function of the shared θ. The conditional weights
reuse the E-step split restricted to period v0:

    C^c_{j,n} = Σ_l y_l Φ^{v0}_{j,l,n}          (secure sum, shared)
    D^c_{j,n} = C^c_{j,n} − Σ_l μ_{j,l} Φ^{v0}_{j,l,n}
    S^c_j     = Σ_n y_n D^c_{j,n}               (secure sum, shared)
    g_j       = S^c_j − Σ_n μ_{j,n} D^c_{j,n}

The conditional mean is summed over a ring led by the target farm, which adds its
own term locally and alone learns the result.

The shared C^c_j equals y_{v0} Φ^{v0}_j, and Φ^{v0}_j = Σ_{j,v0}^{-1} is a public,
invertible function of θ. Any party holding C^c therefore recovers the whole
vector y_{v0} as C^c_j Σ_{j,v0}; the secure sums hide the individual addends
during the ring pass but not the current outputs themselves.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from vpgmm.domain.config import PipelineConfig, resolve_config
from vpgmm.domain.models import ConditionalGmm, GmmParams
from vpgmm.errors import ContractViolationError
from vpgmm.gmm.conditional import ConditioningBlock, conditioning_block, weights_from_quadratic
from vpgmm.simnet.party import PartyRuntime
from vpgmm.smc.secure_sum import run_secure_sum
from vpgmm.smc.wire import Transport

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ForecastContext:
    """Public setting of a forecast session.

    Attributes:
        v0: Current period (1-based)
        period: Target period t (1-based), typically v0 + 1
        params: Fitted θ shared by every party
        num_farms: Number of farms M
    """

    v0: int
    period: int
    params: GmmParams
    num_farms: int

    @classmethod
    def for_parties(cls, parties: Sequence[PartyRuntime], v0: int, period: int) -> "ForecastContext":
        """Context built from the θ the parties hold in ``shared["params"]``."""
        if not parties:
            raise ContractViolationError("no parties given")
        return cls(v0, period, parties[0].shared["params"], parties[0].dims.num_farms)

    def block(self, farm: int) -> ConditioningBlock:
        return conditioning_block(self.params, self.num_farms, self.v0, farm, self.period)


@dataclass(eq=False)
class ConditionalScratch:
    """Shared intermediate quantities of the conditional-weight computation.

    Attributes:
        block: θ sliced at period v0 and the target
        c: C^c, shape (J, M)
        d: D^c, shape (J, M)
        s: S^c, shape (J,)
        g: Quadratic forms, shape (J,)
        weights: Conditional weights w^c, shape (J,)
    """

    block: ConditioningBlock
    c: np.ndarray | None = None
    d: np.ndarray | None = None
    s: np.ndarray | None = None
    g: np.ndarray | None = None
    weights: np.ndarray | None = None


def load_current_outputs(
    parties: Sequence[PartyRuntime], values: Mapping[int, float] | Sequence[float]
) -> None:
    """Give each farm its own current output y_{m,v0} (and nothing else).

    ``values`` maps farm id to output, or lists outputs in farm order.
    """
    if not isinstance(values, Mapping):
        values = list(values)
        if len(values) != len(parties):
            raise ContractViolationError(f"{len(values)} current outputs for {len(parties)} farms")
        values = {party.party_id: v for party, v in zip(sorted(parties, key=lambda p: p.party_id), values)}
    for party in parties:
        if party.party_id not in values:
            raise ContractViolationError(f"no current output for farm {party.party_id}")
        value = float(values[party.party_id])
        if not np.isfinite(value):
            raise ContractViolationError(f"current output of farm {party.party_id} is not finite")
        party.private["y_v0"] = value


def outputs_from_row(parties: Sequence[PartyRuntime], row: int, v0: int) -> None:
    """Each farm takes y_{m,v0} from row ``row`` (0-based) of its own slice."""
    for party in parties:
        if not 0 <= row < party.data.shape[0]:
            raise ContractViolationError(f"row must lie in [0, {party.data.shape[0]}), got {row}")
        party.private["y_v0"] = float(party.data[row, v0 - 1])


def _current_output(party: PartyRuntime) -> float:
    if "y_v0" not in party.private:
        raise ContractViolationError(f"farm {party.party_id} has no current output loaded")
    return party.private["y_v0"]


def _ordered(parties: Sequence[PartyRuntime], ctx: ForecastContext) -> list[PartyRuntime]:
    parties = sorted(parties, key=lambda p: p.party_id)
    if len(parties) != ctx.num_farms:
        raise ContractViolationError(f"context is for M={ctx.num_farms}, got {len(parties)} parties")
    if ctx.num_farms < 2:
        raise ContractViolationError("a private forecast needs at least two farms")
    return parties


def _modulus(capacities: np.ndarray, coefficients: np.ndarray, config: PipelineConfig) -> float:
    """N = guard · Σ capacities · max|coefficient|, from public values only."""
    base = config.ss_scale_guard * float(np.sum(capacities))
    bound = float(np.max(np.abs(coefficients), initial=0.0))
    return base * bound if bound > 0 else base


def private_conditional_weights(
    bus: Transport,
    parties: Sequence[PartyRuntime],
    ctx: ForecastContext,
    farm: int,
    seed: int = 0,
    config: PipelineConfig | None = None,
) -> np.ndarray:
    """Conditional weights w^c shared by every party.

    Two secure sums over the ring of all farms in order (C^c with J·M values,
    S^c with J values); the rest is computed from θ. Each party keeps its
    ConditionalScratch in ``shared["forecast_scratch"]``.

    Raises:
        SecureSumOverflowError: In debug-oracle mode, if a sum leaves [−N/2, N/2)
        NumericalDegeneracyError: If every component factor underflows
    """
    cfg = resolve_config(config)
    parties = _ordered(parties, ctx)
    ring = [p.party_id for p in parties]
    J, M = ctx.params.num_components, ctx.num_farms
    tag = f"fc/{farm}-{ctx.period}"
    scratch = {p.party_id: ConditionalScratch(ctx.block(farm)) for p in parties}
    capacities = parties[0].capacities

    precision = scratch[ring[0]].block.precision_v0
    c_addends = {
        p.party_id: _current_output(p) * scratch[p.party_id].block.precision_v0[:, p.party_id - 1, :].reshape(-1)
        for p in parties
    }
    c_session = run_secure_sum(
        bus, ring, c_addends, _modulus(capacities, precision, cfg), seed, f"{tag}/Cc",
        cfg.forecast_arithmetic, config=cfg,
    )
    for p in parties:
        block = scratch[p.party_id].block
        scratch[p.party_id].c = c_session.result.reshape(J, M)
        scratch[p.party_id].d = scratch[p.party_id].c - np.einsum(
            "jl,jln->jn", block.mean_v0, block.precision_v0
        )

    d = scratch[ring[0]].d
    s_addends = {p.party_id: _current_output(p) * scratch[p.party_id].d[:, p.party_id - 1] for p in parties}
    s_session = run_secure_sum(
        bus, ring, s_addends, _modulus(capacities, d, cfg), seed, f"{tag}/Sc",
        cfg.forecast_arithmetic, config=cfg,
    )
    for p in parties:
        local = scratch[p.party_id]
        local.s = s_session.result.copy()
        local.g = local.s - np.einsum("jn,jn->j", local.block.mean_v0, local.d)
        local.weights = weights_from_quadratic(local.g, local.block, ctx.params)
        p.shared["forecast_scratch"] = local
    logger.debug("Conditional weights for farm %d at t=%d: %s", farm, ctx.period, scratch[ring[0]].weights)
    return scratch[ring[0]].weights


def _mean_coefficients(block: ConditioningBlock, mode: str) -> np.ndarray:
    if mode == "exact":
        return block.coefficients
    # diagonal inverses of Σ_{j,v0}
    return block.cross / np.diagonal(block.cov_v0, axis1=1, axis2=2)


def private_conditional_mean(
    bus: Transport,
    parties: Sequence[PartyRuntime],
    ctx: ForecastContext,
    farm: int,
    seed: int = 0,
    mode: str | None = None,
    config: PipelineConfig | None = None,
) -> np.ndarray:
    """Conditional means μ^c of ``farm`` at ``ctx.period``, delivered only to ``farm``.

    The other farms sum their terms Σ_{n≠m} a_{j,n} y_n over a ring led by ``farm``,
    which adds a zero addend, supplies the blind and alone unblinds.

    Modes:
        ``exact``: a_j = Σ^{m,t}_{j,v0}(Σ_{j,v0})^{-1};
            μ^c = μ_{j,m,t} − a_j·μ_{j,v0} + a_{j,m} y_m + Σ_{n≠m} a_{j,n} y_n
        ``paper-literal``: c_{j,n} = σ_{j,(m,t),(n,v0)} / σ_{j,(n,v0),(n,v0)};
            μ^c = μ_{j,m,t} + c_{j,m} y_m − Σ_n c_{j,n} μ_{j,n,v0} + Σ_{n≠m} c_{j,n} y_n
        ``paper-verbatim``: as ``paper-literal`` with the third term μ_{j,m,t} Σ_n c_{j,n}

    Returns:
        μ^c, shape (J,), also stored in ``private["conditional_mean"]`` of ``farm`` only

    Raises:
        ContractViolationError: On fewer than two farms or an unknown mode
    """
    cfg = resolve_config(config)
    mode = cfg.mean_mode if mode is None else mode
    if mode not in ("exact", "paper-literal", "paper-verbatim"):
        raise ContractViolationError(f"unknown mean mode {mode!r}")
    parties = _ordered(parties, ctx)
    by_id = {p.party_id: p for p in parties}
    if farm not in by_id:
        raise ContractViolationError(f"no farm {farm} among the parties")
    ring = [farm] + [p.party_id for p in parties if p.party_id != farm]
    J = ctx.params.num_components

    coefficients = {p.party_id: _mean_coefficients(ctx.block(farm), mode) for p in parties}
    addends = {farm: np.zeros(J)}
    for n in ring[1:]:
        addends[n] = coefficients[n][:, n - 1] * _current_output(by_id[n])
    session = run_secure_sum(
        bus, ring, addends, _modulus(parties[0].capacities, coefficients[farm], cfg), seed,
        f"fc/{farm}-{ctx.period}/mu", cfg.forecast_arithmetic, broadcast_result=False, config=cfg,
    )

    # from here on only the target farm computes
    target = by_id[farm]
    block = ctx.block(farm)
    a = coefficients[farm]
    own = a[:, farm - 1] * _current_output(target)
    if mode == "paper-verbatim":
        offset = block.target_mean * a.sum(axis=1)
    else:
        offset = np.einsum("jn,jn->j", a, block.mean_v0)
    means = block.target_mean + own - offset + session.result
    target.private["conditional_mean"] = means
    return means


def private_conditional_variance(ctx: ForecastContext, farm: int) -> np.ndarray:
    """σ^c_j = σ_{j,(m,t),(m,t)} − Σ^{m,t}_{j,v0}(Σ_{j,v0})^{-1}Σ^{m,t}′_{j,v0}; local to ``farm``.

    Raises:
        ConditioningError: If some Σ_{j,v0} is singular or a variance is not positive
    """
    return ctx.block(farm).variances


def forecast(
    bus: Transport,
    parties: Sequence[PartyRuntime],
    ctx: ForecastContext,
    farm: int,
    seed: int = 0,
    mode: str | None = None,
    config: PipelineConfig | None = None,
) -> ConditionalGmm:
    """Predictive mixture of ``farm`` at ``ctx.period`` given every farm's output at ``ctx.v0``.

    Args:
        bus: Message transport
        parties: One runtime per farm, each with ``private["y_v0"]`` loaded
        ctx: Forecast context
        farm: Target farm m
        seed: Session seed for the secure-sum blinds
        mode: Conditional-mean mode (config default if None)
        config: Optional configuration override

    Returns:
        The conditional mixture, also stored in ``private["forecast"]`` of ``farm`` only
    """
    weights = private_conditional_weights(bus, parties, ctx, farm, seed, config)
    means = private_conditional_mean(bus, parties, ctx, farm, seed, mode, config)
    variances = private_conditional_variance(ctx, farm)
    result = ConditionalGmm(farm, ctx.period, weights, means, variances)
    target = next(p for p in parties if p.party_id == farm)
    target.private["forecast"] = result
    return result
