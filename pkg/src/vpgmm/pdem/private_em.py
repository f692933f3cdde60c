"""Privacy-preserving distributed EM over vertically partitioned slices.

E-step: the quadratic form g_j(y^i) = (y^i − μ_j)Φ_j(y^i − μ_j)′ is split into
per-farm aggregates. Farm m broadcasts C_m[i, j] = y_m^i Φ_j[block m, :]; every
party forms D[i, j] = Σ_m C_m[i, j] − μ_jΦ_j, farm n broadcasts
S_n[i, j] = y_n^i · D[i, j, block n], and g = Σ_n S_n − μ_j · D.

M-step: weights follow from the shared Q. Each farm computes its own means and
within-farm covariance block and broadcasts them; every cross-farm entry comes
from a secure scalar product between the two owning farms.
"""

import itertools
import logging
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from vpgmm.domain.config import PipelineConfig, resolve_config
from vpgmm.domain.models import Dims, FlatIndex, GmmParams, Responsibilities
from vpgmm.errors import ContractViolationError, PrivacyWarning, ProtocolDesyncError
from vpgmm.gmm.density import log_gaussian_from_quadratic
from vpgmm.gmm.em import (
    IterationCallback,
    e_step,
    empty_components,
    finalize_params,
    initialize_params,
    m_step,
    posterior_from_log_densities,
    reseed_components,
    reseed_rows,
    run_em,
)
from vpgmm.simnet.bus import Bus, Outgoing, RoundProgram
from vpgmm.simnet.party import PartyRuntime
from vpgmm.smc.ssp import ssp_batch
from vpgmm.smc.traffic import TrafficMeter
from vpgmm.smc.wire import Message

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class EStepScratch:
    """One party's intermediate E-step quantities.

    Attributes:
        local_c: Own C_m[i, j, :], shape (I, J, D)
        h: μ_jΦ_j, shape (J, D); public
        d: Σ_m C_m − h, shape (I, J, D)
        s: Own S_n[i, j], shape (I, J)
        g: Quadratic forms, shape (I, J)
    """

    local_c: np.ndarray
    h: np.ndarray
    d: np.ndarray | None = None
    s: np.ndarray | None = None
    g: np.ndarray | None = None


@dataclass(frozen=True)
class SspJob:
    """One cross-farm scalar product Σ_i Q_ij y_{m,t}^i y_{n,v}^i.

    ``source`` belongs to the initiating farm m, ``target`` to the responding farm n.
    """

    component: int
    source: FlatIndex
    target: FlatIndex

    def __post_init__(self) -> None:
        if self.source.farm == self.target.farm:
            raise ContractViolationError(
                f"within-farm entry {self.source} x {self.target} needs no scalar product"
            )

    def initiator_vector(self, q: np.ndarray, data: np.ndarray) -> np.ndarray:
        """X = Q_j ∘ y_{m,t} from the initiator's slice."""
        return q[:, self.component] * data[:, self.source.period - 1]

    def responder_vector(self, data: np.ndarray) -> np.ndarray:
        """y_{n,v} from the responder's slice."""
        return data[:, self.target.period - 1]


def pair_jobs(dims: Dims, initiator: int, responder: int) -> list[SspJob]:
    """Jobs between two farms, ordered by (component, source period, target period)."""
    T = dims.num_periods
    return [
        SspJob(j, FlatIndex.of(dims, initiator, t), FlatIndex.of(dims, responder, v))
        for j in range(dims.num_components)
        for t in range(1, T + 1)
        for v in range(1, T + 1)
    ]


def farm_pairs(farms: Sequence[int]) -> list[tuple[int, int]]:
    """(initiator, responder) pairs: the higher-numbered farm initiates."""
    farms = sorted(farms)
    return [(hi, lo) for hi in farms for lo in farms if lo < hi]


def count_ssp_jobs(dims: Dims) -> int:
    """Scalar products per M-step: J·T²·M(M−1)/2."""
    M = dims.num_farms
    return dims.num_components * dims.num_periods**2 * M * (M - 1) // 2


class IterationSummary(NamedTuple):
    """Per-iteration line ``iter,loglik,up_bytes,down_bytes`` of the reporting farm.

    The byte counts are that farm's alone, not totals across parties.
    """

    iteration: int
    loglik: float
    up_bytes: int
    down_bytes: int


class DistributedFit(NamedTuple):
    """Result of :func:`fit_distributed`."""

    params: GmmParams
    traffic: TrafficMeter
    n_iter: int
    loglik_trace: list[float]
    converged: bool
    summaries: list[IterationSummary]


def _ordered(parties: Iterable[PartyRuntime]) -> list[PartyRuntime]:
    return sorted(parties, key=lambda p: p.party_id)


def _common_dims(parties: Sequence[PartyRuntime]) -> Dims:
    if not parties:
        raise ContractViolationError("no parties given")
    dims = parties[0].dims
    for party in parties:
        if party.dims != dims:
            raise ContractViolationError(f"party {party.party_id} disagrees on dims: {party.dims}")
        if party.data.shape != (dims.num_obs, dims.num_periods):
            raise ContractViolationError(
                f"party {party.party_id} holds a {party.data.shape} slice; "
                f"expected ({dims.num_obs}, {dims.num_periods})"
            )
    farms = [p.party_id for p in parties]
    if farms != list(range(1, dims.num_farms + 1)):
        raise ContractViolationError(f"expected farms 1..{dims.num_farms}, got {farms}")
    return dims


def _by_sender(inbox: Sequence[Message], prefix: str, shape: tuple[int, ...]) -> dict[int, np.ndarray]:
    """Stack each sender's payloads (FIFO order) into an array of ``shape``."""
    out = {}
    for sender, group in itertools.groupby(inbox, key=lambda message: message.sender):
        payloads = []
        for message in group:
            if not message.tag.startswith(prefix):
                raise ProtocolDesyncError(message.tag, f"expected a '{prefix}' message")
            payloads.append(message.payload)
        values = np.concatenate(payloads)
        if values.size != np.prod(shape):
            raise ProtocolDesyncError(prefix, f"farm {sender} sent {values.size} values, expected {np.prod(shape)}")
        out[sender] = values.reshape(shape)
    return out


def _ordered_sum(values: dict[int, np.ndarray], farms: Sequence[int], tag: str) -> np.ndarray:
    """Σ over farms in ascending order, so every party rounds identically."""
    missing = [f for f in farms if f not in values]
    if missing:
        raise ProtocolDesyncError(tag, f"no contribution from farms {missing}")
    total = np.zeros_like(values[farms[0]])
    for farm in farms:
        total = total + values[farm]
    return total


def _check_consensus(parties: Sequence[PartyRuntime], tag: str) -> GmmParams:
    reference = parties[0].shared["params"]
    for party in parties[1:]:
        if not party.shared["params"].same_as(reference):
            raise ProtocolDesyncError(
                tag, f"party {party.party_id} holds parameters that differ from party {parties[0].party_id}"
            )
    return reference


def private_e_step(bus: Bus, parties: Sequence[PartyRuntime], tag: str = "e") -> Responsibilities:
    """Responsibilities for the parameters every party holds in ``shared["params"]``.

    Two broadcast rounds: C (length-D vector per observation and component) and
    S (one value per observation and component). Every party ends with the same
    Responsibilities in ``shared["resp"]``.

    Args:
        bus: Message bus connecting the parties
        parties: One runtime per farm
        tag: Tag prefix of this step's messages

    Returns:
        The shared responsibilities

    Raises:
        ProtocolDesyncError: If parties end up with different responsibilities
        SessionAbortError: If a party drops out during the step
        NumericalDegeneracyError: If all component densities underflow for a row
    """
    parties = _ordered(parties)
    if len(parties) == 1:
        party = parties[0]
        party.shared["resp"] = e_step(party.data, party.shared["params"])
        return party.shared["resp"]

    dims = _common_dims(parties)
    farms = [p.party_id for p in parties]
    I, J, D = dims.num_obs, dims.num_components, dims.dim

    def send_c(party: PartyRuntime) -> list[Outgoing]:
        params = party.shared["params"]
        block = dims.block(party.party_id)
        scratch = EStepScratch(
            local_c=np.einsum("it,jtd->ijd", party.data, params.precisions[:, block, :]),
            h=np.einsum("jd,jde->je", params.means, params.precisions),
        )
        party.private["e_scratch"] = scratch
        return [
            Outgoing(f"{tag}/C/{i}/{j}", scratch.local_c[i, j]) for i in range(I) for j in range(J)
        ]

    def compute_c(party: PartyRuntime, inbox: list[Message]) -> None:
        scratch = party.private["e_scratch"]
        contributions = _by_sender(inbox, f"{tag}/C/", (I, J, D))
        contributions[party.party_id] = scratch.local_c
        scratch.d = _ordered_sum(contributions, farms, f"{tag}/C") - scratch.h[None, :, :]
        block = dims.block(party.party_id)
        scratch.s = np.einsum("it,ijt->ij", party.data, scratch.d[:, :, block])

    def send_s(party: PartyRuntime) -> list[Outgoing]:
        s = party.private["e_scratch"].s
        return [Outgoing(f"{tag}/S/{i}/{j}", s[i, j]) for i in range(I) for j in range(J)]

    def compute_s(party: PartyRuntime, inbox: list[Message]) -> Responsibilities:
        params = party.shared["params"]
        scratch = party.private["e_scratch"]
        contributions = _by_sender(inbox, f"{tag}/S/", (I, J))
        contributions[party.party_id] = scratch.s
        total = _ordered_sum(contributions, farms, f"{tag}/S")
        scratch.g = total - np.einsum("ijd,jd->ij", scratch.d, params.means)
        resp = posterior_from_log_densities(log_gaussian_from_quadratic(scratch.g, params), params)
        party.shared["resp"] = resp
        return resp

    bus.run_round(parties, RoundProgram(f"{tag}/C", send_c, compute_c))
    outputs = bus.run_round(parties, RoundProgram(f"{tag}/S", send_s, compute_s)).outputs

    reference = outputs[farms[0]]
    for farm in farms[1:]:
        if not np.array_equal(outputs[farm].q, reference.q):
            raise ProtocolDesyncError(f"{tag}/S", f"farm {farm} holds different responsibilities")
    return reference


def _local_moments(
    party: PartyRuntime, safe_totals: np.ndarray, use_updated_mean: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Own mean block (J, T) and within-farm covariance block (J, T, T)."""
    q = party.shared["resp"].q
    prev = party.shared["params"]
    y = party.data
    means = (q.T @ y) / safe_totals[:, None]
    centres = means if use_updated_mean else prev.means[:, party.dims.block(party.party_id)]
    J, T = means.shape
    block = np.empty((J, T, T))
    for j in range(J):
        diff = y - centres[j]
        block[j] = (diff * q[:, j : j + 1]).T @ diff / safe_totals[j]
    return means, block


def _pack_local(means: np.ndarray, block: np.ndarray, upper: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    return np.concatenate([means, block[upper]])


def _unpack_local(vector: np.ndarray, T: int, upper: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    means = vector[:T]
    block = np.zeros((T, T))
    block[upper] = vector[T:]
    block.T[upper] = vector[T:]
    return means, block


def _cross_entries(
    products: np.ndarray,
    safe_totals: np.ndarray,
    means: np.ndarray,
    centres: np.ndarray,
    dims: Dims,
    initiator: int,
    responder: int,
) -> np.ndarray:
    """σ[j, t, v] = s/W − a_t b_v − b_t a_v + b_t b_v for the initiator's t and responder's v."""
    J, T = dims.num_components, dims.num_periods
    s = products.reshape(J, T, T)
    a_hi, a_lo = means[:, dims.block(initiator)], means[:, dims.block(responder)]
    b_hi, b_lo = centres[:, dims.block(initiator)], centres[:, dims.block(responder)]
    return (
        s / safe_totals[:, None, None]
        - a_hi[:, :, None] * b_lo[:, None, :]
        - b_hi[:, :, None] * a_lo[:, None, :]
        + b_hi[:, :, None] * b_lo[:, None, :]
    )


def private_m_step(
    bus: Bus,
    parties: Sequence[PartyRuntime],
    seed: int,
    tag: str = "m",
    config: PipelineConfig | None = None,
) -> GmmParams:
    """θ^{k+1} from the shared responsibilities and θ^k, held identically by every party.

    Rounds: local moments broadcast, one scalar-product batch per farm pair,
    cross-entry broadcast to the farms outside each pair, and a reseed broadcast
    when a component is empty.

    Args:
        bus: Message bus connecting the parties
        parties: One runtime per farm, each holding ``shared["resp"]`` and ``shared["params"]``
        seed: Shared session seed for the scalar-product masks
        tag: Tag prefix of this step's messages
        config: Optional configuration override

    Returns:
        The new parameters, also stored in every party's ``shared["params"]``

    Raises:
        SingularCovarianceError: If the SPD repair exceeds the jitter cap
        ProtocolDesyncError: If parties end up with different parameters
    """
    cfg = resolve_config(config)
    parties = _ordered(parties)
    if len(parties) == 1:
        party = parties[0]
        party.shared["params"] = m_step(party.data, party.shared["resp"], party.shared["params"], cfg)
        return party.shared["params"]

    dims = _common_dims(parties)
    farms = [p.party_id for p in parties]
    J, T, I, D = dims.num_components, dims.num_periods, dims.num_obs, dims.dim
    upper = np.triu_indices(T)

    # every party derives W_j and the empty set from its own copy of Q
    totals = {p.party_id: p.shared["resp"].totals for p in parties}
    safe = {}
    for farm, w in totals.items():
        safe[farm] = w.copy()
        safe[farm][empty_components(w, cfg)] = 1.0

    local = {
        p.party_id: _local_moments(p, safe[p.party_id], cfg.use_updated_mean) for p in parties
    }
    assembled: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def send_local(party: PartyRuntime) -> list[Outgoing]:
        means, block = local[party.party_id]
        return [
            Outgoing(f"{tag}/local/{j}", _pack_local(means[j], block[j], upper)) for j in range(J)
        ]

    def compute_local(party: PartyRuntime, inbox: list[Message]) -> None:
        width = T + len(upper[0])
        vectors = _by_sender(inbox, f"{tag}/local/", (J, width))
        means_own, block_own = local[party.party_id]
        vectors[party.party_id] = np.stack(
            [_pack_local(means_own[j], block_own[j], upper) for j in range(J)]
        )
        means = np.empty((J, D))
        covariances = np.zeros((J, D, D))
        for farm in farms:
            cols = dims.block(farm)
            for j in range(J):
                means[j, cols], covariances[j, cols, cols] = _unpack_local(vectors[farm][j], T, upper)
        assembled[party.party_id] = (means, covariances)

    bus.run_round(parties, RoundProgram(f"{tag}/local", send_local, compute_local))

    def centres_of(party: PartyRuntime) -> np.ndarray:
        means = assembled[party.party_id][0]
        return means if cfg.use_updated_mean else party.shared["params"].means

    by_id = {p.party_id: p for p in parties}
    pairs = farm_pairs(farms)
    held: dict[int, dict[tuple[int, int], np.ndarray]] = {farm: {} for farm in farms}
    for hi, lo in pairs:
        jobs = pair_jobs(dims, hi, lo)
        q_hi = by_id[hi].shared["resp"].q
        x = np.stack([job.initiator_vector(q_hi, by_id[hi].data) for job in jobs])
        y = np.stack([job.responder_vector(by_id[lo].data) for job in jobs])
        session = ssp_batch(bus, hi, x, lo, y, seed, f"{tag}/ssp/{hi}-{lo}", cfg.ssp_arithmetic, cfg)
        for farm, products in ((hi, session.result_initiator), (lo, session.result_responder)):
            party = by_id[farm]
            held[farm][(hi, lo)] = _cross_entries(
                products, safe[farm], assembled[farm][0], centres_of(party), dims, hi, lo
            )
    logger.debug("M-step %s: %d scalar products over %d farm pairs", tag, count_ssp_jobs(dims), len(pairs))

    def send_cross(party: PartyRuntime) -> list[Outgoing]:
        out = []
        for hi, lo in pairs:
            if hi != party.party_id:
                continue
            entries = held[hi][(hi, lo)]
            for j in range(J):
                for receiver in farms:
                    if receiver not in (hi, lo):
                        out.append(Outgoing(f"{tag}/cross/{hi}-{lo}/{j}", entries[j], receiver))
        return out

    def compute_cross(party: PartyRuntime, inbox: list[Message]) -> None:
        pending = iter(inbox)
        for hi, lo in pairs:
            if party.party_id in (hi, lo):
                continue
            entries = np.empty((J, T, T))
            for j in range(J):
                message = next(pending, None)
                expected = f"{tag}/cross/{hi}-{lo}/{j}"
                if message is None or message.tag != expected or message.sender != hi:
                    raise ProtocolDesyncError(expected, f"farm {party.party_id} missed a cross entry")
                entries[j] = message.payload.reshape(T, T)
            held[party.party_id][(hi, lo)] = entries
        covariances = assembled[party.party_id][1]
        for (hi, lo), entries in held[party.party_id].items():
            rows, cols = dims.block(hi), dims.block(lo)
            for j in range(J):
                covariances[j, rows, cols] = entries[j]
                covariances[j, cols, rows] = entries[j].T

    bus.run_round(parties, RoundProgram(f"{tag}/cross", send_cross, compute_cross))

    empty = empty_components(totals[farms[0]], cfg)
    reseed_values: dict[int, np.ndarray] = {}
    if empty.size:
        rows = reseed_rows(parties[0].shared["resp"], empty)
        warnings.warn(
            f"Reseeding components {empty.tolist()} broadcasts raw observation rows {rows.tolist()}",
            PrivacyWarning,
            stacklevel=2,
        )

        def send_reseed(party: PartyRuntime) -> list[Outgoing]:
            return [
                Outgoing(f"{tag}/reseed/{j}", party.data[row]) for j, row in zip(empty, rows)
            ]

        def compute_reseed(party: PartyRuntime, inbox: list[Message]) -> None:
            pieces = _by_sender(inbox, f"{tag}/reseed/", (len(empty), T))
            pieces[party.party_id] = party.data[rows]
            reseed_values[party.party_id] = np.hstack([pieces[farm] for farm in farms])

        bus.run_round(parties, RoundProgram(f"{tag}/reseed", send_reseed, compute_reseed))

    for party in parties:
        means, covariances = assembled[party.party_id]
        weights = totals[party.party_id] / I
        if empty.size:
            reseed_components(
                weights, means, covariances, party.shared["params"], empty,
                reseed_values[party.party_id], I,
            )
        party.shared["params"] = finalize_params(weights, means, covariances, cfg)
    return _check_consensus(parties, f"{tag}/theta")


def fit_distributed(
    bus: Bus,
    parties: Sequence[PartyRuntime],
    num_components: int,
    seed: int,
    tol: float | None = None,
    max_iter: int | None = None,
    callback: IterationCallback | None = None,
    config: PipelineConfig | None = None,
    report_farm: int = 1,
) -> DistributedFit:
    """Fit the joint GMM without any farm revealing its slice.

    Every party derives θ⁰ from the shared seed, then private E- and M-steps
    alternate under the same stopping rule as the centralized fit.

    Args:
        bus: Message bus connecting the parties
        parties: One runtime per farm
        num_components: Number of components J (must match the parties' dims)
        seed: Shared seed for θ⁰ and the scalar-product masks
        tol: Relative log-likelihood tolerance (config default if None)
        max_iter: Iteration cap (config default if None)
        callback: Called as ``callback(k, θ^k)`` after every M-step
        config: Optional configuration override
        report_farm: Farm whose bytes go into the iteration summaries

    Returns:
        ``DistributedFit(params, traffic, n_iter, loglik_trace, converged, summaries)``
    """
    cfg = resolve_config(config)
    parties = _ordered(parties)
    dims = _common_dims(parties)
    if dims.num_components != num_components:
        raise ContractViolationError(
            f"parties were built for J={dims.num_components}, fit asked for J={num_components}"
        )
    if tuple(p.party_id for p in parties) != bus.party_ids:
        raise ContractViolationError(f"bus connects {bus.party_ids}, parties are {[p.party_id for p in parties]}")
    cfg.warn_mask_scope()

    for party in parties:
        party.shared["params"] = initialize_params(dims, party.capacities, seed)
    init = _check_consensus(parties, "init")

    summaries: list[IterationSummary] = []
    snapshot = bus.meter.copy()

    def e_step_fn(params: GmmParams) -> Responsibilities:
        nonlocal snapshot
        resp = private_e_step(bus, parties, tag=f"it{len(summaries)}/e")
        spent = bus.meter.since(snapshot).party(report_farm)
        snapshot = bus.meter.copy()
        summaries.append(
            IterationSummary(len(summaries), resp.log_likelihood, spent.upstream_bytes, spent.downstream_bytes)
        )
        logger.info(
            "Iteration %d: log-likelihood %.10g, farm %d sent %d B, received %d B",
            summaries[-1].iteration,
            summaries[-1].loglik,
            report_farm,
            spent.upstream_bytes,
            spent.downstream_bytes,
        )
        return resp

    def m_step_fn(resp: Responsibilities, params: GmmParams) -> GmmParams:
        return private_m_step(bus, parties, seed, tag=f"it{len(summaries) - 1}/m", config=cfg)

    fit = run_em(
        e_step_fn,
        m_step_fn,
        init,
        cfg.tol if tol is None else tol,
        cfg.max_iter if max_iter is None else max_iter,
        callback,
    )
    return DistributedFit(
        fit.params, bus.meter.copy(), fit.n_iter, fit.loglik_trace, fit.converged, summaries
    )
