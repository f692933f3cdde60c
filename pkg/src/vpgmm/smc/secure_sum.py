"""Ring secure sum (SS).

The first ring member blinds its addend with a uniform Z in [0, N) and passes the
running partial around the ring; every transmitted partial lies in [0, N). Sums
are represented in [−N/2, N/2) by adding N/2 once at the first member and
removing it after unblinding.
"""

import logging
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from vpgmm.domain.config import PipelineConfig, resolve_config
from vpgmm.errors import ContractViolationError, PrivacyWarning, SecureSumOverflowError
from vpgmm.smc.fixed_point import FixedPointCodec
from vpgmm.smc.seeds import derive_rng
from vpgmm.smc.wire import ProtocolId, Transport

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SsSession:
    """State of one secure-sum run.

    Attributes:
        ring: Party ids in ring order; ``ring[0]`` blinds and unblinds
        modulus: Real modulus N
        arithmetic: "real" or "fixed"
        tag: Session tag
        blind: Z held by ``ring[0]`` (ring elements in fixed mode)
        partials: V_1..V_M as transmitted
        result: Unblinded sum, known to ``delivered``
        delivered: Parties that hold ``result``
        privacy_note: Caveat recorded when the ring leaks addends (two parties)
    """

    ring: tuple[int, ...]
    modulus: float
    arithmetic: str
    tag: str
    blind: np.ndarray | None = field(default=None, repr=False)
    partials: list[np.ndarray] = field(default_factory=list, repr=False)
    result: np.ndarray | None = None
    delivered: tuple[int, ...] = ()
    privacy_note: str | None = None


def _check_ring(ring: Sequence[int]) -> tuple[tuple[int, ...], str | None]:
    ring = tuple(int(p) for p in ring)
    if len(ring) < 2:
        raise ContractViolationError(f"secure sum needs at least two parties, got ring {ring}")
    if len(set(ring)) != len(ring):
        raise ContractViolationError(f"ring has repeated parties: {ring}")
    if len(ring) != 2:
        return ring, None
    note = (
        f"Secure sum over two parties {ring}: each party can infer the other's addend "
        "from the result"
    )
    warnings.warn(note, PrivacyWarning, stacklevel=3)
    return ring, note


def run_secure_sum(
    transport: Transport,
    ring: Sequence[int],
    addends: Mapping[int, float | np.ndarray],
    modulus: float,
    seed: int,
    tag: str = "ss",
    arithmetic: str | None = None,
    broadcast_result: bool = True,
    config: PipelineConfig | None = None,
) -> SsSession:
    """Securely sum the ring members' addends.

    Args:
        transport: Message transport
        ring: Party ids in ring order
        addends: Local addend per ring member (scalar or vector, equal shapes)
        modulus: N; the sum must lie in [−N/2, N/2)
        seed: Session seed (the blind is derived privately from it by ``ring[0]``)
        tag: Session tag
        arithmetic: "real" or "fixed" (defaults to ``config.ss_arithmetic``)
        broadcast_result: Send the result to the other ring members; otherwise only
            ``ring[0]`` learns it
        config: Optional configuration override

    Returns:
        The finished session

    Raises:
        ContractViolationError: On a ring of fewer than two parties or mismatched addends
        SecureSumOverflowError: In debug-oracle mode, if |Σ a_n| ≥ N/2
    """
    cfg = resolve_config(config)
    arithmetic = cfg.ss_arithmetic if arithmetic is None else arithmetic
    if arithmetic not in ("real", "fixed"):
        raise ContractViolationError(f"unknown secure-sum arithmetic {arithmetic!r}")
    ring, note = _check_ring(ring)
    if set(addends) != set(ring):
        raise ContractViolationError(
            f"addends given for {sorted(addends)}, ring is {sorted(ring)}"
        )
    values = {p: np.atleast_1d(np.asarray(addends[p], dtype=float)) for p in ring}
    shape = values[ring[0]].shape
    if any(v.shape != shape or v.ndim != 1 for v in values.values()):
        raise ContractViolationError("secure-sum addends must be vectors of equal length")
    if not modulus > 0:
        raise ContractViolationError(f"modulus must be positive, got {modulus}")

    if cfg.debug_oracle:
        plain = np.sum([values[p] for p in ring], axis=0)
        if np.any(np.abs(plain) >= modulus / 2):
            raise SecureSumOverflowError(
                f"secure sum '{tag}' out of range: max |sum| {np.abs(plain).max():.6g} "
                f">= N/2 = {modulus / 2:.6g}"
            )

    session = SsSession(ring, float(modulus), arithmetic, tag, privacy_note=note)
    M = len(ring)
    rng = derive_rng(seed, tag, "Z", ring[0])
    codec = FixedPointCodec.for_real_modulus(cfg.fixed_point_bits, modulus) if arithmetic == "fixed" else None

    if codec is None:
        half = modulus / 2.0

        def wrap(v: np.ndarray) -> np.ndarray:
            v = np.mod(v, modulus)
            return np.where(v >= modulus, v - modulus, v)

        session.blind = rng.uniform(0.0, modulus, size=shape)
        partial = wrap(values[ring[0]] + half + session.blind)
    else:
        half_int = codec.half
        encoded = {p: codec.encode(values[p]) for p in ring}
        session.blind = codec.random(rng, shape)
        partial = codec.reduce(encoded[ring[0]] + half_int + session.blind)

    for n in range(M):
        sender, receiver = ring[n], ring[(n + 1) % M]
        step = f"{tag}/V{n + 1}"
        transport.send(sender, receiver, step, partial, ProtocolId.SECURE_SUM)
        session.partials.append(partial)
        received = transport.receive(receiver, sender, step).payload
        if n + 1 < M:
            following = ring[n + 1]
            if codec is None:
                partial = wrap(values[following] + received)
            else:
                partial = codec.reduce(encoded[following] + received)
        else:
            partial = received
    transport.barrier(f"{tag}/ring")

    if codec is None:
        result = wrap(partial - session.blind) - half
    else:
        lifted = codec.reduce(partial - session.blind) - half_int
        result = np.array([int(v) / codec.scale for v in lifted], dtype=float)
    session.result = np.asarray(result, dtype=float)
    session.delivered = (ring[0],)

    if broadcast_result and M > 1:
        transport.broadcast(
            ring[0], f"{tag}/result", session.result, ProtocolId.SECURE_SUM, receivers=ring[1:]
        )
        for p in ring[1:]:
            transport.receive(p, ring[0], f"{tag}/result")
        transport.barrier(f"{tag}/result")
        session.delivered = ring
    logger.debug("Secure sum %s over ring %s (%s, %d values)", tag, ring, arithmetic, shape[0])
    return session


def secure_sum(
    transport: Transport,
    ring: Sequence[int],
    addends: Mapping[int, float | np.ndarray] | Sequence[float],
    modulus: float,
    seed: int = 0,
    tag: str = "ss",
    arithmetic: str | None = None,
    config: PipelineConfig | None = None,
) -> float | np.ndarray:
    """Secure sum delivered to every ring member.

    ``addends`` may be a mapping from party id or a sequence aligned with ``ring``.
    Scalar addends give a scalar result.
    """
    if not isinstance(addends, Mapping):
        addends = list(addends)
        if len(addends) != len(ring):
            raise ContractViolationError(f"{len(addends)} addends for a ring of {len(ring)}")
        addends = dict(zip(ring, addends))
    scalar = all(np.ndim(a) == 0 for a in addends.values())
    session = run_secure_sum(transport, ring, addends, modulus, seed, tag, arithmetic, True, config)
    return float(session.result[0]) if scalar else session.result
