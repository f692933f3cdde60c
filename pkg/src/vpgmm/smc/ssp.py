"""Two-party secure scalar product (SSP).

For one job the initiator holds x, the responder holds y, both of length I
(padded with one zero when I is odd) and both derive the same I × I/2 mask
matrix U from the session seed:

1. initiator draws a private R (length I/2) and sends s_m = U·R + x;
2. responder replies s_n1 = s_m·y and s_n2 = U′·y;
3. initiator computes x·y = s_n1 − s_n2·R and sends it to the responder.

Each role step below only touches that role's inputs and what it received.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from vpgmm.domain.config import PipelineConfig, resolve_config
from vpgmm.errors import ContractViolationError
from vpgmm.smc.fixed_point import FixedPointCodec
from vpgmm.smc.seeds import derive_rng
from vpgmm.smc.wire import ProtocolId, Transport

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SspSession:
    """State of a batch of K scalar products between one ordered pair.

    Attributes:
        initiator: Party holding the x vectors
        responder: Party holding the y vectors
        tag: Session tag; job k uses ``{tag}/{k}``
        arithmetic: "real" or "fixed"
        length: Unpadded vector length I
        mask: Shared U, shape (K, I', h) per invocation or (I', h) per batch
        private_mask: Initiator's R, shape (K, h)
        masked: s_m as sent, shape (K, I')
        reply_scalar: s_n1 as sent, shape (K,)
        reply_vector: s_n2 as sent, shape (K, h)
        result_initiator: Products computed by the initiator, shape (K,)
        result_responder: Products delivered to the responder, shape (K,)
    """

    initiator: int
    responder: int
    tag: str
    arithmetic: str
    length: int
    mask: np.ndarray = field(repr=False)
    private_mask: np.ndarray | None = field(default=None, repr=False)
    masked: np.ndarray | None = field(default=None, repr=False)
    reply_scalar: np.ndarray | None = field(default=None, repr=False)
    reply_vector: np.ndarray | None = field(default=None, repr=False)
    result_initiator: np.ndarray | None = None
    result_responder: np.ndarray | None = None

    @property
    def num_jobs(self) -> int:
        return int(self.masked.shape[0]) if self.masked is not None else 0

    def job_tag(self, k: int, step: str) -> str:
        return f"{self.tag}/{k}/{step}"


def _padded(vectors: np.ndarray) -> np.ndarray:
    if vectors.shape[1] % 2:
        return np.hstack([vectors, np.zeros((vectors.shape[0], 1))])
    return vectors


def _shared_mask(
    seed: int,
    tag: str,
    num_jobs: int,
    padded: int,
    scope: str,
    codec: FixedPointCodec | None,
) -> np.ndarray:
    """U derived from the session seed; identical at both parties."""
    half = padded // 2

    def draw(*labels: object) -> np.ndarray:
        rng = derive_rng(seed, tag, "U", *labels)
        if codec is None:
            return rng.uniform(-1.0, 1.0, size=(padded, half))
        return codec.random(rng, (padded, half))

    if scope == "batch":
        return draw()
    return np.stack([draw(k) for k in range(num_jobs)])


def _initiator_mask(
    mask: np.ndarray,
    x: np.ndarray,
    rng: np.random.Generator,
    codec: FixedPointCodec | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Step 1 at the initiator: draw R and form s_m = U·R + x."""
    K, padded = x.shape
    half = padded // 2
    if codec is None:
        scale = np.maximum(1.0, np.abs(x).max(axis=1, initial=0.0))
        r = rng.uniform(-1.0, 1.0, size=(K, half)) * scale[:, None]
        if mask.ndim == 2:
            s_m = r @ mask.T + x
        else:
            s_m = np.einsum("kih,kh->ki", mask, r) + x
        return r, s_m
    r = codec.random(rng, (K, half))
    x_enc = codec.encode(x)
    s_m = np.empty((K, padded), dtype=object)
    for k in range(K):
        u_k = mask if mask.ndim == 2 else mask[k]
        s_m[k] = codec.reduce(u_k @ r[k] + x_enc[k])
    return r, s_m


def _responder_reply(
    mask: np.ndarray, s_m: np.ndarray, y: np.ndarray, codec: FixedPointCodec | None
) -> tuple[np.ndarray, np.ndarray]:
    """Step 2 at the responder: s_n1 = s_m·y and s_n2 = U′·y."""
    if codec is None:
        s_n1 = np.einsum("ki,ki->k", s_m, y)
        if mask.ndim == 2:
            s_n2 = y @ mask
        else:
            s_n2 = np.einsum("kih,ki->kh", mask, y)
        return s_n1, s_n2
    K = y.shape[0]
    y_enc = codec.encode(y)
    s_n1 = np.empty(K, dtype=object)
    s_n2 = np.empty((K, mask.shape[-1]), dtype=object)
    for k in range(K):
        u_k = mask if mask.ndim == 2 else mask[k]
        s_n1[k] = int(np.dot(s_m[k], y_enc[k])) % codec.modulus
        s_n2[k] = codec.reduce(u_k.T @ y_enc[k])
    return s_n1, s_n2


def _initiator_finish(
    s_n1: np.ndarray, s_n2: np.ndarray, r: np.ndarray, codec: FixedPointCodec | None
) -> np.ndarray:
    """Step 3 at the initiator: x·y = s_n1 − s_n2·R."""
    if codec is None:
        return s_n1 - np.einsum("kh,kh->k", s_n2, r)
    out = np.empty(s_n1.shape[0], dtype=object)
    for k in range(s_n1.shape[0]):
        out[k] = (int(s_n1[k]) - int(np.dot(s_n2[k], r[k]))) % codec.modulus
    return codec.decode(out, scale_power=2)


def ssp_batch(
    transport: Transport,
    initiator: int,
    x: np.ndarray,
    responder: int,
    y: np.ndarray,
    seed: int,
    tag: str,
    arithmetic: str = "real",
    config: PipelineConfig | None = None,
) -> SspSession:
    """Run K independent scalar products x_k·y_k between one ordered pair.

    Every job exchanges three messages (s_m, [s_n1, s_n2], result); all jobs of a
    step are sent before any is received, and each step ends in a barrier.

    Args:
        transport: Message transport
        initiator: Party holding ``x``
        x: Initiator vectors, shape (K, I) or (I,)
        responder: Party holding ``y``
        y: Responder vectors, same shape as ``x``
        seed: Session seed shared by the pair
        tag: Session tag
        arithmetic: "real" (floating point) or "fixed" (exact ring arithmetic)
        config: Optional configuration override

    Returns:
        The finished session; ``result_initiator`` and ``result_responder`` hold x_k·y_k

    Raises:
        ContractViolationError: On shape mismatch, empty vectors or identical parties
    """
    cfg = resolve_config(config)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ContractViolationError(f"SSP length mismatch: x {x.shape}, y {y.shape}")
    if x.shape[1] == 0 or x.shape[0] == 0:
        raise ContractViolationError("SSP needs non-empty vectors")
    if initiator == responder:
        raise ContractViolationError(f"SSP needs two distinct parties, got {initiator} twice")
    if arithmetic not in ("real", "fixed"):
        raise ContractViolationError(f"unknown SSP arithmetic {arithmetic!r}")

    codec = (
        FixedPointCodec.with_ring_bits(cfg.fixed_point_bits, cfg.ssp_ring_bits)
        if arithmetic == "fixed"
        else None
    )
    K, length = x.shape
    x_pad, y_pad = _padded(x), _padded(y)
    padded = x_pad.shape[1]
    mask = _shared_mask(seed, tag, K, padded, cfg.ssp_mask_scope, codec)
    session = SspSession(initiator, responder, tag, arithmetic, length, mask)

    # step 1: initiator -> responder
    rng = derive_rng(seed, tag, "R", initiator)
    session.private_mask, session.masked = _initiator_mask(mask, x_pad, rng, codec)
    for k in range(K):
        transport.send(initiator, responder, session.job_tag(k, "sm"), session.masked[k], ProtocolId.SSP)
    received = np.stack(
        [transport.receive(responder, initiator, session.job_tag(k, "sm")).payload for k in range(K)]
    )
    transport.barrier(f"{tag}/sm")

    # step 2: responder -> initiator
    session.reply_scalar, session.reply_vector = _responder_reply(mask, received, y_pad, codec)
    for k in range(K):
        reply = np.concatenate([session.reply_scalar[k : k + 1], session.reply_vector[k]])
        transport.send(responder, initiator, session.job_tag(k, "sn"), reply, ProtocolId.SSP)
    replies = [transport.receive(initiator, responder, session.job_tag(k, "sn")).payload for k in range(K)]
    transport.barrier(f"{tag}/sn")

    # step 3: initiator -> responder
    s_n1 = np.array([reply[0] for reply in replies], dtype=replies[0].dtype)
    s_n2 = np.stack([reply[1:] for reply in replies])
    session.result_initiator = np.asarray(_initiator_finish(s_n1, s_n2, session.private_mask, codec), dtype=float)
    for k in range(K):
        transport.send(initiator, responder, session.job_tag(k, "res"), session.result_initiator[k], ProtocolId.SSP)
    session.result_responder = np.array(
        [transport.receive(responder, initiator, session.job_tag(k, "res")).payload[0] for k in range(K)]
    )
    transport.barrier(f"{tag}/res")
    logger.debug("SSP %s: %d jobs of length %d between %d and %d", tag, K, length, initiator, responder)
    return session


def run_ssp(
    transport: Transport,
    initiator: int,
    x: Sequence[float] | np.ndarray,
    responder: int,
    y: Sequence[float] | np.ndarray,
    seed: int,
    tag: str = "ssp",
    arithmetic: str = "real",
    config: PipelineConfig | None = None,
) -> SspSession:
    """Run one scalar product and return the full session state."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1:
        raise ContractViolationError("run_ssp expects two vectors")
    return ssp_batch(transport, initiator, x[None, :], responder, y[None, :], seed, tag, arithmetic, config)


def ssp(
    transport: Transport,
    initiator: int,
    x: Sequence[float] | np.ndarray,
    responder: int,
    y: Sequence[float] | np.ndarray,
    seed: int,
    tag: str = "ssp",
    arithmetic: str = "real",
    config: PipelineConfig | None = None,
) -> float:
    """Secure scalar product x·y, delivered to both parties."""
    session = run_ssp(transport, initiator, x, responder, y, seed, tag, arithmetic, config)
    return float(session.result_responder[0])
