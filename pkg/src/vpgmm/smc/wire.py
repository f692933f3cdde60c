"""Messages, their bit-exact wire encoding and transcript files.

Wire image of one message: a 32-byte little-endian header
(protocol id u32, sender u32, receiver u32, tag hash u64, round u32,
payload length u32, reserved u32) followed by the payload as little-endian
64-bit floats. Fixed-point ring elements travel as their low 64 bits.
"""

import struct
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np
import pandas as pd

from vpgmm.errors import ContractViolationError, DataFormatError
from vpgmm.smc.seeds import tag_hash

HEADER = struct.Struct("<IIIQIII")
HEADER_BYTES = HEADER.size
ELEMENT_BYTES = 8
TRANSCRIPT_COLUMNS = ["sender", "receiver", "tag", "round", "len", "bytes"]
_LOW64 = (1 << 64) - 1


class ProtocolId(IntEnum):
    """Protocol field of the wire header."""

    SHARE = 1
    SSP = 2
    SECURE_SUM = 3
    CONTROL = 4


def message_bytes(length: int) -> int:
    """Encoded size of a message with ``length`` payload elements."""
    return HEADER_BYTES + ELEMENT_BYTES * length


@dataclass(frozen=True, slots=True, eq=False)
class Message:
    """One point-to-point message.

    Attributes:
        sender: Sending party id
        receiver: Receiving party id
        tag: Session tag (protocol, round and indices); never contains commas
        round: Round counter stamped by the transport
        payload: Payload vector; ``None`` once a transcript drops payloads
        length: Number of payload elements
        protocol: Protocol id for the header
    """

    sender: int
    receiver: int
    tag: str
    round: int
    payload: np.ndarray | None
    length: int
    protocol: ProtocolId = ProtocolId.SHARE

    @property
    def nbytes(self) -> int:
        return message_bytes(self.length)

    def line(self) -> "TranscriptLine":
        return TranscriptLine(self.sender, self.receiver, self.tag, self.round, self.length, self.nbytes)

    def without_payload(self) -> "Message":
        return Message(self.sender, self.receiver, self.tag, self.round, None, self.length, self.protocol)


class TranscriptLine(NamedTuple):
    """One transcript row: ``sender,receiver,tag,round,len,bytes``."""

    sender: int
    receiver: int
    tag: str
    round: int
    len: int
    bytes: int


def make_message(
    sender: int,
    receiver: int,
    tag: str,
    round_no: int,
    payload: float | Sequence[float] | np.ndarray,
    protocol: ProtocolId = ProtocolId.SHARE,
) -> Message:
    """Build a message, flattening the payload to a vector.

    Raises:
        ContractViolationError: If the tag contains a comma or newline, or sender equals receiver
    """
    if "," in tag or "\n" in tag:
        raise ContractViolationError(f"tag must not contain commas or newlines: {tag!r}")
    if sender == receiver:
        raise ContractViolationError(f"party {sender} cannot message itself ({tag})")
    vector = np.asarray(payload)
    if vector.dtype != object:
        vector = vector.astype(float, copy=False)
    vector = vector.reshape(-1)
    return Message(sender, receiver, tag, round_no, vector, int(vector.shape[0]), protocol)


def encode_message(message: Message) -> bytes:
    """Bit-exact wire image of ``message``.

    Raises:
        ContractViolationError: If the payload was dropped from the transcript
    """
    if message.payload is None:
        raise ContractViolationError(f"message '{message.tag}' has no payload to encode")
    header = HEADER.pack(
        int(message.protocol),
        message.sender,
        message.receiver,
        tag_hash(message.tag),
        message.round,
        message.length,
        0,
    )
    if message.payload.dtype == object:
        body = np.array([int(v) & _LOW64 for v in message.payload], dtype="<u8").tobytes()
    else:
        body = message.payload.astype("<f8").tobytes()
    return header + body


class Transport(Protocol):
    """Messaging interface the secure protocols are written against."""

    @property
    def party_ids(self) -> tuple[int, ...]: ...

    def send(
        self,
        sender: int,
        receiver: int,
        tag: str,
        payload: float | Sequence[float] | np.ndarray,
        protocol: ProtocolId = ProtocolId.SHARE,
    ) -> Message: ...

    def broadcast(
        self,
        sender: int,
        tag: str,
        payload: float | Sequence[float] | np.ndarray,
        protocol: ProtocolId = ProtocolId.SHARE,
        receivers: Iterable[int] | None = None,
    ) -> list[Message]: ...

    def receive(self, receiver: int, sender: int, tag: str) -> Message: ...

    def barrier(self, label: str) -> int: ...


def transcript_frame(lines: Iterable[TranscriptLine | Message]) -> pd.DataFrame:
    rows = [item.line() if isinstance(item, Message) else item for item in lines]
    return pd.DataFrame(rows, columns=TRANSCRIPT_COLUMNS)


def dump_transcript(lines: Iterable[TranscriptLine | Message], path: Path) -> None:
    """Write a transcript, one ``sender,receiver,tag,round,len,bytes`` line per message."""
    transcript_frame(lines).to_csv(path, index=False, lineterminator="\n")


def load_transcript(path: Path) -> list[TranscriptLine]:
    """Read a transcript written by :func:`dump_transcript`.

    Raises:
        FileNotFoundError: If the file does not exist
        DataFormatError: If the header or a row is malformed
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Transcript not found: {path}")
    frame = pd.read_csv(path, dtype={"tag": str}, keep_default_na=False)
    if list(frame.columns) != TRANSCRIPT_COLUMNS:
        raise DataFormatError(
            f"{path}: header must be '{','.join(TRANSCRIPT_COLUMNS)}', found {list(frame.columns)}"
        )
    lines = []
    for row_no, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            line = TranscriptLine(
                int(row.sender), int(row.receiver), str(row.tag), int(row.round), int(row.len), int(row.bytes)
            )
        except (TypeError, ValueError) as e:
            raise DataFormatError(f"{path}: row {row_no}: {e}") from e
        if line.bytes != message_bytes(line.len):
            raise DataFormatError(
                f"{path}: row {row_no}: {line.bytes} bytes inconsistent with length {line.len}"
            )
        lines.append(line)
    return lines
