"""Byte-exact traffic accounting per party and the centralized baseline model."""

from collections.abc import Iterable
from dataclasses import dataclass, field

import pandas as pd

from vpgmm.domain.models import Dims
from vpgmm.errors import ContractViolationError
from vpgmm.smc.wire import Message, TranscriptLine, message_bytes

AGGREGATOR = 0
MEGABYTE = 1e6


@dataclass
class PartyTraffic:
    """Counters for one party."""

    upstream_bytes: int = 0
    downstream_bytes: int = 0
    messages_sent: int = 0
    messages_received: int = 0


@dataclass
class TrafficMeter:
    """Per-party upstream/downstream byte and message counters.

    Attributes:
        parties: Counters keyed by party id
    """

    parties: dict[int, PartyTraffic] = field(default_factory=dict)

    @classmethod
    def for_parties(cls, party_ids: Iterable[int]) -> "TrafficMeter":
        return cls({pid: PartyTraffic() for pid in party_ids})

    def record(self, sender: int, receiver: int, nbytes: int) -> None:
        up = self.parties.setdefault(sender, PartyTraffic())
        down = self.parties.setdefault(receiver, PartyTraffic())
        up.upstream_bytes += nbytes
        up.messages_sent += 1
        down.downstream_bytes += nbytes
        down.messages_received += 1

    def record_message(self, message: Message | TranscriptLine) -> None:
        nbytes = message.nbytes if isinstance(message, Message) else message.bytes
        self.record(message.sender, message.receiver, nbytes)

    def party(self, party_id: int) -> PartyTraffic:
        return self.parties.get(party_id, PartyTraffic())

    @property
    def total_upstream(self) -> int:
        return sum(p.upstream_bytes for p in self.parties.values())

    @property
    def total_downstream(self) -> int:
        return sum(p.downstream_bytes for p in self.parties.values())

    @property
    def total_bytes(self) -> int:
        """Bytes on the wire (each message counted once)."""
        return self.total_upstream

    @property
    def total_messages(self) -> int:
        return sum(p.messages_sent for p in self.parties.values())

    def is_conserved(self) -> bool:
        """Whether total upstream equals total downstream."""
        return self.total_upstream == self.total_downstream

    def copy(self) -> "TrafficMeter":
        return TrafficMeter(
            {
                pid: PartyTraffic(
                    p.upstream_bytes, p.downstream_bytes, p.messages_sent, p.messages_received
                )
                for pid, p in self.parties.items()
            }
        )

    def since(self, earlier: "TrafficMeter") -> "TrafficMeter":
        """Counters accumulated after the snapshot ``earlier``."""
        out = TrafficMeter()
        for pid, now in self.parties.items():
            before = earlier.party(pid)
            out.parties[pid] = PartyTraffic(
                now.upstream_bytes - before.upstream_bytes,
                now.downstream_bytes - before.downstream_bytes,
                now.messages_sent - before.messages_sent,
                now.messages_received - before.messages_received,
            )
        return out

    def to_frame(self) -> pd.DataFrame:
        """One row per party: ``party,upstream_bytes,downstream_bytes,messages_sent,messages_received``."""
        rows = [
            (pid, p.upstream_bytes, p.downstream_bytes, p.messages_sent, p.messages_received)
            for pid, p in sorted(self.parties.items())
        ]
        return pd.DataFrame(
            rows,
            columns=["party", "upstream_bytes", "downstream_bytes", "messages_sent", "messages_received"],
        )


def meter(transcript: Iterable[Message | TranscriptLine], party_ids: Iterable[int] = ()) -> TrafficMeter:
    """Traffic report of a complete transcript.

    Args:
        transcript: Messages or transcript lines
        party_ids: Parties to report even if they never appear

    Returns:
        Per-party counters; all zeros for an empty transcript
    """
    report = TrafficMeter.for_parties(party_ids)
    for message in transcript:
        report.record_message(message)
    return report


def centralized_traffic(dims: Dims, num_components: int | None = None) -> TrafficMeter:
    """Traffic of the gather-everything baseline.

    Every farm uploads its I × T slice once to an aggregator (party 0) and downloads
    the fitted θ (J weights, J·D means, J·D² covariance entries).
    """
    J = dims.num_components if num_components is None else num_components
    D = dims.dim
    report = TrafficMeter.for_parties(range(AGGREGATOR, dims.num_farms + 1))
    upload = message_bytes(dims.num_obs * dims.num_periods)
    download = message_bytes(J + J * D + J * D * D)
    for farm in range(1, dims.num_farms + 1):
        report.record(farm, AGGREGATOR, upload)
        report.record(AGGREGATOR, farm, download)
    return report


def table_one(
    proposed: TrafficMeter, centralized: TrafficMeter, farm: int = 1
) -> pd.DataFrame:
    """Two-row traffic comparison for one farm, in megabytes.

    Rows are ``Upstream`` and ``Downstream``; columns are ``centralized_MB``,
    ``proposed_MB`` and ``ratio`` (proposed / centralized).
    """
    if farm not in proposed.parties or farm not in centralized.parties:
        raise ContractViolationError(f"farm {farm} is missing from a traffic report")
    prop, cent = proposed.party(farm), centralized.party(farm)
    rows = []
    for label, p_bytes, c_bytes in (
        ("Upstream", prop.upstream_bytes, cent.upstream_bytes),
        ("Downstream", prop.downstream_bytes, cent.downstream_bytes),
    ):
        ratio = p_bytes / c_bytes if c_bytes else float("inf")
        rows.append((label, c_bytes / MEGABYTE, p_bytes / MEGABYTE, ratio))
    frame = pd.DataFrame(rows, columns=["direction", "centralized_MB", "proposed_MB", "ratio"])
    return frame.set_index("direction")

