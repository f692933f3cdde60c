"""Deterministic in-process message bus with round barriers and transcript capture."""

import logging
from collections import deque
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from vpgmm.errors import ContractViolationError, ProtocolDesyncError, SessionAbortError
from vpgmm.simnet.party import PartyRuntime
from vpgmm.smc.traffic import TrafficMeter
from vpgmm.smc.wire import Message, ProtocolId, TranscriptLine, dump_transcript, make_message

logger = logging.getLogger(__name__)

CAPTURE_LEVELS = ("full", "headers", "meter")


@dataclass(frozen=True)
class Outgoing:
    """A message a party wants to send in a round; ``receiver=None`` broadcasts."""

    tag: str
    payload: Any
    receiver: int | None = None
    protocol: ProtocolId = ProtocolId.SHARE


@dataclass(frozen=True)
class RoundProgram:
    """What every party does in one round.

    Attributes:
        label: Round label used for the barrier
        send: Builds a party's outgoing messages from its local state
        compute: Consumes a party's inbox (ordered by sender) and returns its output
    """

    label: str
    send: Callable[[PartyRuntime], Iterable[Outgoing]]
    compute: Callable[[PartyRuntime, list[Message]], Any] | None = None


class RoundResult(NamedTuple):
    outputs: dict[int, Any]
    transcript: list[Message]
    messages: int


class Bus:
    """FIFO channels per directed party pair, a traffic meter and a transcript.

    Capture levels: ``full`` keeps every message with its payload, ``headers`` keeps
    messages without payloads, ``meter`` keeps no transcript at all.

    Args:
        party_ids: Registered parties
        capture: Capture level
        replay: Recorded transcript lines every sent message must match
    """

    def __init__(
        self,
        party_ids: Iterable[int],
        capture: str = "full",
        replay: Sequence[TranscriptLine] | None = None,
    ) -> None:
        if capture not in CAPTURE_LEVELS:
            raise ContractViolationError(f"capture must be one of {CAPTURE_LEVELS}, got {capture!r}")
        self._party_ids = tuple(sorted(int(p) for p in party_ids))
        if len(set(self._party_ids)) != len(self._party_ids):
            raise ContractViolationError(f"duplicate party ids: {self._party_ids}")
        self.capture = capture
        self.round = 0
        self.transcript: list[Message] = []
        self.meter = TrafficMeter.for_parties(self._party_ids)
        self.message_count = 0
        self._channels: dict[tuple[int, int], deque[Message]] = {}
        self._pending = 0
        self._dropped: set[int] = set()
        self._replay = list(replay) if replay is not None else None
        self._replay_pos = 0

    @classmethod
    def for_parties(cls, parties: Sequence[PartyRuntime], **kwargs: Any) -> "Bus":
        return cls([p.party_id for p in parties], **kwargs)

    @property
    def party_ids(self) -> tuple[int, ...]:
        return self._party_ids

    @property
    def pending(self) -> int:
        """Messages sent but not yet received."""
        return self._pending

    def _check_alive(self, party: int, tag: str) -> None:
        if party not in self._party_ids:
            raise ContractViolationError(f"unknown party {party} ({tag})")
        if party in self._dropped:
            raise SessionAbortError(f"round {self.round} ({tag})", party)

    def send(
        self,
        sender: int,
        receiver: int,
        tag: str,
        payload: Any,
        protocol: ProtocolId = ProtocolId.SHARE,
    ) -> Message:
        """Queue one message on the (sender, receiver) channel and meter it."""
        self._check_alive(sender, tag)
        self._check_alive(receiver, tag)
        message = make_message(sender, receiver, tag, self.round, payload, protocol)
        if self._replay is not None:
            self._check_replay(message)
        self._channels.setdefault((sender, receiver), deque()).append(message)
        self._pending += 1
        self.message_count += 1
        self.meter.record(sender, receiver, message.nbytes)
        if self.capture == "full":
            self.transcript.append(message)
        elif self.capture == "headers":
            self.transcript.append(message.without_payload())
        return message

    def broadcast(
        self,
        sender: int,
        tag: str,
        payload: Any,
        protocol: ProtocolId = ProtocolId.SHARE,
        receivers: Iterable[int] | None = None,
    ) -> list[Message]:
        """Send the same payload to every other party (or to ``receivers``) as unicasts."""
        targets = self._party_ids if receivers is None else tuple(receivers)
        return [
            self.send(sender, receiver, tag, payload, protocol)
            for receiver in targets
            if receiver != sender
        ]

    def receive(self, receiver: int, sender: int, tag: str) -> Message:
        """Pop the head of the (sender, receiver) channel, which must carry ``tag``.

        Raises:
            ProtocolDesyncError: If the channel is empty or its head has another tag
            SessionAbortError: If either party has dropped out
        """
        self._check_alive(receiver, tag)
        self._check_alive(sender, tag)
        channel = self._channels.get((sender, receiver))
        if not channel:
            raise ProtocolDesyncError(tag, f"no message from {sender} to {receiver}")
        if channel[0].tag != tag:
            raise ProtocolDesyncError(
                tag, f"channel {sender}->{receiver} holds '{channel[0].tag}' first"
            )
        self._pending -= 1
        return channel.popleft()

    def receive_all(self, receiver: int) -> list[Message]:
        """Drain every message addressed to ``receiver``, ordered by sender then FIFO."""
        self._check_alive(receiver, "receive_all")
        inbox: list[Message] = []
        for sender in self._party_ids:
            channel = self._channels.get((sender, receiver))
            while channel:
                if sender in self._dropped:
                    raise SessionAbortError(f"round {self.round} ({channel[0].tag})", sender)
                inbox.append(channel.popleft())
                self._pending -= 1
        return inbox

    def barrier(self, label: str) -> int:
        """Close the current round.

        Returns:
            The new round number

        Raises:
            ProtocolDesyncError: If any sent message is still undelivered
        """
        if self._pending:
            stuck = next(ch[0] for ch in self._channels.values() if ch)
            raise ProtocolDesyncError(
                stuck.tag, f"{self._pending} undelivered message(s) at barrier '{label}'"
            )
        self.round += 1
        return self.round

    def drop(self, party: int) -> None:
        """Simulate ``party`` dropping out; later traffic involving it aborts the session."""
        if party not in self._party_ids:
            raise ContractViolationError(f"unknown party {party}")
        logger.warning("Party %d dropped out at round %d", party, self.round)
        self._dropped.add(party)

    def run_round(self, parties: Sequence[PartyRuntime], program: RoundProgram) -> RoundResult:
        """Send phase, deliver phase, compute phase, then barrier.

        Args:
            parties: Participating parties (processed in id order)
            program: The round's send and compute steps

        Returns:
            Per-party outputs, the captured transcript delta and the message count
        """
        ordered = sorted(parties, key=lambda p: p.party_id)
        start, count = len(self.transcript), self.message_count
        for party in ordered:
            for out in program.send(party):
                if out.receiver is None:
                    self.broadcast(party.party_id, out.tag, out.payload, out.protocol)
                else:
                    self.send(party.party_id, out.receiver, out.tag, out.payload, out.protocol)
        inboxes = {party.party_id: self.receive_all(party.party_id) for party in ordered}
        outputs = {}
        if program.compute is not None:
            for party in ordered:
                outputs[party.party_id] = program.compute(party, inboxes[party.party_id])
        self.barrier(program.label)
        return RoundResult(outputs, self.transcript[start:], self.message_count - count)

    def lines(self) -> list[TranscriptLine]:
        return [message.line() for message in self.transcript]

    def dump(self, path: Path) -> None:
        """Write the captured transcript in the line format."""
        if self.capture == "meter":
            raise ContractViolationError("bus was built with capture='meter'; no transcript kept")
        dump_transcript(self.transcript, path)

    def _check_replay(self, message: Message) -> None:
        line = message.line()
        if self._replay_pos >= len(self._replay):
            raise ProtocolDesyncError(message.tag, "message sent beyond the end of the recording")
        expected = self._replay[self._replay_pos]
        if tuple(line) != tuple(expected):
            raise ProtocolDesyncError(
                message.tag, f"recorded {tuple(expected)}, sent {tuple(line)}"
            )
        self._replay_pos += 1

    def finish_replay(self) -> None:
        """Raise if recorded messages were never sent."""
        if self._replay is not None and self._replay_pos != len(self._replay):
            remaining = len(self._replay) - self._replay_pos
            raise ProtocolDesyncError(
                self._replay[self._replay_pos].tag, f"{remaining} recorded message(s) never sent"
            )


def all_agree(values: Sequence[np.ndarray]) -> bool:
    """Bit-for-bit agreement of arrays held by different parties."""
    return all(np.array_equal(values[0], v) for v in values[1:])
