"""Secure scalar product, secure sum, wire encoding and traffic metering."""

from vpgmm.smc.fixed_point import FixedPointCodec
from vpgmm.smc.secure_sum import SsSession, run_secure_sum, secure_sum
from vpgmm.smc.ssp import SspSession, run_ssp, ssp, ssp_batch
from vpgmm.smc.traffic import TrafficMeter, centralized_traffic, meter, table_one
from vpgmm.smc.wire import (
    Message,
    ProtocolId,
    TranscriptLine,
    Transport,
    dump_transcript,
    encode_message,
    load_transcript,
    message_bytes,
)

__all__ = [
    "FixedPointCodec",
    "Message",
    "ProtocolId",
    "SsSession",
    "SspSession",
    "TrafficMeter",
    "TranscriptLine",
    "Transport",
    "centralized_traffic",
    "dump_transcript",
    "encode_message",
    "load_transcript",
    "message_bytes",
    "meter",
    "run_secure_sum",
    "run_ssp",
    "secure_sum",
    "ssp",
    "ssp_batch",
    "table_one",
]
