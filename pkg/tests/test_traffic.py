"""Tests for traffic accounting and the centralized baseline."""

import numpy as np
import pytest

from vpgmm.domain.models import Dims
from vpgmm.errors import ContractViolationError
from vpgmm.simnet.bus import Bus
from vpgmm.smc.traffic import TrafficMeter, centralized_traffic, meter, table_one
from vpgmm.smc.wire import make_message


def test_broadcast_bytes() -> None:
    """Test that a broadcast of four values among three parties costs two unicasts."""
    bus = Bus([1, 2, 3])
    bus.broadcast(1, "b", np.zeros(4))
    assert bus.meter.party(1).upstream_bytes == 2 * (32 + 32)
    assert bus.meter.party(2).downstream_bytes == 64
    assert bus.meter.party(3).downstream_bytes == 64
    assert bus.meter.party(1).messages_sent == 2


def test_meter_conservation() -> None:
    """Test that total upstream equals total downstream."""
    transcript = [
        make_message(1, 2, "a", 0, np.zeros(3)),
        make_message(2, 3, "b", 0, np.zeros(5)),
        make_message(3, 1, "c", 1, np.zeros(1)),
    ]
    report = meter(transcript, party_ids=[1, 2, 3, 4])
    assert report.is_conserved()
    assert report.total_bytes == (32 + 24) + (32 + 40) + (32 + 8)
    assert report.total_messages == 3
    assert report.party(4).upstream_bytes == 0


def test_meter_empty_transcript() -> None:
    """Test that an empty transcript reports zeros for every listed party."""
    report = meter([], party_ids=[1, 2])
    assert report.total_bytes == 0
    assert sorted(report.parties) == [1, 2]


def test_meter_since_snapshot() -> None:
    """Test that since() reports only the traffic after a snapshot."""
    report = TrafficMeter.for_parties([1, 2])
    report.record(1, 2, 100)
    snapshot = report.copy()
    report.record(2, 1, 40)
    delta = report.since(snapshot)
    assert delta.party(1).upstream_bytes == 0
    assert delta.party(1).downstream_bytes == 40
    assert snapshot.party(2).upstream_bytes == 0


def test_meter_frame_columns() -> None:
    """Test the per-party frame layout."""
    report = TrafficMeter.for_parties([2, 1])
    report.record(1, 2, 64)
    frame = report.to_frame()
    assert list(frame.columns) == [
        "party", "upstream_bytes", "downstream_bytes", "messages_sent", "messages_received",
    ]
    assert frame["party"].tolist() == [1, 2]
    assert frame["upstream_bytes"].tolist() == [64, 0]


def test_centralized_traffic_discussion_scale() -> None:
    """Test the baseline at M=10, T=24, I=1000, J=3."""
    dims = Dims(num_farms=10, num_periods=24, num_obs=1000, num_components=3)
    report = centralized_traffic(dims)
    D = 240
    assert report.party(1).upstream_bytes == 32 + 8 * 1000 * 24
    assert report.party(1).downstream_bytes == 32 + 8 * (3 + 3 * D + 3 * D * D)
    assert report.party(0).downstream_bytes == 10 * (32 + 8 * 24000)
    assert report.is_conserved()


def test_table_one() -> None:
    """Test the two-row megabyte comparison."""
    dims = Dims(num_farms=2, num_periods=2, num_obs=10, num_components=1)
    proposed = TrafficMeter.for_parties([1, 2])
    proposed.record(1, 2, 336)
    proposed.record(2, 1, 1000)
    table = table_one(proposed, centralized_traffic(dims), farm=1)
    assert list(table.index) == ["Upstream", "Downstream"]
    assert table.loc["Upstream", "centralized_MB"] == pytest.approx(192e-6)
    assert table.loc["Upstream", "ratio"] == pytest.approx(336 / 192)
    assert table.loc["Downstream", "proposed_MB"] == pytest.approx(1e-3)


def test_table_one_unknown_farm() -> None:
    """Test that a farm missing from a report is rejected."""
    dims = Dims(num_farms=2, num_periods=2, num_obs=10, num_components=1)
    with pytest.raises(ContractViolationError, match="farm 5"):
        table_one(TrafficMeter.for_parties([1, 2]), centralized_traffic(dims), farm=5)
