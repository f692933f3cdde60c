"""Tests for the privacy-preserving distributed EM."""

import dataclasses
import math
import warnings

import numpy as np
import pytest

from tests.conftest import network, random_params, share_params
from vpgmm.data.slices import assemble
from vpgmm.data.synth import synth_generate
from vpgmm.domain.config import PipelineConfig
from vpgmm.domain.models import Dims, FlatIndex, Responsibilities
from vpgmm.errors import (
    ContractViolationError,
    EmptyComponentWarning,
    PrivacyWarning,
    ProtocolDesyncError,
    SessionAbortError,
)
from vpgmm.gmm.density import quadratic_forms
from vpgmm.gmm.em import e_step, fit_centralized, initialize_params, m_step
from vpgmm.pdem.private_em import (
    SspJob,
    count_ssp_jobs,
    farm_pairs,
    fit_distributed,
    pair_jobs,
    private_e_step,
    private_m_step,
)
from vpgmm.simnet.bus import Bus
from vpgmm.smc.wire import message_bytes


def test_count_ssp_jobs() -> None:
    """Test J·T²·M(M−1)/2 scalar products per M-step."""
    assert count_ssp_jobs(Dims(3, 2, 10, 2)) == 24
    assert count_ssp_jobs(Dims(10, 24, 1000, 3)) == 3 * 24 * 24 * 45
    assert count_ssp_jobs(Dims(1, 5, 10, 2)) == 0


def test_farm_pairs_higher_farm_initiates() -> None:
    """Test the (initiator, responder) pair order."""
    assert farm_pairs([3, 1, 2]) == [(2, 1), (3, 1), (3, 2)]


def test_pair_jobs_order() -> None:
    """Test that jobs run over (component, source period, target period)."""
    dims = Dims(3, 2, 10, 2)
    jobs = pair_jobs(dims, 3, 1)
    assert len(jobs) == 8
    assert jobs[0] == SspJob(0, FlatIndex.of(dims, 3, 1), FlatIndex.of(dims, 1, 1))
    assert jobs[1].target.period == 2
    assert jobs[4].component == 1


def test_ssp_job_rejects_within_farm() -> None:
    """Test that a job inside one farm is refused."""
    dims = Dims(2, 2, 10, 1)
    with pytest.raises(ContractViolationError, match="needs no scalar product"):
        SspJob(0, FlatIndex.of(dims, 1, 1), FlatIndex.of(dims, 1, 2))


def test_private_e_step_quadratic_forms(desk_dataset) -> None:
    """Test that the split aggregates reproduce every quadratic form."""
    params = random_params(desk_dataset.dims, seed=4)
    parties, bus = network(desk_dataset)
    share_params(parties, params)
    resp = private_e_step(bus, parties)
    expected = quadratic_forms(assemble(desk_dataset), params)
    for party in parties:
        np.testing.assert_allclose(party.private["e_scratch"].g, expected, rtol=1e-9, atol=1e-9)
        assert party.shared["resp"] is resp or np.array_equal(party.shared["resp"].q, resp.q)
    central = e_step(assemble(desk_dataset), params)
    np.testing.assert_allclose(resp.q, central.q, atol=1e-10)


def test_private_e_step_traffic(small_dataset) -> None:
    """Test farm 1's bytes for one E-step at M=3, T=2, I=10, J=2."""
    parties, bus = network(small_dataset)
    share_params(parties, random_params(small_dataset.dims, seed=1))
    private_e_step(bus, parties)
    # C: I·J vectors of length D=6 to two farms; S: I·J scalars to two farms
    expected = 2 * 10 * 2 * message_bytes(6) + 2 * 10 * 2 * message_bytes(1)
    assert bus.meter.party(1).upstream_bytes == expected
    assert bus.meter.party(1).downstream_bytes == expected
    assert bus.round == 2


def test_private_e_step_detects_disagreement(desk_dataset) -> None:
    """Test that parties holding different θ cannot agree on Q."""
    parties, bus = network(desk_dataset)
    share_params(parties, random_params(desk_dataset.dims, seed=1))
    parties[1].shared["params"] = random_params(desk_dataset.dims, seed=2)
    with pytest.raises(ProtocolDesyncError, match="different responsibilities"):
        private_e_step(bus, parties)


def test_private_e_step_dropout(small_dataset) -> None:
    """Test that a party dropping out aborts the step."""
    parties, bus = network(small_dataset)
    share_params(parties, random_params(small_dataset.dims, seed=1))
    bus.drop(3)
    with pytest.raises(SessionAbortError, match="party 3"):
        private_e_step(bus, parties)


def test_private_m_step_matches_centralized(desk_dataset) -> None:
    """Test one M-step against the centralized oracle."""
    prev = initialize_params(desk_dataset.dims, desk_dataset.capacities, seed=3)
    parties, bus = network(desk_dataset)
    share_params(parties, prev)
    resp = private_e_step(bus, parties)
    params = private_m_step(bus, parties, seed=3)
    expected = m_step(assemble(desk_dataset), resp, prev)
    np.testing.assert_allclose(params.weights, expected.weights, rtol=1e-12)
    np.testing.assert_allclose(params.means, expected.means, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(params.covariances, expected.covariances, rtol=1e-8, atol=1e-10)
    for party in parties:
        assert party.shared["params"].same_as(params)


def test_private_m_step_ssp_batches(small_dataset) -> None:
    """Test the scalar-product count and per-pair bytes of one M-step."""
    dims = small_dataset.dims
    parties, bus = network(small_dataset)
    share_params(parties, initialize_params(dims, small_dataset.capacities, seed=1))
    private_e_step(bus, parties)
    start = len(bus.transcript)
    private_m_step(bus, parties, seed=1)
    messages = bus.transcript[start:]
    sm = [m for m in messages if m.tag.startswith("m/ssp/") and m.tag.endswith("/sm")]
    assert len(sm) == count_ssp_jobs(dims) == 24
    pair_bytes = sum(m.nbytes for m in messages if m.tag.startswith("m/ssp/2-1/"))
    jobs = dims.num_components * dims.num_periods**2
    assert pair_bytes == jobs * (message_bytes(10) + message_bytes(1 + 5) + message_bytes(1))
    assert {m.sender for m in sm} == {2, 3}


def test_private_m_step_ssp_bytes_scale_with_obs() -> None:
    """Test that scalar-product traffic grows linearly with I."""
    totals = []
    for num_obs in (20, 40):
        dims = Dims(2, 2, num_obs, 1)
        dataset = synth_generate(dims, [1.0, 1.0], 0.5, 0.5, seed=0)
        parties, bus = network(dataset)
        share_params(parties, initialize_params(dims, dataset.capacities, seed=0))
        private_e_step(bus, parties)
        start = len(bus.transcript)
        private_m_step(bus, parties, seed=0)
        totals.append(sum(m.nbytes for m in bus.transcript[start:] if "/ssp/" in m.tag))
    # sm grows by 8·20 bytes, sn by 8·10 bytes per job
    assert totals[1] - totals[0] == 4 * (8 * 20 + 8 * 10)


def test_private_m_step_reseeds_like_centralized(desk_dataset) -> None:
    """Test the reseed broadcast against the centralized reseed."""
    data = assemble(desk_dataset)
    prev = initialize_params(desk_dataset.dims, desk_dataset.capacities, seed=5)
    central = e_step(data, prev)
    q = np.zeros_like(central.q)
    q[:, 0] = 1.0
    forced = Responsibilities(q, central.row_log_density)

    parties, bus = network(desk_dataset)
    share_params(parties, prev)
    for party in parties:
        party.shared["resp"] = forced
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        params = private_m_step(bus, parties, seed=5)
        expected = m_step(data, forced, prev)
    categories = {w.category for w in caught}
    assert PrivacyWarning in categories
    assert EmptyComponentWarning in categories
    assert any(m.tag.startswith("m/reseed/") for m in bus.transcript)
    np.testing.assert_allclose(params.means, expected.means, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(params.covariances, expected.covariances, rtol=1e-8, atol=1e-10)


def test_fit_distributed_matches_centralized(desk_dataset) -> None:
    """Test that the distributed fit reproduces the centralized fit."""
    dims = desk_dataset.dims
    parties, bus = network(desk_dataset, capture="meter")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_distributed(bus, parties, 2, seed=42, tol=1e-8, max_iter=5)
        init = initialize_params(dims, desk_dataset.capacities, seed=42)
        central = fit_centralized(assemble(desk_dataset), 2, init, tol=1e-8, max_iter=5)
    assert fit.n_iter == central.n_iter
    np.testing.assert_allclose(fit.loglik_trace, central.loglik_trace, rtol=1e-10)
    np.testing.assert_allclose(fit.params.weights, central.params.weights, rtol=1e-9)
    np.testing.assert_allclose(fit.params.means, central.params.means, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(
        fit.params.covariances, central.params.covariances, rtol=1e-7, atol=1e-9
    )
    assert fit.traffic.is_conserved()
    assert len(fit.summaries) == len(fit.loglik_trace)


def test_fit_distributed_summaries(small_dataset) -> None:
    """Test that summaries are per farm 1 and add up to its total traffic."""
    parties, bus = network(small_dataset, capture="meter")
    with pytest.warns(Warning):
        fit = fit_distributed(bus, parties, 2, seed=7, tol=0.0, max_iter=2)
    assert [s.iteration for s in fit.summaries] == [0, 1, 2]
    # the first summary covers only an E-step
    assert fit.summaries[0].up_bytes == 2 * 10 * 2 * (message_bytes(6) + message_bytes(1))
    assert fit.summaries[1].up_bytes > fit.summaries[0].up_bytes
    assert sum(s.up_bytes for s in fit.summaries) == fit.traffic.party(1).upstream_bytes
    assert sum(s.down_bytes for s in fit.summaries) == fit.traffic.party(1).downstream_bytes
    assert [s.loglik for s in fit.summaries] == fit.loglik_trace


def test_fit_distributed_infinite_tol(small_dataset) -> None:
    """Test that accepting θ⁰ as is sends no messages."""
    parties, bus = network(small_dataset)
    fit = fit_distributed(bus, parties, 2, seed=1, tol=math.inf)
    assert fit.n_iter == 0
    assert fit.traffic.total_bytes == 0
    assert bus.transcript == []
    assert fit.params.same_as(initialize_params(small_dataset.dims, small_dataset.capacities, 1))


def test_fit_distributed_single_farm() -> None:
    """Test that one farm fits locally with zero messages."""
    dims = Dims(1, 3, 50, 2)
    dataset = synth_generate(dims, [2.0], 0.7, 0.0, seed=2)
    parties, bus = network(dataset)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_distributed(bus, parties, 2, seed=2, tol=1e-6, max_iter=20)
        init = initialize_params(dims, dataset.capacities, seed=2)
        central = fit_centralized(assemble(dataset), 2, init, tol=1e-6, max_iter=20)
    assert bus.message_count == 0
    assert fit.params.same_as(central.params)


def test_fit_distributed_deterministic(small_dataset) -> None:
    """Test that two runs with the same seed agree bit for bit."""
    runs = []
    for _ in range(2):
        parties, bus = network(small_dataset)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_distributed(bus, parties, 2, seed=11, tol=0.0, max_iter=2)
        runs.append((fit, bus.lines()))
    assert runs[0][0].params.same_as(runs[1][0].params)
    assert runs[0][1] == runs[1][1]


def test_fit_distributed_transcript_hygiene(small_dataset) -> None:
    """Test that no transmitted element equals any raw observation of any farm."""
    parties, bus = network(small_dataset)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit_distributed(bus, parties, 2, seed=3, tol=0.0, max_iter=1)
    raw = {float(v) for p in parties for v in np.ravel(p.data)}
    prefixes = set()
    for message in bus.transcript:
        assert "," not in message.tag
        prefixes.add("/".join(message.tag.split("/")[1:3]))
        if "/reseed/" in message.tag:
            continue
        payload = np.ravel(np.asarray(message.payload, dtype=float))
        leaked = [v for v in payload.tolist() if v in raw]
        assert not leaked, f"{message.tag} carries raw values {leaked}"
    assert {"e/C", "e/S", "m/local", "m/cross"} <= prefixes


def test_fit_distributed_batch_mask_scope_warns(small_dataset) -> None:
    """Test that sharing one mask per batch is flagged."""
    parties, bus = network(small_dataset)
    config = dataclasses.replace(PipelineConfig(), ssp_mask_scope="batch")
    with pytest.warns(PrivacyWarning, match="ssp_mask_scope"):
        fit_distributed(bus, parties, 2, seed=1, tol=math.inf, config=config)


def test_fit_distributed_rejects_mismatches(small_dataset) -> None:
    """Test the J and bus-membership preconditions."""
    parties, bus = network(small_dataset)
    with pytest.raises(ContractViolationError, match="fit asked for J=3"):
        fit_distributed(bus, parties, 3, seed=1)
    with pytest.raises(ContractViolationError, match="bus connects"):
        fit_distributed(Bus([1, 2]), parties, 2, seed=1)
