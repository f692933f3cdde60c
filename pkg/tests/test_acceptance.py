"""Larger end-to-end runs: equivalence across seeds and traffic direction."""

import dataclasses
import warnings

import numpy as np
import pytest

from tests.conftest import network
from vpgmm.data.slices import assemble
from vpgmm.data.synth import synth_generate
from vpgmm.domain.config import PipelineConfig
from vpgmm.domain.models import Dims, GmmParams
from vpgmm.gmm.em import e_step, empty_components, fit_centralized, initialize_params
from vpgmm.pdem.private_em import fit_distributed
from vpgmm.smc.traffic import centralized_traffic, table_one
from vpgmm.smc.wire import message_bytes

DESK = Dims(num_farms=3, num_periods=4, num_obs=200, num_components=2)


def assert_same_params(ours: GmmParams, theirs: GmmParams, rtol: float, label: str) -> None:
    np.testing.assert_allclose(ours.weights, theirs.weights, rtol=rtol, err_msg=label)
    np.testing.assert_allclose(ours.means, theirs.means, rtol=rtol, atol=1e-12, err_msg=label)
    np.testing.assert_allclose(
        ours.covariances, theirs.covariances, rtol=rtol, atol=1e-12, err_msg=label
    )


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_equivalence_first_iterations(seed: int) -> None:
    """Test that both fits follow the same trajectory for ten iterations."""
    dataset = synth_generate(DESK, [1.0, 1.0, 1.0], 0.8, 0.5, seed=100 + seed)
    parties, bus = network(dataset, capture="meter")
    private: list[GmmParams] = []
    plain: list[GmmParams] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_distributed(
            bus, parties, 2, seed=seed, tol=0.0, max_iter=10,
            callback=lambda k, params: private.append(params),
        )
        init = initialize_params(DESK, dataset.capacities, seed=seed)
        central = fit_centralized(
            assemble(dataset), 2, init, tol=0.0, max_iter=10,
            callback=lambda k, params: plain.append(params),
        )
    np.testing.assert_allclose(fit.loglik_trace, central.loglik_trace, rtol=1e-10)
    assert len(private) == len(plain) == 10
    for k, (ours, theirs) in enumerate(zip(private, plain), start=1):
        assert_same_params(ours, theirs, rtol=1e-10, label=f"iteration {k}")


@pytest.mark.slow
def test_equivalence_at_convergence(desk_dataset) -> None:
    """Test that both fits stop on the same iteration with the same parameters."""
    parties, bus = network(desk_dataset, capture="meter")
    init = initialize_params(DESK, desk_dataset.capacities, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_distributed(bus, parties, 2, seed=0, tol=1e-8, max_iter=500)
        central = fit_centralized(assemble(desk_dataset), 2, init, tol=1e-8, max_iter=500)
    assert central.converged and fit.converged
    assert fit.n_iter == central.n_iter
    assert_same_params(fit.params, central.params, rtol=1e-8, label="converged")


@pytest.mark.slow
def test_traffic_direction() -> None:
    """Test that the private fit costs far more than gathering and farm 1 mostly receives."""
    dims = Dims(num_farms=4, num_periods=3, num_obs=60, num_components=2)
    dataset = synth_generate(dims, [1.0] * 4, 0.8, 0.5, seed=9)
    config = dataclasses.replace(PipelineConfig(), ssp_mask_scope="batch", tol=0.0)
    parties, bus = network(dataset, capture="meter")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_distributed(bus, parties, 2, seed=9, max_iter=2, config=config)
    baseline = centralized_traffic(dims)
    assert fit.traffic.total_bytes >= 10 * baseline.total_bytes
    table = table_one(fit.traffic, baseline, farm=1)
    assert table.loc["Downstream", "proposed_MB"] > table.loc["Upstream", "proposed_MB"]
    assert (table["ratio"] > 1.0).all()


@pytest.mark.slow
def test_traffic_closed_form_full_scale() -> None:
    """Test farm 1's per-iteration bytes at M=10, T=24, I=1000, J=3 against the message counts."""
    dims = Dims(num_farms=10, num_periods=24, num_obs=1000, num_components=3)
    dataset = synth_generate(dims, [1.0] * 10, 0.8, 0.5, seed=42)
    config = dataclasses.replace(PipelineConfig(), ssp_mask_scope="batch", tol=0.0)
    parties, bus = network(dataset, capture="meter")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_distributed(bus, parties, 3, seed=42, max_iter=1, config=config)
        init = initialize_params(dims, dataset.capacities, seed=42)
        reseeded = len(empty_components(e_step(assemble(dataset), init).totals))

    M, T, I, J, D = 10, 24, 1000, 3, 240
    others = M - 1
    e_bytes = I * J * others * (message_bytes(D) + message_bytes(1))
    jobs = J * T * T
    local = J * others * message_bytes(T + T * (T + 1) // 2)
    reseed = reseeded * others * message_bytes(T)
    # farm 1 answers every pair's scalar products and only receives cross entries
    m_up = local + others * jobs * message_bytes(1 + I // 2) + reseed
    m_down = (
        local
        + others * jobs * (message_bytes(I) + message_bytes(1))
        + others * (M - 2) // 2 * J * message_bytes(T * T)
        + reseed
    )
    assert [(s.up_bytes, s.down_bytes) for s in fit.summaries] == [
        (e_bytes, e_bytes),
        (m_up + e_bytes, m_down + e_bytes),
    ]
    baseline = centralized_traffic(dims)
    assert fit.traffic.total_bytes >= 10 * baseline.total_bytes
    table = table_one(fit.traffic, baseline, farm=1)
    assert table.loc["Downstream", "proposed_MB"] > table.loc["Upstream", "proposed_MB"]
