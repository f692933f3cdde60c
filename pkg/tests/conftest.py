"""Shared fixtures: small synthetic datasets, random parameters and simulated networks."""

import numpy as np
import pytest

from vpgmm.data.slices import FullDataset
from vpgmm.data.synth import synth_generate
from vpgmm.domain.models import Dims, GmmParams
from vpgmm.simnet.bus import Bus
from vpgmm.simnet.party import PartyRuntime, make_parties


def random_params(dims: Dims, seed: int, scale: float = 1.0) -> GmmParams:
    """Random valid parameters with well-conditioned dense covariances."""
    rng = np.random.default_rng(seed)
    J, D = dims.num_components, dims.dim
    weights = rng.uniform(0.5, 1.5, size=J)
    weights /= weights.sum()
    means = rng.uniform(0.2, 0.8, size=(J, D)) * scale
    covariances = np.empty((J, D, D))
    for j in range(J):
        a = rng.normal(size=(D, D)) * 0.1
        covariances[j] = (a @ a.T + 0.05 * np.eye(D)) * scale**2
    return GmmParams.from_moments(weights, means, covariances)


def network(dataset: FullDataset, capture: str = "full") -> tuple[list[PartyRuntime], Bus]:
    """One runtime per farm plus a bus connecting them."""
    parties = make_parties(dataset)
    return parties, Bus.for_parties(parties, capture=capture)


def share_params(parties: list[PartyRuntime], params: GmmParams) -> None:
    for party in parties:
        party.shared["params"] = params


@pytest.fixture
def small_dims() -> Dims:
    return Dims(num_farms=3, num_periods=2, num_obs=10, num_components=2)


@pytest.fixture
def small_dataset(small_dims: Dims) -> FullDataset:
    return synth_generate(small_dims, [1.0, 2.0, 1.5], temporal_corr=0.7, spatial_corr=0.4, seed=7)


@pytest.fixture
def desk_dims() -> Dims:
    return Dims(num_farms=3, num_periods=4, num_obs=200, num_components=2)


@pytest.fixture
def desk_dataset(desk_dims: Dims) -> FullDataset:
    return synth_generate(desk_dims, [1.0, 1.0, 1.0], temporal_corr=0.8, spatial_corr=0.5, seed=42)
