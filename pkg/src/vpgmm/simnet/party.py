"""Party state containers for the in-process runtime."""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from vpgmm.data.slices import FullDataset, VerticalSlice
from vpgmm.domain.models import Dims


@dataclass(eq=False)
class PartyRuntime:
    """One wind farm's runtime state.

    The private slice is only read by that party's own compute steps; protocols
    receive derived values, never the slice itself.

    Attributes:
        party_id: Farm id m (1-based)
        slice: The farm's private observations
        dims: Public problem dimensions
        capacities: Public per-farm capacities
        shared: Values every party holds identically (θ, Q, scratch)
        private: Values only this party holds (current output, own forecast)
    """

    party_id: int
    slice: VerticalSlice = field(repr=False)
    dims: Dims
    capacities: np.ndarray = field(repr=False)
    shared: dict[str, Any] = field(default_factory=dict, repr=False)
    private: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def data(self) -> np.ndarray:
        """The private I × T block."""
        return self.slice.values


def make_parties(dataset: FullDataset) -> list[PartyRuntime]:
    """One runtime per farm, in farm order."""
    capacities = dataset.capacities
    return [
        PartyRuntime(piece.farm, piece, dataset.dims, capacities.copy())
        for piece in dataset.slices
    ]
