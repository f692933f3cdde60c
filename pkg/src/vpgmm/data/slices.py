"""Vertically partitioned observation data."""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from vpgmm.domain.models import Dims
from vpgmm.errors import ContractViolationError


@dataclass(frozen=True, eq=False)
class VerticalSlice:
    """One wind farm's private I × T block of outputs.

    Attributes:
        farm: Farm id m (1-based)
        values: Outputs in MW, shape (I, T)
        capacity: Installed capacity in MW; every value lies in [0, capacity]
    """

    farm: int
    values: np.ndarray
    capacity: float

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ContractViolationError(f"slice values must be 2-D, got shape {values.shape}")
        if self.capacity <= 0:
            raise ContractViolationError(f"capacity must be positive, got {self.capacity}")
        if values.size and (values.min() < 0 or values.max() > self.capacity):
            raise ContractViolationError(
                f"farm {self.farm}: values must lie in [0, {self.capacity}], "
                f"got range [{values.min()}, {values.max()}]"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def num_obs(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_periods(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True, eq=False)
class FullDataset:
    """All farms' slices of one dataset, joined by observation index."""

    dims: Dims
    slices: tuple[VerticalSlice, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "slices", tuple(self.slices))
        if len(self.slices) != self.dims.num_farms:
            raise ContractViolationError(
                f"expected {self.dims.num_farms} slices, got {len(self.slices)}"
            )
        expected = (self.dims.num_obs, self.dims.num_periods)
        for m, piece in enumerate(self.slices, start=1):
            if piece.farm != m:
                raise ContractViolationError(f"slice {m} belongs to farm {piece.farm}")
            if piece.values.shape != expected:
                raise ContractViolationError(
                    f"farm {m}: slice shape {piece.values.shape}, expected {expected}"
                )

    @property
    def capacities(self) -> np.ndarray:
        return np.array([piece.capacity for piece in self.slices])


def assemble(dataset: FullDataset | Sequence[VerticalSlice]) -> np.ndarray:
    """Join slices into the I × D matrix in farm-major layout.

    This gathers every farm's raw data in one place; only the centralized oracle
    and tests call it.

    Raises:
        ContractViolationError: If the slices have different row counts
    """
    slices = dataset.slices if isinstance(dataset, FullDataset) else tuple(dataset)
    if not slices:
        raise ContractViolationError("cannot assemble zero slices")
    rows = {piece.num_obs for piece in slices}
    if len(rows) != 1:
        raise ContractViolationError(f"slices have mismatched row counts {sorted(rows)}")
    return np.hstack([piece.values for piece in slices])


def partition(matrix: np.ndarray, dims: Dims, capacities: Sequence[float]) -> FullDataset:
    """Split an I × D matrix into per-farm slices; inverse of :func:`assemble`."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (dims.num_obs, dims.dim):
        raise ContractViolationError(
            f"matrix must have shape {(dims.num_obs, dims.dim)}, got {matrix.shape}"
        )
    capacities = np.asarray(capacities, dtype=float)
    if capacities.shape != (dims.num_farms,):
        raise ContractViolationError(f"need {dims.num_farms} capacities, got {capacities.shape}")
    slices = tuple(
        VerticalSlice(m, matrix[:, dims.block(m)], float(capacities[m - 1]))
        for m in range(1, dims.num_farms + 1)
    )
    return FullDataset(dims, slices)
