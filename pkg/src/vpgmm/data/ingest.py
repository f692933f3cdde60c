"""Per-farm CSV files and the dataset manifest."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from vpgmm.data.slices import FullDataset, VerticalSlice
from vpgmm.domain.models import Dims
from vpgmm.errors import ContractViolationError, DataFormatError
from vpgmm.utils.paths import get_manifest_path, get_slice_path

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class DatasetManifest:
    """Metadata written next to the per-farm CSV files.

    Attributes:
        dims: Problem dimensions (J is the number of components to fit)
        seed: Seed used for generation and shared initialization
        capacities: Per-farm capacities in MW
        temporal_corr: Generator ρ_t
        spatial_corr: Generator ρ_s
    """

    dims: Dims
    seed: int
    capacities: tuple[float, ...]
    temporal_corr: float = 0.0
    spatial_corr: float = 0.0


def load_slice_csv(path: Path, farm: int, capacity: float | None = None) -> VerticalSlice:
    """Load one farm's slice from a ``i,t1,...,tT`` CSV file.

    Row and column numbers in error messages are 1-based file coordinates: the
    header is row 1 and the ``i`` column is column 1.

    Args:
        path: Path to the CSV file
        farm: Farm id m
        capacity: Capacity in MW; values above it are rejected. Defaults to the
            observed maximum

    Returns:
        The farm's vertical slice

    Raises:
        FileNotFoundError: If the file does not exist
        DataFormatError: If the header, a row or a cell is malformed or out of range
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Slice file not found: {path}")

    with open(path, encoding="utf-8") as f:
        header_line = f.readline().strip()
        if not header_line:
            raise DataFormatError(f"{path}: missing header row")
        headers = [h.strip() for h in header_line.split(",")]
        T = len(headers) - 1
        expected = ["i"] + [f"t{t}" for t in range(1, T + 1)]
        if T < 1 or headers != expected:
            raise DataFormatError(
                f"{path}: header must be 'i,t1,...,tT', found '{header_line}'"
            )

        rows = []
        for row_no, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != T + 1:
                raise DataFormatError(
                    f"{path}: row {row_no} has {len(cells)} cells, expected {T + 1}"
                )
            if cells[0] != str(len(rows) + 1):
                raise DataFormatError(
                    f"{path}: row {row_no}, column 1: expected observation index "
                    f"{len(rows) + 1}, found '{cells[0]}'"
                )
            values = []
            for col_no, cell in enumerate(cells[1:], start=2):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {row_no}, column {col_no}: non-numeric value '{cell}'"
                    ) from None
                if not np.isfinite(value) or value < 0:
                    raise DataFormatError(
                        f"{path}: row {row_no}, column {col_no}: value {cell} must be finite "
                        "and non-negative"
                    )
                if capacity is not None and value > capacity:
                    raise DataFormatError(
                        f"{path}: row {row_no}, column {col_no}: value {cell} exceeds "
                        f"capacity {capacity}"
                    )
                values.append(value)
            rows.append(values)

    if not rows:
        raise DataFormatError(f"{path}: no data rows found")
    matrix = np.array(rows)
    if capacity is None:
        capacity = float(matrix.max()) if matrix.max() > 0 else 1.0
    return VerticalSlice(farm, matrix, capacity)


def write_slice_csv(piece: VerticalSlice, path: Path) -> None:
    """Write a slice as ``i,t1,...,tT`` with 17 significant digits."""
    frame = pd.DataFrame(
        piece.values, columns=[f"t{t}" for t in range(1, piece.num_periods + 1)]
    )
    frame.insert(0, "i", np.arange(1, piece.num_obs + 1))
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    """Write the dataset manifest as JSON."""
    dims = manifest.dims
    payload = {
        "version": MANIFEST_VERSION,
        "num_farms": dims.num_farms,
        "num_periods": dims.num_periods,
        "num_obs": dims.num_obs,
        "num_components": dims.num_components,
        "seed": manifest.seed,
        "capacities": [float(c) for c in manifest.capacities],
        "temporal_corr": manifest.temporal_corr,
        "spatial_corr": manifest.spatial_corr,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_manifest(path: Path) -> DatasetManifest:
    """Read a manifest written by :func:`write_manifest`.

    Raises:
        FileNotFoundError: If the file does not exist
        DataFormatError: If a field is missing or malformed
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        if payload.get("version") != MANIFEST_VERSION:
            raise DataFormatError(f"{path}: unsupported manifest version {payload.get('version')}")
        dims = Dims(
            int(payload["num_farms"]),
            int(payload["num_periods"]),
            int(payload["num_obs"]),
            int(payload["num_components"]),
        )
        capacities = tuple(float(c) for c in payload["capacities"])
        if len(capacities) != dims.num_farms:
            raise DataFormatError(
                f"{path}: {len(capacities)} capacities for {dims.num_farms} farms"
            )
        return DatasetManifest(
            dims,
            int(payload["seed"]),
            capacities,
            float(payload.get("temporal_corr", 0.0)),
            float(payload.get("spatial_corr", 0.0)),
        )
    except (KeyError, TypeError, json.JSONDecodeError, ContractViolationError) as e:
        raise DataFormatError(f"{path}: invalid manifest: {e}") from e


def write_dataset(dataset: FullDataset, manifest: DatasetManifest, data_dir: Path) -> list[Path]:
    """Write every slice as ``wf_<m>.csv`` plus ``manifest.json`` into ``data_dir``.

    Returns:
        Paths written, slices first
    """
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for piece in dataset.slices:
        path = get_slice_path(data_dir, piece.farm)
        write_slice_csv(piece, path)
        written.append(path)
    manifest_path = get_manifest_path(data_dir)
    write_manifest(manifest, manifest_path)
    written.append(manifest_path)
    return written


def load_dataset(data_dir: Path) -> tuple[DatasetManifest, FullDataset]:
    """Load ``manifest.json`` and every ``wf_<m>.csv`` from ``data_dir``.

    Raises:
        DataFormatError: If a slice disagrees with the manifest
    """
    data_dir = Path(data_dir)
    manifest = read_manifest(get_manifest_path(data_dir))
    slices = []
    for m, capacity in enumerate(manifest.capacities, start=1):
        path = get_slice_path(data_dir, m)
        piece = load_slice_csv(path, m, capacity)
        if piece.values.shape != (manifest.dims.num_obs, manifest.dims.num_periods):
            raise DataFormatError(
                f"{path}: shape {piece.values.shape} disagrees with manifest "
                f"{(manifest.dims.num_obs, manifest.dims.num_periods)}"
            )
        slices.append(piece)
    return manifest, FullDataset(manifest.dims, tuple(slices))
