"""Vertically partitioned data: slices, synthetic generator and file ingestion."""

from vpgmm.data.ingest import (
    DatasetManifest,
    load_dataset,
    load_slice_csv,
    read_manifest,
    write_dataset,
    write_manifest,
    write_slice_csv,
)
from vpgmm.data.slices import FullDataset, VerticalSlice, assemble, partition
from vpgmm.data.synth import synth_generate

__all__ = [
    "DatasetManifest",
    "FullDataset",
    "VerticalSlice",
    "assemble",
    "load_dataset",
    "load_slice_csv",
    "partition",
    "read_manifest",
    "synth_generate",
    "write_dataset",
    "write_manifest",
    "write_slice_csv",
]
