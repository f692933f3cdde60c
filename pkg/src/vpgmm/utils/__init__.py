"""Utility functions and helpers."""

from vpgmm.utils.io import (
    load_forecast_csv,
    load_params,
    save_forecast_csv,
    save_params,
    save_quantiles_csv,
)
from vpgmm.utils.paths import (
    ensure_dir_exists,
    get_data_dir,
    get_forecast_path,
    get_manifest_path,
    get_outputs_dir,
    get_project_root,
    get_slice_path,
)

__all__ = [
    "ensure_dir_exists",
    "get_data_dir",
    "get_forecast_path",
    "get_manifest_path",
    "get_outputs_dir",
    "get_project_root",
    "get_slice_path",
    "load_forecast_csv",
    "load_params",
    "save_forecast_csv",
    "save_params",
    "save_quantiles_csv",
]
