"""Path utilities for data and output directories and files."""

import os
from pathlib import Path

DATA_DIR_ENV = "VPGMM_DATA_DIR"


def get_project_root() -> Path:
    """Get the project root directory.

    Assumes this file is in src/vpgmm/utils/ and project root is 3 levels up.

    Returns:
        Path to project root directory
    """
    return Path(__file__).parent.parent.parent.parent


def get_data_dir(explicit: Path | str | None = None) -> Path:
    """Get the data directory path.

    Resolution order: ``explicit``, then ``$VPGMM_DATA_DIR``, then ``<root>/data``.

    Args:
        explicit: Directory given on the command line or in a config file

    Returns:
        Path to data directory
    """
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return get_project_root() / "data"


def get_outputs_dir() -> Path:
    """Get the outputs directory path.

    Returns:
        Path to outputs directory
    """
    return get_project_root() / "outputs"


def get_slice_path(data_dir: Path, farm: int) -> Path:
    """Path of farm ``farm``'s CSV file, ``wf_<m>.csv``."""
    return Path(data_dir) / f"wf_{farm}.csv"


def get_manifest_path(data_dir: Path) -> Path:
    return Path(data_dir) / "manifest.json"


def get_forecast_path(out_dir: Path, farm: int, oracle: bool = False) -> Path:
    """Path of the forecast CSV for ``farm`` (``forecast_wf_<m>.csv``)."""
    prefix = "forecast_oracle" if oracle else "forecast"
    return Path(out_dir) / f"{prefix}_wf_{farm}.csv"


def ensure_dir_exists(path: Path) -> None:
    """Ensure that a directory exists, creating it if necessary.

    Args:
        path: Path to the directory
    """
    path.mkdir(parents=True, exist_ok=True)
