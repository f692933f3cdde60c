"""Domain models and configuration."""

from vpgmm.domain.config import PipelineConfig, get_config, resolve_config, set_config
from vpgmm.domain.models import ConditionalGmm, Dims, FlatIndex, GmmParams, Responsibilities

__all__ = [
    "ConditionalGmm",
    "Dims",
    "FlatIndex",
    "GmmParams",
    "PipelineConfig",
    "Responsibilities",
    "get_config",
    "resolve_config",
    "set_config",
]
