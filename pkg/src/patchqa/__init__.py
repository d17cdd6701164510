"""Patch-based no-reference quality assessment for colored point clouds.

Pipeline: sphere normalization and FPS/KNN patches, two point-set feature
branches with a patch quality head, a cross-patch transformer that rates how
well each patch agrees with the whole cloud, and weighted pooling of patch
scores into one cloud score.
"""

__version__ = "0.1.0"

from .config import Config, desk_config, full_config, load_config
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateCloudError,
    DimensionError,
    DomainError,
    ManifestError,
    ParseError,
    PatchQAError,
)
from .io import PointCloud, load_manifest, parse_ply, read_ply, save_ply, write_ply

__all__ = [
    "CheckpointError", "Config", "ConfigError", "DegenerateCloudError", "DimensionError",
    "DomainError", "ManifestError", "ParseError", "PatchQAError", "PointCloud", "desk_config",
    "full_config", "load_config", "load_manifest", "parse_ply", "read_ply", "save_ply",
    "write_ply",
]
