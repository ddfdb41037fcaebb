"""Transcranial focused-ultrasound treatment planning toolkit.

CT-based skull extraction, hemispherical-array targeting metrics
(active elements, skull density ratio, skull thickness), HU-to-acoustic
property mapping, full-wave pressure simulation, and paired real/synthetic
CT comparison, plus a CLI and an interactive planning HTTP service.
"""

__version__ = "0.1.0"

from .volume import (
    DimensionMismatchError,
    Unit,
    Volume,
    VolumeError,
    WorldPoint,
    pad_crop_to_grid,
    read_volume,
    resample_trilinear,
    write_volume,
)

__all__ = [
    "DimensionMismatchError",
    "Unit",
    "Volume",
    "VolumeError",
    "WorldPoint",
    "pad_crop_to_grid",
    "read_volume",
    "resample_trilinear",
    "write_volume",
    "__version__",
]
