"""Skull extraction from CT-like volumes.

Global threshold (default 400 HU), largest 26-connected component,
morphological dilation by a discrete ball, then mask application. Also
builds the intracranial mask (the cavity enclosed by the skull) used to
restrict the pressure-maximum search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import DimensionMismatchError, Unit, Volume, VolumeError, WorldPoint

DEFAULT_THRESHOLD_HU = 400.0
DEFAULT_DILATION_MM = 2.0

_CONN26 = np.ones((3, 3, 3), dtype=bool)
_CONN6 = ndimage.generate_binary_structure(3, 1)


class EmptySkullError(VolumeError):
    """No voxel reached the extraction threshold."""


@dataclass(frozen=True)
class SkullMask:
    mask: Volume                 # 0/1, dimensionless, same grid as the source
    threshold_hu: float
    dilation_radius_mm: float

    @property
    def asbool(self) -> np.ndarray:
        return self.mask.data > 0.5

    @property
    def voxel_count(self) -> int:
        return int(np.count_nonzero(self.asbool))


def ball_offsets(radius_mm: float, spacing) -> np.ndarray:
    """Discrete ball structuring element rasterized on the voxel grid."""
    if radius_mm <= 0:
        return np.ones((1, 1, 1), dtype=bool)
    half = [int(np.floor(radius_mm / s + 1e-9)) for s in spacing]
    grids = np.meshgrid(*[np.arange(-h, h + 1) * s for h, s in zip(half, spacing)], indexing="ij")
    dist = np.sqrt(sum(g**2 for g in grids))
    return dist <= radius_mm + 1e-9


def extract_skull_mask(
    ct: Volume,
    threshold: float = DEFAULT_THRESHOLD_HU,
    dilation_radius: float = DEFAULT_DILATION_MM,
) -> SkullMask:
    if ct.unit != Unit.HU:
        raise VolumeError(f"extract_skull_mask expects a HU volume, got {ct.unit}")
    if not np.isfinite(threshold):
        raise VolumeError("threshold must be finite")
    if dilation_radius < 0:
        raise VolumeError("dilation_radius must be >= 0")
    above = ct.data >= threshold
    if not above.any():
        raise EmptySkullError(f"no voxel >= {threshold} HU; cannot extract a skull")

    labels, n = ndimage.label(above, structure=_CONN26)
    if n > 1:
        counts = np.bincount(labels.ravel())
        counts[0] = 0
        keep = int(np.argmax(counts))  # ties resolve to the lowest label, deterministically
        component = labels == keep
    else:
        component = above

    if dilation_radius > 0:
        selem = ball_offsets(dilation_radius, ct.spacing)
        component = ndimage.binary_dilation(component, structure=selem)

    mask_vol = ct.with_data(component.astype(np.float32), unit=Unit.DIMENSIONLESS)
    return SkullMask(mask_vol, float(threshold), float(dilation_radius))


def apply_mask(ct: Volume, mask: SkullMask) -> Volume:
    """Keep CT values under the mask, zero (water) elsewhere."""
    if ct.dims != mask.mask.dims:
        raise DimensionMismatchError(f"ct dims {ct.dims} != mask dims {mask.mask.dims}")
    out = np.where(mask.asbool, ct.data, np.float32(0.0)).astype(np.float32)
    return ct.with_data(out)


def intracranial_mask(skull: SkullMask, focus: WorldPoint) -> Volume:
    """Voxels of the cavity enclosed by the skull, flood-filled from the focus.

    Background (non-skull) voxels are labeled with 6-connectivity (the
    topological dual of the 26-connected skull) and the component holding
    the focus voxel is returned.
    """
    vol = skull.mask
    idx = np.round(vol.world_to_voxel(focus.as_array())).astype(int)
    if np.any(idx < 0) or np.any(idx >= np.asarray(vol.dims)):
        raise VolumeError(f"focus {focus} is outside the volume")
    bone = skull.asbool
    if bone[tuple(idx)]:
        raise VolumeError("focus lies inside the skull mask; cannot build an intracranial mask")
    labels, _ = ndimage.label(~bone, structure=_CONN6)
    inside = labels == labels[tuple(idx)]
    return vol.with_data(inside.astype(np.float32), unit=Unit.DIMENSIONLESS)
