"""3D scalar volumes on regular grids: world geometry, sampling, resampling, file I/O.

A Volume couples a (nx, ny, nz) scalar array with physical spacing in mm,
the world coordinate of the center of voxel (0, 0, 0), and an orthonormal
direction matrix. World coordinates are right-handed millimeters. Volumes
are immutable after construction, so they can be shared freely across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class Unit(str, Enum):
    HU = "HU"
    DIMENSIONLESS = "dimensionless"
    M_PER_S = "m_per_s"
    KG_PER_M3 = "kg_per_m3"
    DB_CM_MHZ = "dB_cm_MHz"
    PA = "Pa"


class VolumeError(ValueError):
    """Invalid volume construction or incompatible volume operation."""


class DimensionMismatchError(VolumeError):
    pass


@dataclass(frozen=True)
class WorldPoint:
    """A point in world coordinates (mm)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError(f"world point components must be finite, got {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @staticmethod
    def from_array(a) -> "WorldPoint":
        return WorldPoint(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "WorldPoint") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


def _as_triple(v, name: str) -> tuple:
    t = tuple(v)
    if len(t) != 3:
        raise VolumeError(f"{name} must have 3 components, got {len(t)}")
    return t


class Volume:
    """Immutable 3D scalar grid with world-space placement.

    Parameters
    ----------
    data : array_like
        Scalar values, shape (nx, ny, nz). Stored as float32. The logical
        linear ordering of the grid is x-fastest (Fortran order), which is
        how payloads are serialized.
    spacing : triple of float
        Voxel spacing in mm, all > 0.
    origin : triple of float
        World coordinates (mm) of the center of voxel (0, 0, 0).
    direction : 3x3 array, optional
        Orthonormal voxel-axis directions (columns = x/y/z axes). Identity
        by default.
    unit : Unit
        Physical unit of the samples.

    The volume takes ownership of the data buffer and marks it read-only
    (volumes are shared freely across threads); pass a copy if the caller
    needs to keep writing to the array.
    """

    def __init__(self, data, spacing, origin=(0.0, 0.0, 0.0), direction=None, unit: Unit = Unit.DIMENSIONLESS):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 3:
            raise VolumeError(f"volume data must be 3-D, got shape {arr.shape}")
        if any(n < 1 for n in arr.shape):
            raise VolumeError(f"all dims must be >= 1, got {arr.shape}")
        spacing = tuple(float(s) for s in _as_triple(spacing, "spacing"))
        if any(s <= 0 for s in spacing):
            raise VolumeError(f"spacing must be > 0, got {spacing}")
        origin = tuple(float(o) for o in _as_triple(origin, "origin"))
        if direction is None:
            direction = np.eye(3)
        direction = np.array(direction, dtype=np.float64)  # copied: 3x3, cheap
        if direction.shape != (3, 3):
            raise VolumeError("direction must be a 3x3 matrix")
        if abs(abs(np.linalg.det(direction)) - 1.0) > 1e-9 or not np.allclose(
            direction.T @ direction, np.eye(3), atol=1e-9
        ):
            raise VolumeError("direction must be orthonormal (det +/-1 within 1e-9)")

        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        direction.flags.writeable = False
        self._data = arr
        self._spacing = spacing
        self._origin = origin
        self._direction = direction
        self.unit = Unit(unit)

    # -- basic accessors ----------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dims(self) -> tuple:
        return self._data.shape

    @property
    def spacing(self) -> tuple:
        return self._spacing

    @property
    def origin(self) -> tuple:
        return self._origin

    @property
    def direction(self) -> np.ndarray:
        return self._direction

    @property
    def is_axis_aligned(self) -> bool:
        return bool(np.allclose(self._direction, np.eye(3), atol=1e-12))

    def with_data(self, data, unit=None) -> "Volume":
        """New volume on the same grid with different samples."""
        return Volume(data, self._spacing, self._origin, self._direction,
                      self.unit if unit is None else unit)

    def same_grid(self, other: "Volume", atol=1e-6) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self._spacing, other._spacing, atol=atol)
            and np.allclose(self._origin, other._origin, atol=atol)
            and np.allclose(self._direction, other._direction, atol=atol)
        )

    def __repr__(self):
        return f"Volume(dims={self.dims}, spacing={self._spacing}, unit={self.unit.value})"

    # -- geometry -----------------------------------------------------------

    def voxel_to_world(self, idx) -> np.ndarray:
        """Map (continuous) voxel indices, shape (..., 3), to world mm."""
        idx = np.asarray(idx, dtype=np.float64)
        offs = idx * np.asarray(self._spacing)
        return np.asarray(self._origin) + offs @ self._direction.T

    def world_to_voxel(self, pts) -> np.ndarray:
        """Map world points, shape (..., 3), to continuous voxel indices."""
        pts = np.asarray(pts, dtype=np.float64)
        rel = (pts - np.asarray(self._origin)) @ self._direction
        return rel / np.asarray(self._spacing)

    def center_world(self) -> WorldPoint:
        c = (np.asarray(self.dims, dtype=np.float64) - 1.0) / 2.0
        return WorldPoint.from_array(self.voxel_to_world(c))

    def contains_world(self, pts) -> np.ndarray:
        """True where points fall inside the node span of the grid."""
        ijk = np.atleast_2d(self.world_to_voxel(pts))
        hi = np.asarray(self.dims) - 1
        return np.all((ijk >= 0) & (ijk <= hi), axis=-1)

    # -- sampling -----------------------------------------------------------

    def sample_trilinear(self, pts) -> np.ndarray:
        """Trilinear interpolation at world points, shape (..., 3).

        Samples outside the node span blend toward a zero background
        (equivalent to interpolating a zero-padded grid); points more than
        one voxel outside return exactly 0.
        """
        pts = np.asarray(pts, dtype=np.float64)
        shp = pts.shape[:-1]
        ijk = self.world_to_voxel(pts.reshape(-1, 3))
        out = trilinear_on_grid(self._data, ijk)
        return out.reshape(shp)


def trilinear_on_grid(data: np.ndarray, ijk: np.ndarray) -> np.ndarray:
    """Trilinear interpolation in index space with zero padding outside."""
    n = np.asarray(data.shape)
    i0 = np.floor(ijk).astype(np.int64)
    f = (ijk - i0).astype(np.float64)
    out = np.zeros(len(ijk), dtype=np.float64)
    for dx in (0, 1):
        wx = (1.0 - f[:, 0]) if dx == 0 else f[:, 0]
        cx = i0[:, 0] + dx
        okx = (cx >= 0) & (cx < n[0])
        for dy in (0, 1):
            wy = (1.0 - f[:, 1]) if dy == 0 else f[:, 1]
            cy = i0[:, 1] + dy
            oky = (cy >= 0) & (cy < n[1])
            for dz in (0, 1):
                wz = (1.0 - f[:, 2]) if dz == 0 else f[:, 2]
                cz = i0[:, 2] + dz
                ok = okx & oky & (cz >= 0) & (cz < n[2])
                vals = data[cx.clip(0, n[0] - 1), cy.clip(0, n[1] - 1), cz.clip(0, n[2] - 1)]
                out += np.where(ok, wx * wy * wz * vals, 0.0)
    return out


# -- grid operations ---------------------------------------------------------


def resample_trilinear(vol: Volume, new_spacing) -> Volume:
    """Resample onto an axis-aligned grid with the given spacing.

    The output grid keeps the input origin and spans the same node extent
    (the box between the first and last voxel centers); each output voxel
    is the trilinear interpolation of the input at its world center.
    Degenerate axes (a single voxel) are carried through unchanged.
    """
    new_spacing = tuple(float(s) for s in _as_triple(new_spacing, "new_spacing"))
    if any(s <= 0 for s in new_spacing):
        raise VolumeError(f"new_spacing must be > 0, got {new_spacing}")
    dims = vol.dims
    n_out = tuple(
        1 if dims[a] == 1 else int(np.floor((dims[a] - 1) * vol.spacing[a] / new_spacing[a] + 1e-9)) + 1
        for a in range(3)
    )
    # output voxel -> input continuous index, axis by axis (grids share origin
    # and direction, so the mapping is a pure per-axis scale)
    scale = [new_spacing[a] / vol.spacing[a] for a in range(3)]
    ii, jj, kk = np.meshgrid(
        np.arange(n_out[0]) * scale[0],
        np.arange(n_out[1]) * scale[1],
        np.arange(n_out[2]) * scale[2],
        indexing="ij",
    )
    ijk = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=-1)
    vals = trilinear_on_grid(vol.data, ijk).reshape(n_out)
    return Volume(vals, new_spacing, vol.origin, vol.direction, vol.unit)


def pad_crop_to_grid(vol: Volume, target_dims, center: WorldPoint) -> Volume:
    """Pad (with 0) and/or crop so the output has target_dims.

    The input voxel nearest to `center` lands on the output's center voxel
    (index dims // 2); voxels outside the input are 0. Pure index
    arithmetic: pad followed by crop with the same arguments is the
    identity, bit exactly.
    """
    target_dims = tuple(int(d) for d in _as_triple(target_dims, "target_dims"))
    if any(d < 1 for d in target_dims):
        raise VolumeError(f"target_dims must be >= 1, got {target_dims}")
    # round-half-up keeps the snap consistent under integer index shifts,
    # which makes pad followed by crop an exact inverse
    c_in = np.floor(vol.world_to_voxel(center.as_array()) + 0.5).astype(np.int64)
    c_out = np.asarray(target_dims) // 2
    offset = c_in - c_out  # input index of output voxel (0, 0, 0)

    out = np.zeros(target_dims, dtype=np.float32)
    src_lo = np.maximum(offset, 0)
    src_hi = np.minimum(offset + np.asarray(target_dims), np.asarray(vol.dims))
    if np.all(src_hi > src_lo):
        dst_lo = src_lo - offset
        dst_hi = src_hi - offset
        out[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = vol.data[
            src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]
        ]
    new_origin = vol.voxel_to_world(offset.astype(np.float64))
    return Volume(out, vol.spacing, tuple(new_origin), vol.direction, vol.unit)


# -- file I/O -----------------------------------------------------------------
#
# Two on-disk forms: NIfTI-1 (.nii) for interchange, and an internal raw
# format (flat little-endian float32 payload in x-fastest order plus a
# UTF-8 key=value sidecar header) for fast intermediate caching.

RAW_SUFFIX = ".raw"
RAW_HEADER_SUFFIX = ".raw.hdr"


class FileFormatError(VolumeError):
    pass


def write_volume(path, vol: Volume, dtype=None) -> None:
    """Write a volume; format chosen by extension (.nii or .raw)."""
    path = Path(path)
    if path.suffix == ".nii":
        from . import nifti

        nifti.write_nifti(path, vol, dtype=dtype)
    elif path.name.endswith(RAW_SUFFIX):
        _write_raw(path, vol)
    else:
        raise FileFormatError(f"unsupported volume extension: {path.name} (expected .nii or .raw)")


def read_volume(path) -> Volume:
    """Read a volume written by write_volume (or any NIfTI-1 .nii file)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"volume file not found: {path}")
    if path.suffix == ".nii":
        from . import nifti

        return nifti.read_nifti(path)
    if path.name.endswith(RAW_SUFFIX):
        return _read_raw(path)
    raise FileFormatError(f"unsupported volume extension: {path.name} (expected .nii or .raw)")


def _write_raw(path: Path, vol: Volume) -> None:
    payload = np.asarray(vol.data, dtype="<f4").ravel(order="F")
    path.write_bytes(payload.tobytes())
    lines = [
        "format=tfusplan-raw-1",
        "dims=%d %d %d" % vol.dims,
        "spacing=%.17g %.17g %.17g" % vol.spacing,
        "origin=%.17g %.17g %.17g" % vol.origin,
        "direction=" + " ".join("%.17g" % v for v in vol.direction.ravel()),
        "unit=" + vol.unit.value,
    ]
    Path(str(path) + ".hdr").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_raw(path: Path) -> Volume:
    hdr_path = Path(str(path) + ".hdr")
    if not hdr_path.exists():
        raise FileFormatError(f"missing sidecar header {hdr_path}")
    fields = {}
    for line in hdr_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        fields[key] = value
    try:
        dims = tuple(int(v) for v in fields["dims"].split())
        spacing = tuple(float(v) for v in fields["spacing"].split())
        origin = tuple(float(v) for v in fields["origin"].split())
        direction = np.array([float(v) for v in fields["direction"].split()]).reshape(3, 3)
        unit = Unit(fields["unit"])
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"bad raw header {hdr_path}: {exc}") from exc
    payload = np.frombuffer(path.read_bytes(), dtype="<f4")
    if payload.size != int(np.prod(dims)):
        raise DimensionMismatchError(
            f"{path}: header dims {dims} imply {int(np.prod(dims))} voxels, payload has {payload.size}"
        )
    data = payload.reshape(dims, order="F")
    return Volume(data, spacing, origin, direction, unit)
