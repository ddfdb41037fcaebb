"""Minimal single-file NIfTI-1 (.nii) reader/writer.

Supports little-endian int16 and float32 payloads with the 348-byte
header and magic "n+1\\0". The sform affine is preferred when present;
otherwise the qform (quaternion) is used, falling back to pixdim scaling.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .volume import FileFormatError, DimensionMismatchError, Unit, Volume

HEADER_SIZE = 348
MAGIC = b"n+1\x00"

DT_INT16 = 4
DT_FLOAT32 = 16

# NIfTI-1 header layout (names and order per the published C struct).
HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "<i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "<i4"),
        ("session_error", "<i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "<i2", (8,)),
        ("intent_p1", "<f4"),
        ("intent_p2", "<f4"),
        ("intent_p3", "<f4"),
        ("intent_code", "<i2"),
        ("datatype", "<i2"),
        ("bitpix", "<i2"),
        ("slice_start", "<i2"),
        ("pixdim", "<f4", (8,)),
        ("vox_offset", "<f4"),
        ("scl_slope", "<f4"),
        ("scl_inter", "<f4"),
        ("slice_end", "<i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "<f4"),
        ("cal_min", "<f4"),
        ("slice_duration", "<f4"),
        ("toffset", "<f4"),
        ("glmax", "<i4"),
        ("glmin", "<i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "<i2"),
        ("sform_code", "<i2"),
        ("quatern_b", "<f4"),
        ("quatern_c", "<f4"),
        ("quatern_d", "<f4"),
        ("qoffset_x", "<f4"),
        ("qoffset_y", "<f4"),
        ("qoffset_z", "<f4"),
        ("srow_x", "<f4", (4,)),
        ("srow_y", "<f4", (4,)),
        ("srow_z", "<f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert HEADER_DTYPE.itemsize == HEADER_SIZE


def _quaternion_to_matrix(b, c, d, qfac):
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a2, 0.0))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    rot[:, 2] *= qfac
    return rot


def _affine_from_header(hdr) -> np.ndarray:
    if int(hdr["sform_code"]) > 0:
        return np.stack([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]]).astype(np.float64)
    pix = hdr["pixdim"]
    if int(hdr["qform_code"]) > 0:
        qfac = -1.0 if float(pix[0]) < 0 else 1.0
        rot = _quaternion_to_matrix(float(hdr["quatern_b"]), float(hdr["quatern_c"]), float(hdr["quatern_d"]), qfac)
        aff = np.zeros((3, 4))
        aff[:, :3] = rot * np.asarray([pix[1], pix[2], pix[3]], dtype=np.float64)
        aff[:, 3] = [float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"])]
        return aff
    aff = np.zeros((3, 4))
    aff[:, :3] = np.diag([pix[1], pix[2], pix[3]])
    return aff


def read_nifti(path) -> Volume:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER_SIZE:
        raise FileFormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte NIfTI-1 header")
    hdr = np.frombuffer(blob[:HEADER_SIZE], dtype=HEADER_DTYPE)[0]
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        raise FileFormatError(
            f"{path}: sizeof_hdr={int(hdr['sizeof_hdr'])}; not a little-endian NIfTI-1 file"
        )
    if blob[344:348] != MAGIC:  # numpy S4 strips trailing NULs, so compare raw bytes
        raise FileFormatError(f"{path}: bad magic {blob[344:348]!r}, expected {MAGIC!r}")
    datatype = int(hdr["datatype"])
    if datatype == DT_INT16:
        dt = np.dtype("<i2")
    elif datatype == DT_FLOAT32:
        dt = np.dtype("<f4")
    else:
        raise FileFormatError(f"{path}: unsupported datatype code {datatype} (int16/float32 only)")

    ndim = int(hdr["dim"][0])
    if ndim < 3 or ndim > 7:
        raise FileFormatError(f"{path}: dim[0]={ndim} out of range")
    dims = tuple(int(v) for v in hdr["dim"][1:4])
    if any(v < 1 for v in dims) or any(int(v) > 1 for v in hdr["dim"][4 : 1 + ndim]):
        raise FileFormatError(f"{path}: only 3-D volumes are supported, dim={list(hdr['dim'])}")

    offset = int(hdr["vox_offset"])
    if offset < HEADER_SIZE:
        offset = HEADER_SIZE
    n_vox = int(np.prod(dims))
    payload = np.frombuffer(blob, dtype=dt, count=-1, offset=offset)
    if payload.size < n_vox:
        raise DimensionMismatchError(
            f"{path}: header dims {dims} imply {n_vox} voxels, payload has {payload.size}"
        )
    data = payload[:n_vox].reshape(dims, order="F").astype(np.float32)

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data * (slope if slope != 0.0 else 1.0) + inter

    aff = _affine_from_header(hdr)
    spacing = np.linalg.norm(aff[:, :3], axis=0)
    if np.any(spacing <= 0):
        raise FileFormatError(f"{path}: degenerate affine, zero-length axis")
    direction = aff[:, :3] / spacing
    origin = aff[:, 3]
    unit = Unit.HU if datatype == DT_INT16 else _unit_from_descrip(hdr["descrip"])
    return Volume(data, tuple(spacing), tuple(origin), direction, unit)


def _unit_from_descrip(descrip) -> Unit:
    text = bytes(descrip).rstrip(b"\x00").decode("ascii", "replace")
    if text.startswith("tfusplan unit="):
        try:
            return Unit(text.split("=", 1)[1])
        except ValueError:
            pass
    return Unit.HU


def write_nifti(path, vol: Volume, dtype=None) -> None:
    """Write a single-file little-endian .nii; dtype int16 or float32."""
    path = Path(path)
    dt = np.dtype(dtype if dtype is not None else np.float32)
    if dt == np.int16:
        datatype, bitpix = DT_INT16, 16
        payload = np.asarray(np.round(vol.data), dtype="<i2")
    elif dt == np.float32:
        datatype, bitpix = DT_FLOAT32, 32
        payload = np.asarray(vol.data, dtype="<f4")
    else:
        raise FileFormatError(f"unsupported write dtype {dt} (int16/float32 only)")

    hdr = np.zeros(1, dtype=HEADER_DTYPE)[0]
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"][0] = 3
    hdr["dim"][1:4] = vol.dims
    hdr["dim"][4:] = 1
    hdr["datatype"] = datatype
    hdr["bitpix"] = bitpix
    hdr["pixdim"][0] = 1.0
    hdr["pixdim"][1:4] = vol.spacing
    hdr["vox_offset"] = 352.0
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # NIFTI_UNITS_MM
    hdr["descrip"] = f"tfusplan unit={vol.unit.value}".encode("ascii")
    hdr["sform_code"] = 1
    hdr["qform_code"] = 0
    aff = vol.direction * np.asarray(vol.spacing)
    hdr["srow_x"] = [*aff[0], vol.origin[0]]
    hdr["srow_y"] = [*aff[1], vol.origin[1]]
    hdr["srow_z"] = [*aff[2], vol.origin[2]]
    hdr["magic"] = MAGIC

    with open(path, "wb") as fh:
        fh.write(hdr.tobytes())
        fh.write(b"\x00\x00\x00\x00")  # no header extensions
        fh.write(payload.ravel(order="F").tobytes())
