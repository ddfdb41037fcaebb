"""Analytic skull phantoms and controlled synthetic-CT-like perturbations.

Shell phantoms stand in for patient skulls so the paired real-vs-synthetic
comparison pipeline can run at desk scale: a cortical/trabecular/cortical
spherical (optionally ellipsoidal) shell in a water background. The
perturbation op degrades a phantom the way a synthesized volume differs
from a measured one: in-skull smoothing, bias, and seeded noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Unit, Volume, VolumeError, WorldPoint


@dataclass(frozen=True)
class ShellPhantomSpec:
    outer_radius: float          # mm
    inner_radius: float          # mm
    cortical_thickness: float    # mm, per cortical layer
    cortical_hu: float
    trabecular_hu: float
    center: WorldPoint = WorldPoint(0.0, 0.0, 0.0)
    ellipsoid_scale: tuple = (1.0, 1.0, 1.0)

    def validate(self):
        if self.outer_radius - self.inner_radius < 2 * self.cortical_thickness:
            raise ValueError(
                "shell too thin: outer_radius - inner_radius must be >= 2 * cortical_thickness"
            )
        if not (self.cortical_hu >= self.trabecular_hu > 400.0):
            raise ValueError("need cortical_hu >= trabecular_hu > 400 HU")
        if self.inner_radius <= 0 or self.cortical_thickness < 0:
            raise ValueError("radii and thickness must be positive")
        if any(s <= 0 for s in self.ellipsoid_scale):
            raise ValueError("ellipsoid_scale components must be > 0")


@dataclass(frozen=True)
class PerturbationSpec:
    gaussian_sigma: float = 0.0  # mm
    noise_sigma: float = 0.0     # HU
    hu_bias: float = 0.0         # HU
    rng_seed: int = 0

    def validate(self):
        if self.gaussian_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("gaussian_sigma and noise_sigma must be >= 0")


def make_shell_phantom(spec: ShellPhantomSpec, dims, spacing, origin=None) -> Volume:
    """Rasterize a shell phantom onto a grid (HU volume).

    Voxels are assigned by center-point membership against the scaled
    radial distance r = |(p - center) / ellipsoid_scale|:
    cortical HU on [inner, inner+t] and [outer-t, outer], trabecular HU in
    between, 0 HU (water) elsewhere. The grid is centered on the world
    origin unless an explicit origin is given.
    """
    spec.validate()
    dims = tuple(int(d) for d in dims)
    spacing = tuple(float(s) for s in spacing)
    if origin is None:
        origin = tuple(-(d - 1) / 2.0 * s for d, s in zip(dims, spacing))
    half_extent = [(d - 1) / 2.0 * s for d, s in zip(dims, spacing)]
    c = spec.center.as_array()
    grid_center = np.asarray(origin) + half_extent
    reach = spec.outer_radius * np.asarray(spec.ellipsoid_scale)
    if np.any(np.abs(c - grid_center) + reach > np.asarray(half_extent) + 1e-9):
        raise VolumeError("phantom exceeds grid extent")

    ax = ((origin[0] + np.arange(dims[0]) * spacing[0] - c[0]) / spec.ellipsoid_scale[0]) ** 2
    ay = ((origin[1] + np.arange(dims[1]) * spacing[1] - c[1]) / spec.ellipsoid_scale[1]) ** 2
    az = ((origin[2] + np.arange(dims[2]) * spacing[2] - c[2]) / spec.ellipsoid_scale[2]) ** 2
    r = np.sqrt(ax[:, None, None] + ay[None, :, None] + az[None, None, :])

    t = spec.cortical_thickness
    data = np.zeros(dims, dtype=np.float32)
    cortical = ((r >= spec.inner_radius) & (r <= spec.inner_radius + t)) | (
        (r >= spec.outer_radius - t) & (r <= spec.outer_radius)
    )
    trabecular = (r > spec.inner_radius + t) & (r < spec.outer_radius - t)
    data[trabecular] = spec.trabecular_hu
    data[cortical] = spec.cortical_hu
    return Volume(data, spacing, origin, unit=Unit.HU)


def perturb_to_sct(ct: Volume, p: PerturbationSpec) -> Volume:
    """Degrade a HU volume into a synthetic-CT-like counterpart.

    Gaussian blur (separable, kernel truncated at 3 sigma) over the whole
    grid, then bias plus seeded Gaussian noise added only on the original
    skull support (HU > 0), so the water background stays exactly 0 and
    downstream skull extraction stays deterministic. Bit-reproducible for
    a fixed seed.
    """
    if ct.unit != Unit.HU:
        raise VolumeError(f"perturb_to_sct expects a HU volume, got {ct.unit}")
    p.validate()
    data = ct.data.astype(np.float32)
    if p.gaussian_sigma > 0:
        sigma_vox = [p.gaussian_sigma / s for s in ct.spacing]
        out = ndimage.gaussian_filter(data, sigma=sigma_vox, mode="constant", cval=0.0, truncate=3.0)
    else:
        out = data.copy()
    support = ct.data > 0
    if p.hu_bias != 0.0:
        out[support] += p.hu_bias
    if p.noise_sigma > 0:
        rng = np.random.default_rng(p.rng_seed)
        out[support] += rng.normal(0.0, p.noise_sigma, size=int(support.sum())).astype(np.float32)
    return ct.with_data(out)
