"""Voxelwise CT-to-acoustic-property mapping.

HU maps linearly to bone porosity (0 HU water -> porosity 1, the HU cap ->
porosity 0); sound speed and density interpolate linearly in bone
fraction (1 - porosity) between their water and dense-bone endpoints, and
the absorption coefficient scales from 0 in water to its dense-bone bulk
value with a power-law frequency dependence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Unit, Volume, VolumeError


@dataclass(frozen=True)
class AcousticConstants:
    c_max: float = 3100.0     # m/s, dense cortical bone
    c_min: float = 1480.0     # m/s, water
    rho_max: float = 2100.0   # kg/m^3
    rho_min: float = 1000.0   # kg/m^3
    a0: float = 8.1           # dB/cm/MHz^b, dense bone
    b: float = 1.1            # absorption power-law exponent
    hu_cap: float = 1000.0    # HU at which porosity reaches 0
    # absorption interpolates as a0 * (1 - porosity)^q; q = 1 is the linear
    # surrogate, larger q concentrates loss in dense bone (sensitivity knob)
    absorption_exponent: float = 1.0

    def validate(self):
        if not (self.c_max > self.c_min > 0):
            raise ValueError("need c_max > c_min > 0")
        if not (self.rho_max > self.rho_min > 0):
            raise ValueError("need rho_max > rho_min > 0")
        if self.a0 < 0 or self.b <= 0 or self.hu_cap <= 0:
            raise ValueError("need a0 >= 0, b > 0, hu_cap > 0")
        if self.absorption_exponent <= 0:
            raise ValueError("need absorption_exponent > 0")


@dataclass(frozen=True)
class AcousticMedium:
    sound_speed: Volume   # m/s
    density: Volume       # kg/m^3
    alpha0: Volume        # dB/cm/MHz^b
    b: float
    f0: float             # Hz


def hu_to_porosity(hu, hu_cap: float = 1000.0):
    """Linear HU -> porosity map; HU clamps to [0, hu_cap]."""
    if hu_cap <= 0:
        raise ValueError("hu_cap must be > 0")
    return 1.0 - np.clip(hu, 0.0, hu_cap) / hu_cap


def build_medium(ct_skull: Volume, constants: AcousticConstants = AcousticConstants(),
                 f0: float = 650e3) -> AcousticMedium:
    """Derive co-registered sound-speed, density, and absorption volumes."""
    if ct_skull.unit != Unit.HU:
        raise VolumeError(f"build_medium expects a HU volume, got {ct_skull.unit}")
    constants.validate()
    bone_fraction = (1.0 - hu_to_porosity(ct_skull.data.astype(np.float64), constants.hu_cap))
    c = constants.c_min + (constants.c_max - constants.c_min) * bone_fraction
    rho = constants.rho_min + (constants.rho_max - constants.rho_min) * bone_fraction
    alpha0 = constants.a0 * bone_fraction**constants.absorption_exponent
    return AcousticMedium(
        sound_speed=ct_skull.with_data(c, unit=Unit.M_PER_S),
        density=ct_skull.with_data(rho, unit=Unit.KG_PER_M3),
        alpha0=ct_skull.with_data(alpha0, unit=Unit.DB_CM_MHZ),
        b=constants.b,
        f0=float(f0),
    )


def absorption_at(alpha0, b: float, f: float):
    """Power-law absorption alpha0 * (f / 1 MHz)^b in dB/cm."""
    if f <= 0:
        raise ValueError("frequency must be > 0")
    return alpha0 * (f / 1e6) ** b


def absorption_np_per_m(alpha_db_per_cm):
    """dB/cm to Np/m (1 Np = 20/ln10 dB)."""
    return np.asarray(alpha_db_per_cm) * 100.0 / (20.0 / np.log(10.0))
