"""Hemispherical phased-array model and tilt search.

1024 candidate sites are laid out deterministically on a downward-opening
hemisphere by a Fibonacci spiral (index 0 exactly at the pole, the last
index on the equator); 34 sites, every 30th index from 0 through 990, are
permanently disabled, leaving the 990 active transmit elements. The whole
rigid assembly can be tilted up to 10 degrees about x and then y around
the focus.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .volume import WorldPoint

TOTAL_SITES = 1024
DISABLED_INDICES = frozenset(range(0, 991, 30))   # 34 sites
ENABLED_COUNT = TOTAL_SITES - len(DISABLED_INDICES)
TILT_LIMIT_DEG = 10.0
DEFAULT_RADIUS_MM = 150.0

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class TiltOutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class TransducerArray:
    radius: float                 # mm
    focus: WorldPoint
    tilt_x: float                 # degrees
    tilt_y: float                 # degrees
    positions: np.ndarray         # (1024, 3) world mm
    inward_normals: np.ndarray    # (1024, 3) unit vectors toward the focus
    enabled: np.ndarray           # (1024,) bool

    @property
    def n_enabled(self) -> int:
        return int(self.enabled.sum())

    def enabled_positions(self) -> np.ndarray:
        return self.positions[self.enabled]

    def enabled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.enabled)


def _rotation_xy(tilt_x_deg: float, tilt_y_deg: float) -> np.ndarray:
    ax = math.radians(tilt_x_deg)
    ay = math.radians(tilt_y_deg)
    rx = np.array([[1, 0, 0], [0, math.cos(ax), -math.sin(ax)], [0, math.sin(ax), math.cos(ax)]])
    ry = np.array([[math.cos(ay), 0, math.sin(ay)], [0, 1, 0], [-math.sin(ay), 0, math.cos(ay)]])
    return ry @ rx  # tilt about x first, then y


def hemisphere_offsets(radius: float, n: int = TOTAL_SITES) -> np.ndarray:
    """Fibonacci-spiral sites on the upper hemisphere, relative to its center."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - i / (n - 1)                  # pole (z=1) down to the equator (z=0)
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    psi = i * _GOLDEN_ANGLE
    return radius * np.stack([rho * np.cos(psi), rho * np.sin(psi), z], axis=1)


def build_array(
    radius: float = DEFAULT_RADIUS_MM,
    focus: WorldPoint = WorldPoint(0.0, 0.0, 0.0),
    tilt_x: float = 0.0,
    tilt_y: float = 0.0,
) -> TransducerArray:
    """Pose the hemispherical array around a focus with the given tilts."""
    if abs(tilt_x) > TILT_LIMIT_DEG + 1e-9 or abs(tilt_y) > TILT_LIMIT_DEG + 1e-9:
        raise TiltOutOfBoundsError(
            f"tilt ({tilt_x}, {tilt_y}) exceeds the {TILT_LIMIT_DEG} degree bound per axis"
        )
    if radius <= 0:
        raise ValueError("radius must be > 0")
    offsets = hemisphere_offsets(radius)
    rot = _rotation_xy(tilt_x, tilt_y)
    positions = focus.as_array() + offsets @ rot.T
    inward = (focus.as_array() - positions) / radius
    enabled = np.ones(TOTAL_SITES, dtype=bool)
    enabled[sorted(DISABLED_INDICES)] = False
    positions.flags.writeable = False
    inward.flags.writeable = False
    enabled.flags.writeable = False
    return TransducerArray(float(radius), focus, float(tilt_x), float(tilt_y),
                           positions, inward, enabled)


def export_elements_csv(array: TransducerArray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x_mm", "y_mm", "z_mm", "enabled"])
        for i in range(TOTAL_SITES):
            p = array.positions[i]
            w.writerow([i, f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}", int(array.enabled[i])])


def tilt_grid(step: float, limit: float = TILT_LIMIT_DEG) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be > 0")
    n = int(round(2 * limit / step))
    return -limit + step * np.arange(n + 1)


def optimize_tilt(array_builder, plan_evaluator, step: float = 1.0,
                  limit: float = TILT_LIMIT_DEG):
    """Exhaustive tilt search maximizing the active-element count.

    array_builder(tilt_x, tilt_y) poses the array; plan_evaluator(array)
    returns its NAE. All poses on the grid {-limit, ..., +limit} x same
    are evaluated; ties break toward the smallest tilt magnitude, then by
    tilt_x, then tilt_y, so the result is deterministic.

    Returns (tilt_x, tilt_y, nae).
    """
    values = tilt_grid(step, limit)
    results = []
    for tx in values:
        for ty in values:
            nae = int(plan_evaluator(array_builder(float(tx), float(ty))))
            results.append((nae, float(tx), float(ty)))
    best = min(results, key=lambda r: (-r[0], math.hypot(r[1], r[2]), r[1], r[2]))
    return best[1], best[2], best[0]
