"""Paired real-vs-synthetic CT evaluation.

For each case the full pipeline runs on both volumes with an identical
array pose (the pose is selected on the synthetic volume, then reused for
the real one): skull extraction, ray planning, acoustic property mapping,
pressure simulation, and the per-case deltas reported in the batch CSV.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acoustics import build_medium
from .config import RunConfig
from .rays import PlanSummary, RayCaster, optimize_array_tilt, plan_summary
from .sim import simulate
from .skull import SkullMask, apply_mask, extract_skull_mask, intracranial_mask
from .transducer import build_array
from .volume import Unit, Volume, WorldPoint, pad_crop_to_grid, resample_trilinear


class StageError(RuntimeError):
    """Pipeline failure labeled with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class ZeroVarianceError(ValueError):
    pass


@dataclass(frozen=True)
class OverlapCounts:
    both_active: int
    both_inactive: int
    a_only_active: int
    b_only_active: int

    @property
    def total(self) -> int:
        return self.both_active + self.both_inactive + self.a_only_active + self.b_only_active

    @property
    def fraction(self) -> float:
        return (self.both_active + self.both_inactive) / self.total


@dataclass(frozen=True)
class CaseComparison:
    case_id: str
    mae_skull_hu: float
    nae_pair: tuple          # (rct, sct)
    sdr_pair: tuple
    st_pair: tuple
    overlap: OverlapCounts
    overlap_fraction: float
    max_rms_pair: tuple
    pressure_deficit_pct: float
    focal_shift_pair: tuple
    argmax_distance_mm: float
    tilt: tuple              # pose used for both volumes


def mae_skull(rct: Volume, sct: Volume, mask: SkullMask) -> float:
    """Mean absolute HU difference over the skull-mask voxels."""
    if rct.dims != sct.dims or rct.dims != mask.mask.dims:
        raise ValueError(f"dims mismatch: {rct.dims} vs {sct.dims} vs {mask.mask.dims}")
    m = mask.asbool
    if not m.any():
        raise ValueError("empty mask")
    return float(np.mean(np.abs(rct.data[m].astype(np.float64) - sct.data[m].astype(np.float64))))


def pearson(xs, ys) -> float:
    """Product-moment correlation of two equal-length sequences."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise ValueError("pearson needs two equal-length sequences of at least 2 values")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("correlation undefined: an argument has zero variance")
    return float(np.dot(dx, dy) / math.sqrt(sxx * syy))


def element_overlap(a, b) -> OverlapCounts:
    """Four-way active/inactive agreement between two per-element plans."""
    a_plans = a.per_element if isinstance(a, PlanSummary) else tuple(a)
    b_plans = b.per_element if isinstance(b, PlanSummary) else tuple(b)
    if len(a_plans) != len(b_plans):
        raise ValueError(f"element count mismatch: {len(a_plans)} vs {len(b_plans)}")
    both_a = both_i = only_a = only_b = 0
    for pa, pb in zip(a_plans, b_plans):
        if pa.element_index != pb.element_index:
            raise ValueError("element index mismatch between the two plans")
        if pa.active and pb.active:
            both_a += 1
        elif not pa.active and not pb.active:
            both_i += 1
        elif pa.active:
            only_a += 1
        else:
            only_b += 1
    return OverlapCounts(both_a, both_i, only_a, only_b)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _to_sim_grid(skull_img: Volume, target: WorldPoint, cfg: RunConfig) -> Volume:
    out = skull_img
    if cfg.sim_grid.spacing_mm is not None and tuple(out.spacing) != tuple(cfg.sim_grid.spacing_mm):
        out = resample_trilinear(out, cfg.sim_grid.spacing_mm)
    if cfg.sim_grid.dims is not None and tuple(out.dims) != tuple(cfg.sim_grid.dims):
        out = pad_crop_to_grid(out, cfg.sim_grid.dims, target)
    return out


def _simulate_volume(skull_img: Volume, target: WorldPoint, tilt, cfg: RunConfig):
    grid_img = _to_sim_grid(skull_img, target, cfg)
    bone = grid_img.data >= cfg.extract.threshold_hu
    sk = SkullMask(grid_img.with_data(bone.astype(np.float32), unit=Unit.DIMENSIONLESS),
                   cfg.extract.threshold_hu, 0.0)
    mask = intracranial_mask(sk, target)
    medium = build_medium(grid_img, cfg.acoustic, f0=cfg.sim.f0)
    array = build_array(cfg.array.radius_mm, target, tilt[0], tilt[1])
    return simulate(medium, array, cfg.sim, mask, target=target, threads=cfg.threads)


def compare_case(rct: Volume, sct: Volume, target: WorldPoint, cfg: RunConfig,
                 case_id: str = "case") -> CaseComparison:
    """Run the paired pipeline; the pose is chosen on the synthetic volume."""
    if rct.dims != sct.dims:
        raise StageError("input", ValueError(f"rct dims {rct.dims} != sct dims {sct.dims}"))

    rct_mask = _stage("extract-rct", extract_skull_mask, rct,
                      cfg.extract.threshold_hu, cfg.extract.dilation_radius_mm)
    sct_mask = _stage("extract-sct", extract_skull_mask, sct,
                      cfg.extract.threshold_hu, cfg.extract.dilation_radius_mm)
    rct_skull = _stage("mask-rct", apply_mask, rct, rct_mask)
    sct_skull = _stage("mask-sct", apply_mask, sct, sct_mask)

    ray_kwargs = dict(bone_threshold=cfg.ray.bone_threshold_hu, step=cfg.ray.step_mm,
                      normal_sigma=cfg.ray.normal_sigma_mm, sdr_margin=cfg.ray.sdr_margin_mm,
                      angle_limit=cfg.ray.active_angle_deg)
    sct_caster = _stage("plan-pose", RayCaster, sct_skull, **ray_kwargs)
    if cfg.tilt_search.enabled:
        tx, ty, _ = _stage("plan-pose", optimize_array_tilt, sct_skull, cfg.array.radius_mm,
                           target, cfg.tilt_search.step_deg, caster=sct_caster)
    else:
        tx, ty = cfg.array.tilt_x_deg, cfg.array.tilt_y_deg

    array = build_array(cfg.array.radius_mm, target, tx, ty)
    plan_sct = _stage("plan-sct", plan_summary, sct_skull, array, caster=sct_caster)
    plan_rct = _stage("plan-rct", plan_summary, rct_skull, array, **ray_kwargs)
    overlap = _stage("overlap", element_overlap, plan_rct, plan_sct)
    mae = _stage("mae", mae_skull, rct, sct, rct_mask)

    res_rct = _stage("simulate-rct", _simulate_volume, rct_skull, target, (tx, ty), cfg)
    res_sct = _stage("simulate-sct", _simulate_volume, sct_skull, target, (tx, ty), cfg)
    deficit = 100.0 * (res_rct.max_rms - res_sct.max_rms) / res_rct.max_rms

    return CaseComparison(
        case_id=case_id,
        mae_skull_hu=mae,
        nae_pair=(plan_rct.nae, plan_sct.nae),
        sdr_pair=(plan_rct.sdr, plan_sct.sdr),
        st_pair=(plan_rct.st_mean, plan_sct.st_mean),
        overlap=overlap,
        overlap_fraction=overlap.fraction,
        max_rms_pair=(res_rct.max_rms, res_sct.max_rms),
        pressure_deficit_pct=deficit,
        focal_shift_pair=(res_rct.focal_shift, res_sct.focal_shift),
        argmax_distance_mm=res_rct.argmax.distance_to(res_sct.argmax),
        tilt=(tx, ty),
    )


# -- batch report ----------------------------------------------------------------

CSV_COLUMNS = [
    "case_id", "mae_skull_hu",
    "nae_rct", "nae_sct", "sdr_rct", "sdr_sct", "st_rct_mm", "st_sct_mm",
    "both_active", "both_inactive", "rct_only_active", "sct_only_active",
    "overlap_fraction",
    "max_rms_rct_pa", "max_rms_sct_pa", "pressure_deficit_pct",
    "focal_shift_rct_mm", "focal_shift_sct_mm", "argmax_distance_mm",
    "tilt_x_deg", "tilt_y_deg",
]


def case_row(c: CaseComparison) -> dict:
    return {
        "case_id": c.case_id,
        "mae_skull_hu": c.mae_skull_hu,
        "nae_rct": c.nae_pair[0], "nae_sct": c.nae_pair[1],
        "sdr_rct": c.sdr_pair[0], "sdr_sct": c.sdr_pair[1],
        "st_rct_mm": c.st_pair[0], "st_sct_mm": c.st_pair[1],
        "both_active": c.overlap.both_active, "both_inactive": c.overlap.both_inactive,
        "rct_only_active": c.overlap.a_only_active, "sct_only_active": c.overlap.b_only_active,
        "overlap_fraction": c.overlap_fraction,
        "max_rms_rct_pa": c.max_rms_pair[0], "max_rms_sct_pa": c.max_rms_pair[1],
        "pressure_deficit_pct": c.pressure_deficit_pct,
        "focal_shift_rct_mm": c.focal_shift_pair[0], "focal_shift_sct_mm": c.focal_shift_pair[1],
        "argmax_distance_mm": c.argmax_distance_mm,
        "tilt_x_deg": c.tilt[0], "tilt_y_deg": c.tilt[1],
    }


def write_report_csv(cases, path) -> None:
    rows = sorted((case_row(c) for c in cases), key=lambda r: r["case_id"])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def summarize_cases(cases) -> dict:
    """Means, standard deviations, and the paired metric correlations."""
    rows = sorted((case_row(c) for c in cases), key=lambda r: r["case_id"])
    numeric = [c for c in CSV_COLUMNS if c != "case_id"]
    means, stds = {}, {}
    for col in numeric:
        vals = [float(r[col]) for r in rows]
        means[col] = statistics.fmean(vals)
        stds[col] = statistics.pstdev(vals) if len(vals) > 1 else 0.0

    def corr(a, b):
        try:
            return pearson([float(r[a]) for r in rows], [float(r[b]) for r in rows])
        except (ZeroVarianceError, ValueError):
            return None  # explicit null, never a silent 0

    return {
        "n_cases": len(rows),
        "case_ids": [r["case_id"] for r in rows],
        "means": means,
        "stds": stds,
        "pearson": {
            "nae": corr("nae_rct", "nae_sct"),
            "sdr": corr("sdr_rct", "sdr_sct"),
            "st": corr("st_rct_mm", "st_sct_mm"),
        },
    }


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
