"""Batch command-line entry point.

One subcommand per pipeline stage plus the end-to-end paired comparison,
the report aggregator, and the planning HTTP service. Every run writes a
manifest (resolved configuration and input checksums) beside its outputs;
repeated runs with the same configuration produce byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical or
pipeline failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, inputs) -> None:
    _write_json(out_dir / "manifest.json", {
        "tool": f"tfusplan {__version__}",
        "command": command,
        "config": cfg.to_dict(),
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
    })


def _parse_floats(text: str, n: int, name: str):
    parts = text.split(",")
    if len(parts) != n:
        raise ConfigError(f"{name} must have {n} comma-separated values, got {text!r}")
    try:
        return tuple(float(v) for v in parts)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _parse_triple(text: str, name: str):
    return _parse_floats(text, 3, name)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.defaults().validate()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def _maybe_dry_run(args, cfg: RunConfig) -> bool:
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return True
    return False


# -- commands -------------------------------------------------------------------


def cmd_config(args) -> int:
    if args.action == "print-defaults":
        print(json.dumps(RunConfig.defaults().to_dict(), indent=2, sort_keys=True))
        return 0
    raise ConfigError(f"unknown config action {args.action!r}")


def cmd_extract(args) -> int:
    from .skull import apply_mask, extract_skull_mask
    from .volume import read_volume, write_volume

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    ct = read_volume(args.input)
    mask = extract_skull_mask(ct, cfg.extract.threshold_hu, cfg.extract.dilation_radius_mm)
    skull = apply_mask(ct, mask)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_volume(out / "skull_mask.raw", mask.mask)
    write_volume(out / "skull.nii", skull)
    _write_manifest(out, "extract", cfg, [args.input])
    print(f"extract: skull voxels={mask.voxel_count} threshold={mask.threshold_hu} "
          f"dilation={mask.dilation_radius_mm}mm -> {out / 'skull.nii'}")
    return 0


def cmd_phantom(args) -> int:
    from .phantom import PerturbationSpec, ShellPhantomSpec, make_shell_phantom, perturb_to_sct
    from .volume import WorldPoint, write_volume

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    ph = cfg.phantom
    spec = ShellPhantomSpec(ph.outer_radius_mm, ph.inner_radius_mm, ph.cortical_thickness_mm,
                            ph.cortical_hu, ph.trabecular_hu, WorldPoint(*ph.center_mm),
                            tuple(ph.ellipsoid_scale))
    rct = make_shell_phantom(spec, ph.dims, ph.spacing_mm)
    perturb = PerturbationSpec(ph.perturb.gaussian_sigma_mm, ph.perturb.noise_sigma_hu,
                               ph.perturb.hu_bias, ph.perturb.rng_seed + cfg.seed)
    sct = perturb_to_sct(rct, perturb)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_volume(out / "rct.nii", rct)
    write_volume(out / "sct.nii", sct)
    _write_manifest(out, "phantom", cfg, [])
    print(f"phantom: dims={rct.dims} spacing={rct.spacing} -> {out / 'rct.nii'}, {out / 'sct.nii'}")
    return 0


def cmd_plan(args) -> int:
    from .rays import export_plan_csv, optimize_array_tilt, plan_summary
    from .transducer import build_array
    from .volume import WorldPoint, read_volume

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    ct = read_volume(args.input)
    target = WorldPoint(*_parse_triple(args.target, "--target"))
    ray_kwargs = dict(bone_threshold=cfg.ray.bone_threshold_hu, step=cfg.ray.step_mm,
                      normal_sigma=cfg.ray.normal_sigma_mm, sdr_margin=cfg.ray.sdr_margin_mm,
                      angle_limit=cfg.ray.active_angle_deg)
    if args.optimize:
        tx, ty, _ = optimize_array_tilt(ct, cfg.array.radius_mm, target,
                                        cfg.tilt_search.step_deg, **ray_kwargs)
    elif args.tilt:
        tx, ty = _parse_floats(args.tilt, 2, "--tilt")
    else:
        tx, ty = cfg.array.tilt_x_deg, cfg.array.tilt_y_deg
    array = build_array(cfg.array.radius_mm, target, tx, ty)
    summary = plan_summary(ct, array, **ray_kwargs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_plan_csv(summary, out / "elements.csv")
    _write_json(out / "plan.json", {
        "nae": summary.nae, "sdr": summary.sdr, "st_mean_mm": summary.st_mean,
        "tilt_x_deg": tx, "tilt_y_deg": ty,
        "target_mm": list(target.as_array()),
    })
    _write_manifest(out, "plan", cfg, [args.input])
    print(f"NAE={summary.nae} SDR={summary.sdr:.3f} ST={summary.st_mean:.2f}mm tilt=({tx:g},{ty:g})")
    return 0


def cmd_map(args) -> int:
    from .acoustics import build_medium
    from .volume import read_volume, write_volume

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    skull = read_volume(args.input)
    medium = build_medium(skull, cfg.acoustic, f0=cfg.sim.f0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_volume(out / "sound_speed.raw", medium.sound_speed)
    write_volume(out / "density.raw", medium.density)
    write_volume(out / "alpha0.raw", medium.alpha0)
    _write_manifest(out, "map", cfg, [args.input])
    print(f"map: c in [{medium.sound_speed.data.min():.0f}, {medium.sound_speed.data.max():.0f}] m/s "
          f"-> {out}")
    return 0


def cmd_simulate(args) -> int:
    from .acoustics import build_medium
    from .sim import simulate
    from .skull import SkullMask, intracranial_mask
    from .transducer import build_array
    from .volume import Unit, WorldPoint, read_volume, write_volume

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    skull = read_volume(args.input)
    target = WorldPoint(*_parse_triple(args.target, "--target"))
    bone = skull.data >= cfg.extract.threshold_hu
    sk = SkullMask(skull.with_data(bone.astype(np.float32), unit=Unit.DIMENSIONLESS),
                   cfg.extract.threshold_hu, 0.0)
    mask = intracranial_mask(sk, target)
    medium = build_medium(skull, cfg.acoustic, f0=cfg.sim.f0)
    array = build_array(cfg.array.radius_mm, target, cfg.array.tilt_x_deg, cfg.array.tilt_y_deg)
    res = simulate(medium, array, cfg.sim, mask, target=target, threads=cfg.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_volume(out / "rms.raw", res.rms)
    _write_json(out / "metrics.json", {
        "max_rms_pa": res.max_rms,
        "argmax_mm": list(res.argmax.as_array()),
        "focal_shift_mm": res.focal_shift,
        "target_mm": list(target.as_array()),
    })
    _write_manifest(out, "simulate", cfg, [args.input])
    print(f"simulate: max_rms={res.max_rms:.4g}Pa focal_shift={res.focal_shift:.2f}mm -> {out}")
    return 0


def cmd_compare(args) -> int:
    from .compare import case_row, compare_case
    from .volume import WorldPoint, read_volume

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    rct = read_volume(args.rct)
    sct = read_volume(args.sct)
    target = WorldPoint(*_parse_triple(args.target, "--target"))
    case_id = args.case_id or Path(args.rct).stem
    result = compare_case(rct, sct, target, cfg, case_id=case_id)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / f"case_{case_id}.json", case_row(result))
    _write_manifest(out, "compare", cfg, [args.rct, args.sct])
    print(f"compare[{case_id}]: deficit={result.pressure_deficit_pct:+.2f}% "
          f"overlap={result.overlap_fraction:.3f} mae={result.mae_skull_hu:.1f}HU")
    return 0


def cmd_report(args) -> int:
    from .compare import CSV_COLUMNS, write_summary_json

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    case_files = sorted(Path(args.cases_dir).glob("case_*.json"))
    if not case_files:
        raise FileNotFoundError(f"no case_*.json files under {args.cases_dir}")
    rows = [json.loads(p.read_text()) for p in case_files]
    rows.sort(key=lambda r: r["case_id"])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    import csv as _csv

    with open(out / "report.csv", "w", newline="") as fh:
        w = _csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    summary = _summarize_rows(rows)
    write_summary_json(summary, out / "summary.json")
    _write_manifest(out, "report", cfg, case_files)
    print(f"report: {len(rows)} cases -> {out / 'report.csv'}, {out / 'summary.json'}")
    return 0


def _summarize_rows(rows) -> dict:
    import statistics

    from .compare import CSV_COLUMNS, ZeroVarianceError, pearson

    numeric = [c for c in CSV_COLUMNS if c != "case_id"]
    means = {c: statistics.fmean(float(r[c]) for r in rows) for c in numeric}
    stds = {c: (statistics.pstdev([float(r[c]) for r in rows]) if len(rows) > 1 else 0.0)
            for c in numeric}

    def corr(a, b):
        try:
            return pearson([float(r[a]) for r in rows], [float(r[b]) for r in rows])
        except (ZeroVarianceError, ValueError):
            return None

    return {
        "n_cases": len(rows),
        "case_ids": [r["case_id"] for r in rows],
        "means": means,
        "stds": stds,
        "pearson": {"nae": corr("nae_rct", "nae_sct"),
                    "sdr": corr("sdr_rct", "sdr_sct"),
                    "st": corr("st_rct_mm", "st_sct_mm")},
    }


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    cfg = _load_config(args)
    if _maybe_dry_run(args, cfg):
        return 0
    app = create_app(cfg, ui_dir=args.ui_dir)
    host = args.host or cfg.server.host
    port = args.port or cfg.server.port
    print(f"serving planning API on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfusplan",
        description="Transcranial focused-ultrasound planning: skull metrics, "
                    "array targeting, and full-wave pressure simulation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_dir=True):
        p.add_argument("--config", default=None, metavar="JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--dry-run", action="store_true")
        if out_dir:
            p.add_argument("--out-dir", required=True, metavar="DIR")

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("action", choices=["print-defaults"])
    p.set_defaults(fn=cmd_config)

    p = sub.add_parser("extract", help="threshold + largest component + dilation + mask")
    common(p)
    p.add_argument("--input", required=True, metavar="VOLUME")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("phantom", help="generate a shell phantom pair (rct + perturbed sct)")
    common(p)
    p.set_defaults(fn=cmd_phantom)

    p = sub.add_parser("plan", help="per-element ray metrics for a posed array")
    common(p)
    p.add_argument("--input", required=True, metavar="VOLUME")
    p.add_argument("--target", required=True, metavar="X,Y,Z")
    p.add_argument("--tilt", default=None, metavar="TX,TY")
    p.add_argument("--optimize", action="store_true", help="tilt search maximizing NAE")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("map", help="HU to sound speed / density / absorption volumes")
    common(p)
    p.add_argument("--input", required=True, metavar="VOLUME")
    p.set_defaults(fn=cmd_map)

    p = sub.add_parser("simulate", help="full-wave RMS pressure for one volume")
    common(p)
    p.add_argument("--input", required=True, metavar="VOLUME")
    p.add_argument("--target", required=True, metavar="X,Y,Z")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("compare", help="paired rct/sct pipeline for one case")
    common(p)
    p.add_argument("--rct", required=True, metavar="VOLUME")
    p.add_argument("--sct", required=True, metavar="VOLUME")
    p.add_argument("--target", required=True, metavar="X,Y,Z")
    p.add_argument("--case-id", default=None)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("report", help="aggregate case JSONs into report.csv + summary.json")
    common(p)
    p.add_argument("--cases-dir", required=True, metavar="DIR")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", help="run the interactive planning HTTP service")
    common(p, out_dir=False)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ui-dir", default=None, metavar="DIR",
                   help="static planning-console build to serve at /ui")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    from .compare import StageError
    from .sim import SimulationError
    from .volume import FileFormatError, VolumeError

    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError, FileFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (StageError, SimulationError, VolumeError, ValueError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
