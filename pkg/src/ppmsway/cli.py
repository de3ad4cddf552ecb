"""Batch command-line front end.

Commands::

    synth     render a synthetic cohort to PPMF files plus ground-truth sidecars
    analyze   COP series, sway metrics and optional per-trial plots
    report    per-pose bar chart and the pose-grouping tests from metrics.csv
    sweep     COP error and discrimination against simulated sensor pitch
    selftest  a small end-to-end check of the installed package

Exit codes: 0 success, 1 failure with a census of what went wrong, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .calib import CalibrationError, calibrate_frame, reconstruct_pressure, total_force
from .cohort import generate_trial, trial_specs
from .cop import CopError, cop_series, write_cop_csv
from .frameio import Pose, PPMFError, atomic_write_bytes, read_trial, write_trial
from .resolution import resolution_sweep, sweep_summary
from .scene import ConfigError, Scene, apply_setting, copy_scene, dump_scene, load_scene, resolve_seed
from .segment import SegmentationError
from .stats import Sidedness, paired_t_test
from .svg import pose_bar_figure, trial_figure
from .sway import (
    AXES,
    MetricsRow,
    SwayError,
    metrics_table,
    pose_grouping,
    pose_summary,
    read_metrics_csv,
    standard_error,
    write_metrics_csv,
)
from .synth import write_truth_csv

MANIFEST_COLUMNS = ["trial", "file", "subject", "pose", "repeat", "target_se_ap_mm", "target_se_ml_mm", "seed"]
ERRORS_COLUMNS = ["file", "error"]

# flag -> scene key
_OVERRIDES = {
    "subjects": "subjects", "repeats": "repeats", "poses": "poses", "threshold": "threshold",
    "min_area": "min_area_mm2", "connectivity": "connectivity", "split_x": "split_x",
    "load_floor": "load_floor_n", "alpha": "alpha", "pitches": "pitches", "offsets": "offsets",
    "duration": "duration_s",
}


def _atomic_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _atomic_via(path: Path, writer) -> None:
    """Let ``writer(tmp_path)`` produce the file, then move it into place."""
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def build_scene(args) -> Scene:
    scene = load_scene(getattr(args, "config", None))
    for flag, key in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            apply_setting(scene, key, str(value))
    scene.check()
    return scene


def _prepare_out(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} exists and is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)


def _pool_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=1))


# ---------------------------------------------------------------------------
# synth


def _synth_one(args):
    scene, seed, spec, trial_dir = args
    trial, truth = generate_trial(scene, seed, spec)
    write_trial(trial, trial_dir / f"{spec.name}.ppmf")
    _atomic_via(trial_dir / f"{spec.name}.truth.csv", lambda p: write_truth_csv(truth, p))
    return spec.name


def cmd_synth(args) -> int:
    scene = build_scene(args)
    seed = resolve_seed(args.seed, scene)
    scene.seed = seed
    out = Path(args.out)
    _prepare_out(out, args.force)
    trial_dir = out / "trials"
    trial_dir.mkdir(exist_ok=True)
    specs = trial_specs(scene, seed)
    _pool_map(_synth_one, [(scene, seed, s, trial_dir) for s in specs], args.jobs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for s in specs:
        writer.writerow([s.name, f"trials/{s.name}.ppmf", s.subject_id, f"T{int(s.pose)}", s.repeat,
                         repr(s.target_se[0]), repr(s.target_se[1]), s.seed])
    _atomic_text(out / "manifest.csv", buf.getvalue())
    _atomic_text(out / "scene.txt", dump_scene(scene))
    print(f"wrote {len(specs)} trials to {trial_dir}")
    return 0


# ---------------------------------------------------------------------------
# analyze


def _analyze_one(args):
    path, seg, load_floor, out, plots = args
    try:
        trial = read_trial(path)
        series = cop_series(trial, seg, load_floor)
        metrics = standard_error(series)
    except (PPMFError, CopError, SegmentationError, CalibrationError, SwayError, OSError) as exc:
        return path, None, str(exc)
    name = trial.meta.name
    _atomic_via(out / "cop" / f"{name}.csv", lambda p: write_cop_csv(series, p))
    if plots:
        _atomic_text(out / "plots" / f"{name}.svg", trial_figure(series, name))
    return path, MetricsRow(trial.meta.subject_id, trial.meta.pose, trial.meta.repeat_index, metrics), None


def cmd_analyze(args) -> int:
    scene = build_scene(args)
    inp, out = Path(args.input), Path(args.out)
    files = sorted(inp.rglob("*.ppmf")) if inp.is_dir() else ([inp] if inp.exists() else [])
    out.mkdir(parents=True, exist_ok=True)
    (out / "cop").mkdir(exist_ok=True)
    if args.plots:
        (out / "plots").mkdir(exist_ok=True)
    results = _pool_map(_analyze_one, [(f, scene.segmentation(), scene.load_floor_n, out, args.plots)
                                       for f in files], args.jobs)
    rows = [r for _, r, _ in results if r is not None]
    rows.sort(key=lambda r: (r.subject, int(r.pose), r.repeat))
    failures = [(str(p), e) for p, _, e in results if e is not None]
    _atomic_via(out / "metrics.csv", lambda p: write_metrics_csv(rows, p))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ERRORS_COLUMNS)
    writer.writerows(failures)
    _atomic_text(out / "errors.csv", buf.getvalue())
    print(f"analyzed {len(rows)} of {len(files)} trials")
    if not files:
        print(f"error census: no PPMF trials found under {inp}", file=sys.stderr)
        return 1
    if failures:
        print(f"error census: {len(failures)} trial(s) failed (see errors.csv)", file=sys.stderr)
        for f, e in failures:
            print(f"  {f}: {e}", file=sys.stderr)
    return 1 if not rows else 0


# ---------------------------------------------------------------------------
# report


def grouping_report(table, alpha: float) -> dict:
    report = {}
    for axis in AXES:
        try:
            report[axis] = pose_grouping(table, axis, alpha).to_dict()
        except SwayError as exc:
            report[axis] = {"axis": axis, "error": str(exc)}
    return report


def cmd_report(args) -> int:
    scene = build_scene(args)
    inp = Path(args.input)
    path = inp / "metrics.csv" if inp.is_dir() else inp
    out = Path(args.out) if args.out else path.parent
    try:
        rows = read_metrics_csv(path)
    except (OSError, SwayError) as exc:
        print(f"error: cannot read metrics: {exc}", file=sys.stderr)
        return 1
    out.mkdir(parents=True, exist_ok=True)
    table = metrics_table(rows)
    summaries = {axis: pose_summary(table, axis) for axis in AXES}
    poses = [p for p in Pose if any(p in summaries[a] for a in AXES)]
    _atomic_text(out / "pose_se.svg", pose_bar_figure(summaries["AP"], summaries["ML"], poses,
                                                   "Mean SE of total COP per pose"))
    report = grouping_report(table, scene.alpha)
    _atomic_text(out / "grouping.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    lines = ["pose  mean_se_ap_mm  mad_ap_mm  mean_se_ml_mm  mad_ml_mm"]
    for p in poses:
        ap = summaries["AP"].get(p, (float("nan"), float("nan")))
        ml = summaries["ML"].get(p, (float("nan"), float("nan")))
        lines.append(f"T{int(p)}    {ap[0]:13.4f}  {ap[1]:9.4f}  {ml[0]:13.4f}  {ml[1]:9.4f}")
    lines.append("")
    for axis in AXES:
        r = report[axis]
        lines.append(r.get("summary") or f"{axis}: {r['error']}")
    text = "\n".join(lines) + "\n"
    _atomic_text(out / "report.txt", text)
    print(text, end="")
    return 1 if any("error" in report[a] for a in AXES) else 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    scene = build_scene(args)
    seed = resolve_seed(args.seed, scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = resolution_sweep(scene, seed=seed, jobs=args.jobs)
    _atomic_text(out / "sweep.csv", result.to_csv())
    summary = sweep_summary(result)
    _atomic_text(out / "summary.txt", summary)
    print(summary, end="")
    return 0


# ---------------------------------------------------------------------------
# selftest


def cmd_selftest(args) -> int:
    checks = []
    scene = copy_scene(Scene(), subjects=1, repeats=1, poses=(Pose.T1,), duration_s=5.0)
    trial, truth = generate_trial(scene, 1, trial_specs(scene, 1)[0])
    series = cop_series(trial, scene.segmentation())
    err = np.abs(series.cop_total - truth.cop_true[series.frame_index])
    checks.append(("COP within half a pixel of truth", bool(np.all(err < scene.pixel_pitch_mm / 2))))
    rng = np.random.default_rng(0)
    frame = rng.integers(0, 4000, (32, 32))
    mask = frame > 1000
    c = calibrate_frame(frame, mask, 500.0, 0.26)
    closure = total_force(reconstruct_pressure(frame, mask, c, 0.26))
    checks.append(("calibration closes on the sensor total", abs(closure - 500.0) <= 1e-9 * 500.0))
    t = paired_t_test(np.arange(1.0, 6.0), np.zeros(5), Sidedness.TWO_SIDED)
    checks.append(("paired t fixture", abs(t.t_stat - 4.2426) < 1e-3 and abs(t.p_value - 0.0132) < 1e-3))
    for label, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
    return 0 if all(ok for _, ok in checks) else 1


# ---------------------------------------------------------------------------


def _scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scene file (key = value lines)")
    p.add_argument("--threshold", help="'0.05', 'rel:0.05' or 'fixed:<counts>'")
    p.add_argument("--min-area", type=float, help="minimum component area, mm^2")
    p.add_argument("--connectivity", type=int, choices=(4, 8))
    p.add_argument("--split-x", type=float, help="left/right split line, plate x mm")
    p.add_argument("--load-floor", type=float, help="minimum sensor total for a usable frame, N")
    p.add_argument("--alpha", type=float)
    p.add_argument("--jobs", type=int, default=1)


def _cohort_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="random seed (falls back to the config, then PPM_SEED)")
    p.add_argument("--subjects", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--poses", help="comma-separated, e.g. T1,T7")
    p.add_argument("--duration", type=float, help="trial duration, s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppmsway", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic cohort")
    _scene_flags(p)
    _cohort_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="COP series and sway metrics for PPMF trials")
    _scene_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plots", action="store_true", help="write a six-panel SVG per trial")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="per-pose bars and grouping tests from metrics.csv")
    _scene_flags(p)
    p.add_argument("--input", required=True, help="metrics.csv or the directory holding it")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="resolution sweep over simulated sensor pitches")
    _scene_flags(p)
    _cohort_flags(p)
    p.add_argument("--pitches", help="comma-separated mm, strictly increasing")
    p.add_argument("--offsets", type=int, help="grid offsets per pitch")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="quick end-to-end check")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
