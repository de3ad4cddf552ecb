"""Sensor-pitch degradation: rebin pressure maps onto coarser sensel grids.

A sensel integrates the load over its own area, so rebinning splits every
camera pixel's force among the cells it overlaps, in proportion to the
overlap area.  Segmentation and the COP are then computed on the coarse grid,
the way a low-resolution mat would see the foot.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calib import PressureMap
from .cohort import generate_trial, trial_specs
from .cop import (
    DEFAULT_LOAD_FLOOR,
    MAX_SKIP_FRACTION,
    foot_moments,
    frame_usability,
    moments_to_cop,
    trial_feet,
)
from .frameio import Pose
from .scene import MARKET_PITCH_MM, Scene
from .segment import SegmentationParams, assign_stack
from .sway import AXES, MetricsRow, metrics_table, pose_grouping, pose_summary, standard_error

SWEEP_COLUMNS = ["pitch_mm", "offset_id", "axis", "median_cop_err_mm", "p95_cop_err_mm", "group_final_p", "discriminates"]
INVALID_TRIAL_FRACTION = 0.5


@dataclass(frozen=True)
class SensorGridSpec:
    pitch_mm: float
    origin_offset_mm: tuple[float, float] = (0.0, 0.0)  # grid shift along +x and down the rows


def overlap_matrix(n_pixels: int, ratio: float, offset_px: float) -> tuple[np.ndarray, float]:
    """Fraction of each pixel falling in each cell along one axis.

    ``ratio`` is cell pitch / pixel pitch and ``offset_px`` shifts the grid
    lines.  Returns ``(weights (n_cells, n_pixels), first_boundary_px)``;
    every column sums to one.
    """
    off = math.fmod(offset_px, ratio)
    if off < 0:
        off += ratio
    b0 = off - ratio if off > 0 else 0.0
    n_cells = math.ceil((n_pixels - b0) / ratio - 1e-12)
    lo = b0 + np.arange(n_cells) * ratio
    hi = lo + ratio
    pix_lo = np.arange(n_pixels, dtype=np.float64)
    ov = np.minimum(hi[:, None], pix_lo[None, :] + 1.0) - np.maximum(lo[:, None], pix_lo[None, :])
    return np.clip(ov, 0.0, None), b0


@dataclass(frozen=True)
class _Grid:
    wy: np.ndarray  # (cells_y, pixels_y)
    wx: np.ndarray  # (cells_x, pixels_x)
    pitch: float
    origin: tuple[float, float]


def _grid(shape, pixel_pitch: float, origin, grid: SensorGridSpec) -> _Grid:
    if grid.pitch_mm < pixel_pitch * (1 - 1e-12):
        raise ValueError(f"grid pitch {grid.pitch_mm} mm is finer than the map pitch {pixel_pitch} mm")
    ratio = grid.pitch_mm / pixel_pitch
    wy, by = overlap_matrix(shape[0], ratio, grid.origin_offset_mm[1] / pixel_pitch)
    wx, bx = overlap_matrix(shape[1], ratio, grid.origin_offset_mm[0] / pixel_pitch)
    return _Grid(wy, wx, grid.pitch_mm, (origin[0] + bx * pixel_pitch, origin[1] - by * pixel_pitch))


def downsample_pressure(pm: PressureMap, grid: SensorGridSpec) -> PressureMap:
    """Force-conserving rebin of ``pm`` onto ``grid``."""
    g = _grid(pm.values.shape, pm.pixel_pitch, pm.origin, grid)
    force = pm.values * (pm.pixel_pitch * pm.pixel_pitch)
    cells = g.wy @ force @ g.wx.T
    mask = (g.wy @ pm.mask.astype(np.float64) @ g.wx.T) > 0
    return PressureMap(cells / (g.pitch * g.pitch), mask, g.pitch, g.origin)


def default_offsets(pitch: float, count: int) -> list[tuple[float, float]]:
    """``count`` diagonal grid shifts evenly spread over one cell."""
    return [(pitch * k / count, pitch * k / count) for k in range(count)]


@dataclass
class PitchErrors:
    """Per-frame result of the pipeline on one rebinned trial."""

    error: np.ndarray  # (n, 2) |cop_total - truth| as (AP, ML) mm; NaN where skipped
    cop_total: np.ndarray  # (n, 2), NaN where skipped
    skipped: dict[int, str]

    @property
    def usable(self) -> np.ndarray:
        return ~np.isnan(self.error[:, 0])


def _coarse_pipeline(trial, truth, grids: list[SensorGridSpec], seg: SegmentationParams,
                     load_floor: float) -> list[PitchErrors]:
    feet, chunks = trial_feet(trial, seg, keep_pressure=True)
    totals = np.asarray(trial.force_totals, dtype=np.float64)
    n = len(totals)
    base_skip = frame_usability(feet, totals, load_floor)
    pitch = feet.pitch
    area = pitch * pitch
    w_all = feet.moments[..., 0].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(w_all > 0, totals / (w_all * area), 0.0)

    results = []
    if not chunks:
        blank = np.full((n, 2), np.nan)
        return [PitchErrors(blank.copy(), blank.copy(), dict(base_skip)) for _ in grids]
    # calibrated per-pixel forces, built once and shared by every grid
    forces = []
    for start, shape, assignment, weights in chunks:
        m, h, w = shape
        cs = c[start:start + m]
        force = np.zeros(m * h * w)
        force[assignment.flat_index] = cs[assignment.flat_index // (h * w)] * weights * area
        forces.append((start, force.reshape(shape), cs))
    h, w = chunks[0][1][1:]
    for spec in grids:
        g = _grid((h, w), pitch, feet.origin, spec)
        moments = np.zeros((n, 2, 3))
        failures: dict[int, str] = {}
        for start, force, cs in forces:
            m = len(force)
            cells = np.matmul(g.wy, (force.reshape(m * h, w) @ g.wx.T).reshape(m, h, -1))
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(cs > 0, 1.0 / (cs * g.pitch * g.pitch), 0.0)
            # equivalent camera counts of each cell, so intensity thresholds still apply
            v = np.clip(cells, 0.0, None) * scale[:, None, None]
            coarse = assign_stack(np.cbrt(v * v), seg, g.pitch, g.origin[0])
            cw = cells.ravel()[coarse.flat_index]
            moments[start:start + m] = foot_moments(cw, coarse, cells.shape)
            failures.update({start + f: r for f, r in coarse.failures.items()})
        skipped = dict(base_skip)
        fw = moments[..., 0]
        for f in range(n):
            if f in skipped:
                continue
            if f in failures:
                skipped[f] = failures[f]
            elif fw[f, 0] <= 0 or fw[f, 1] <= 0:
                skipped[f] = "unloaded region"
        cops = moments_to_cop(moments, g.pitch, g.origin)
        with np.errstate(invalid="ignore", divide="ignore"):
            cop_t = (fw[:, 0, None] * cops[:, 0] + fw[:, 1, None] * cops[:, 1]) / fw.sum(axis=1)[:, None]
        bad = np.array(sorted(skipped), dtype=np.int64)
        cop_t[bad] = np.nan
        err = np.abs(cop_t - truth.cop_true)
        results.append(PitchErrors(err, cop_t, skipped))
    return results


def cop_error_at_pitch(trial, truth, grid: SensorGridSpec, seg: SegmentationParams | None = None,
                       load_floor: float = DEFAULT_LOAD_FLOOR) -> PitchErrors:
    """Run the pipeline with pressure rebinned onto ``grid`` before the COP step.

    Frames where the feet cannot be separated on the coarse grid are recorded
    in ``skipped`` rather than raised.
    """
    return _coarse_pipeline(trial, truth, [grid], seg or SegmentationParams(), load_floor)[0]


# ---------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class SweepRow:
    pitch_mm: float
    offset_id: int
    offset_mm: tuple[float, float]
    axis: str
    median_cop_err_mm: float
    p95_cop_err_mm: float
    group_final_p: float
    discriminates: bool
    valid: bool
    usable_trials: float  # fraction


@dataclass
class SweepResult:
    pitches: list[float]
    n_offsets: int
    alpha: float
    rows: list[SweepRow]
    # (pitch, offset_id, axis) -> {pose: (mean SE over subjects, mean abs difference)}
    se_by_pose: dict = field(default_factory=dict)
    pixel_pitch: float = 0.0

    def row(self, pitch: float, offset_id: int, axis: str) -> SweepRow:
        for r in self.rows:
            if r.pitch_mm == pitch and r.offset_id == offset_id and r.axis == axis:
                return r
        raise KeyError((pitch, offset_id, axis))

    def flags(self, axis: str) -> list[bool]:
        """Per pitch: every grid offset valid and discriminating."""
        return [all(self.row(p, k, axis).valid and self.row(p, k, axis).discriminates
                    for k in range(self.n_offsets)) for p in self.pitches]

    def median_error(self, axis: str) -> list[float]:
        """Cohort median COP error per pitch, averaged over grid offsets."""
        return [float(np.mean([self.row(p, k, axis).median_cop_err_mm for k in range(self.n_offsets)]))
                for p in self.pitches]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            writer.writerow([repr(r.pitch_mm), r.offset_id, r.axis, repr(r.median_cop_err_mm),
                             repr(r.p95_cop_err_mm), repr(r.group_final_p),
                             "true" if r.discriminates else ("invalid" if not r.valid else "false")])
        return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != SWEEP_COLUMNS:
        raise ValueError(f"unexpected sweep header {reader.fieldnames}")
    out = []
    for rec in reader:
        out.append({
            "pitch_mm": float(rec["pitch_mm"]), "offset_id": int(rec["offset_id"]), "axis": rec["axis"],
            "median_cop_err_mm": float(rec["median_cop_err_mm"]), "p95_cop_err_mm": float(rec["p95_cop_err_mm"]),
            "group_final_p": float(rec["group_final_p"]), "discriminates": rec["discriminates"] == "true",
            "valid": rec["discriminates"] != "invalid",
        })
    return out


@dataclass(frozen=True)
class MinimumResolution:
    pitch_mm: float | None
    non_monotone: bool


def minimum_resolution(sweep, axis: str = "ML") -> MinimumResolution:
    """Coarsest pitch such that it and every finer pitch discriminate.

    ``sweep`` is a SweepResult or a ``(pitches, flags)`` pair.
    """
    if isinstance(sweep, SweepResult):
        pitches, flags = sweep.pitches, sweep.flags(axis)
    else:
        pitches, flags = sweep
    if len(pitches) < 2:
        raise ValueError("minimum_resolution needs at least two pitches")
    order = np.argsort(pitches)
    pitches = [pitches[i] for i in order]
    flags = [bool(flags[i]) for i in order]
    best = None
    for p, ok in zip(pitches, flags):
        if not ok:
            break
        best = p
    first_fail = next((i for i, ok in enumerate(flags) if not ok), len(flags))
    non_monotone = any(flags[first_fail:])
    return MinimumResolution(best, non_monotone)


@dataclass
class _TrialSweep:
    name: str
    subject: str
    pose: Pose
    repeat: int
    # per (pitch index, offset id): (errors (n,2) or None, SwayMetrics or None)
    cells: dict


def _sweep_trial(args):
    scene, seed, spec, grids, seg, load_floor = args
    trial, truth = generate_trial(scene, seed, spec)
    flat = [g for gs in grids for g in gs]
    per = _coarse_pipeline(trial, truth, flat, seg, load_floor)
    n = len(trial)
    out = {}
    i = 0
    for pi, gs in enumerate(grids):
        for k in range(len(gs)):
            r = per[i]
            i += 1
            usable = r.usable
            metrics = None
            if len(r.skipped) <= MAX_SKIP_FRACTION * n and usable.sum() >= 2:
                metrics = standard_error(r.cop_total[usable])
            out[(pi, k)] = (r.error[usable], metrics)
    return _TrialSweep(spec.name, spec.subject_id, spec.pose, spec.repeat, out)


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=1))


def resolution_sweep(scene: Scene, pitches=None, alpha: float | None = None, seed: int | None = None,
                     n_offsets: int | None = None, jobs: int = 1, seg: SegmentationParams | None = None) -> SweepResult:
    """Render the cohort once per trial and analyse it at every pitch and offset.

    Each row reports the pooled COP error and the pose-grouping outcome on
    that grid.  A row is invalid when more than half the trials are unusable
    or fewer than two subjects keep a complete pose design.
    """
    pitches = list(pitches if pitches is not None else scene.pitches)
    alpha = scene.alpha if alpha is None else alpha
    seed = scene.seed if seed is None else seed
    if seed is None:
        raise ValueError("a seed is required")
    n_offsets = scene.offsets if n_offsets is None else n_offsets
    seg = seg or scene.segmentation()
    if any(p < scene.pixel_pitch_mm * (1 - 1e-12) for p in pitches):
        raise ValueError("pitches must not be finer than the camera pixel pitch")
    if pitches != sorted(set(pitches)):
        raise ValueError("pitches must be strictly increasing")
    grids = [[SensorGridSpec(p, off) for off in default_offsets(p, n_offsets)] for p in pitches]
    specs = trial_specs(scene, seed)
    work = [(scene, seed, s, grids, seg, scene.load_floor_n) for s in specs]
    trials = _map(_sweep_trial, work, jobs)

    rows, se_by_pose = [], {}
    for pi, p in enumerate(pitches):
        for k in range(n_offsets):
            errs = [t.cells[(pi, k)][0] for t in trials]
            pooled = np.concatenate(errs) if errs else np.zeros((0, 2))
            metric_rows = [MetricsRow(t.subject, t.pose, t.repeat, t.cells[(pi, k)][1])
                           for t in trials if t.cells[(pi, k)][1] is not None]
            usable = len(metric_rows) / max(len(trials), 1)
            table = metrics_table(metric_rows)
            complete = {s: v for s, v in table.items() if all(q in v for q in Pose)}
            valid = usable >= 1 - INVALID_TRIAL_FRACTION and len(complete) >= 2
            for ai, axis in enumerate(AXES):
                med = float(np.median(pooled[:, ai])) if len(pooled) else math.nan
                p95 = float(np.percentile(pooled[:, ai], 95)) if len(pooled) else math.nan
                final_p, disc = math.nan, False
                if valid:
                    outcome = pose_grouping(complete, axis, alpha)
                    final_p, disc = outcome.final_test.p_value, outcome.discriminates
                se_by_pose[(p, k, axis)] = pose_summary(table, axis) if table else {}
                rows.append(SweepRow(p, k, grids[pi][k].origin_offset_mm, axis, med, p95, final_p, disc, valid, usable))
    return SweepResult(pitches, n_offsets, alpha, rows, se_by_pose, scene.pixel_pitch_mm)


def sweep_summary(sweep: SweepResult) -> str:
    lines = ["Minimum sensor pitch that still separates T7 from the balanced poses:"]
    for axis in AXES:
        mr = minimum_resolution(sweep, axis) if len(sweep.pitches) >= 2 else None
        if mr is None:
            text = "n/a (single pitch)"
        elif mr.pitch_mm is None:
            text = "none (even the finest pitch fails)"
        else:
            text = f"{mr.pitch_mm:g} mm"
        if mr is not None and mr.non_monotone:
            text += "  [non-monotone: a coarser pitch discriminates again]"
        lines.append(f"  {axis}: {text}")
    lines.append("")
    lines.append("pitch_mm  axis  median_err_mm  offset spread  discriminates(all offsets)  mean SE T1-T6 / T7 (mm)")
    for axis in AXES:
        flags = sweep.flags(axis)
        meds = sweep.median_error(axis)
        for p, ok, med in zip(sweep.pitches, flags, meds):
            rows = [sweep.row(p, k, axis) for k in range(sweep.n_offsets)]
            per = [r.median_cop_err_mm for r in rows]
            spread = f"{min(per):.4f}-{max(per):.4f}"
            state = str(ok) if all(r.valid for r in rows) else "invalid"
            se = sweep.se_by_pose.get((p, 0, axis), {})
            bal = [se[q][0] for q in Pose if q is not Pose.T7 and q in se]
            imb = se.get(Pose.T7, (math.nan,))[0]
            bal_txt = f"{np.mean(bal):.3f}" if bal else "nan"
            tag = "  <- market baseline" if math.isclose(p, MARKET_PITCH_MM) else ""
            lines.append(f"{p:8g}  {axis:>4}  {med:13.4f}  {spread:>13}  {state:>26}  {bal_txt} / {imb:.3f}{tag}")
    if MARKET_PITCH_MM in sweep.pitches:
        lines.append("")
        lines.append(f"Market baseline ({MARKET_PITCH_MM:g} mm sensels) against the camera-pitch sway magnitudes:")
        finest = sweep.pitches[0]
        for axis in AXES:
            se = sweep.se_by_pose.get((finest, 0, axis), {})
            vals = [v[0] for v in se.values()]
            if vals:
                lo, hi = min(vals), max(vals)
                lines.append(f"  {axis}: SE {lo:.3f}-{hi:.3f} mm -> baseline pitch is "
                             f"{MARKET_PITCH_MM / hi:.1f}x to {MARKET_PITCH_MM / lo:.1f}x the sway magnitude")
            flag = sweep.flags(axis)[sweep.pitches.index(MARKET_PITCH_MM)]
            med = sweep.median_error(axis)[sweep.pitches.index(MARKET_PITCH_MM)]
            lines.append(f"  {axis}: median COP error at baseline {med:.4f} mm; discriminates: {flag}")
    return "\n".join(lines) + "\n"
