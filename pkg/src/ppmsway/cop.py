"""Per-foot and total center of pressure, and the per-trial COP series.

COP vectors are ``(AP, ML)`` pairs in plate millimetres: AP is the plate y
axis (toward the toes), ML the plate x axis (subject's right).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .calib import (
    CalibrationError,
    PressureMap,
    calibrate_frame,
    plate_origin,
    reconstruct_pressure,
)
from .frameio import TrialMeta, TrialRecording
from .segment import SegmentationError, SegmentationParams, StackAssignment, assign_stack, segment_frame

DEFAULT_LOAD_FLOOR = 50.0  # N
MAX_SKIP_FRACTION = 0.10
CHUNK_FRAMES = 128

COP_COLUMNS = ["frame", "t_s", "ap_L", "ml_L", "ap_R", "ml_R", "ap_T", "ml_T", "f_L", "f_R", "f_T"]


class CopError(ValueError):
    pass


class TrialUnusable(CopError):
    def __init__(self, skipped: dict[int, str], n_frames: int):
        census: dict[str, int] = {}
        for reason in skipped.values():
            census[reason] = census.get(reason, 0) + 1
        detail = ", ".join(f"{k}: {v}" for k, v in sorted(census.items()))
        super().__init__(f"trial unusable: {len(skipped)}/{n_frames} frames skipped ({detail})")
        self.skipped = skipped
        self.census = census


def foot_cop(pm: PressureMap, region) -> tuple[tuple[float, float], float]:
    """Pressure-weighted centroid of one foot region and the load it carries."""
    mask = getattr(region, "mask", region)
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        raise CopError("empty region")
    p = pm.values[rows, cols]
    w = float(np.sum(p))
    if not w > 0:
        raise CopError("unloaded region")
    x = float(np.sum(p * pm.x_centers()[cols])) / w
    y = float(np.sum(p * pm.y_centers()[rows])) / w
    return (y, x), w * pm.pixel_pitch * pm.pixel_pitch


def total_cop(cop_left, f_left: float, cop_right, f_right: float) -> tuple[float, float]:
    """Force-weighted average of the two foot COPs."""
    if f_left < 0 or f_right < 0:
        raise CopError("foot forces must be non-negative")
    f_t = f_left + f_right
    if not f_t > 0:
        raise CopError("no load")
    return ((f_left * cop_left[0] + f_right * cop_right[0]) / f_t,
            (f_left * cop_left[1] + f_right * cop_right[1]) / f_t)


@dataclass(frozen=True)
class CopSample:
    frame_index: int
    t_s: float
    cop_left: tuple[float, float]
    cop_right: tuple[float, float]
    cop_total: tuple[float, float]
    f_left: float
    f_right: float
    f_total: float


@dataclass(frozen=True, eq=False)
class CopSeries:
    """Stabilogram of one trial, stored column-wise.

    COP arrays are ``(k, 2)`` with columns ``(AP, ML)``.  ``skipped`` names
    every frame left out of the series and why.
    """

    meta: TrialMeta | None
    frame_index: np.ndarray
    t_s: np.ndarray
    cop_left: np.ndarray
    cop_right: np.ndarray
    cop_total: np.ndarray
    f_left: np.ndarray
    f_right: np.ndarray
    f_total: np.ndarray
    calibration: np.ndarray | None = None
    skipped: dict[int, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frame_index)

    def sample(self, i: int) -> CopSample:
        return CopSample(int(self.frame_index[i]), float(self.t_s[i]),
                         tuple(map(float, self.cop_left[i])), tuple(map(float, self.cop_right[i])),
                         tuple(map(float, self.cop_total[i])),
                         float(self.f_left[i]), float(self.f_right[i]), float(self.f_total[i]))

    @property
    def samples(self) -> list[CopSample]:
        return [self.sample(i) for i in range(len(self))]

    @classmethod
    def from_samples(cls, samples, meta=None) -> "CopSeries":
        samples = list(samples)
        arr = lambda attr: np.array([getattr(s, attr) for s in samples], dtype=np.float64)
        cop = lambda attr: np.array([getattr(s, attr) for s in samples], dtype=np.float64).reshape(-1, 2)
        return cls(meta, np.array([s.frame_index for s in samples], dtype=np.int64), arr("t_s"),
                   cop("cop_left"), cop("cop_right"), cop("cop_total"),
                   arr("f_left"), arr("f_right"), arr("f_total"))


def cop_frame(frame, F_t: float, seg: SegmentationParams, pixel_pitch: float,
              origin=None) -> CopSample:
    """Full per-frame pipeline, one step at a time.

    Segments the feet, calibrates on their union, reconstructs pressure and
    combines the two foot COPs.  Raises CalibrationError, SegmentationError
    or CopError when the frame cannot be used.
    """
    pix = np.asarray(getattr(frame, "pixels", frame))
    if origin is None:
        origin = plate_origin(pix.shape[1], pix.shape[0], pixel_pitch)
    left, right = segment_frame(pix, seg, pixel_pitch, origin[0])
    mask = left.mask | right.mask
    c = calibrate_frame(pix, mask, F_t, pixel_pitch)
    pm = reconstruct_pressure(pix, mask, c, pixel_pitch, origin)
    cop_l, f_l = foot_cop(pm, left)
    cop_r, f_r = foot_cop(pm, right)
    cop_t = total_cop(cop_l, f_l, cop_r, f_r)
    index = getattr(frame, "timestamp_index", 0)
    return CopSample(index, 0.0, cop_l, cop_r, cop_t, f_l, f_r, f_l + f_r)


# ---------------------------------------------------------------------------
# stack path


def active_window(frames: np.ndarray, pad: int = 1) -> tuple[slice, slice]:
    """Bounding rows/cols of every pixel that is ever non-zero, padded."""
    any_on = np.any(frames, axis=0)
    rows = np.flatnonzero(any_on.any(axis=1))
    cols = np.flatnonzero(any_on.any(axis=0))
    if len(rows) == 0:
        return slice(0, 0), slice(0, 0)
    h, w = any_on.shape
    return (slice(max(rows[0] - pad, 0), min(rows[-1] + pad + 1, h)),
            slice(max(cols[0] - pad, 0), min(cols[-1] + pad + 1, w)))


def foot_moments(weights_at: np.ndarray, assignment: StackAssignment, shape) -> np.ndarray:
    """Per-frame, per-foot sums of weight, weight*col and weight*row.

    ``weights_at`` holds the weight of each assigned pixel (aligned with
    ``assignment.flat_index``).  Returns ``(n, 2, 3)``: foot 0 is left.
    """
    n, h, w = shape
    frame, rem = np.divmod(assignment.flat_index, h * w)
    row, col = np.divmod(rem, w)
    key = frame * 2 + (assignment.foot.astype(np.int64) - 1)
    out = np.empty((n * 2, 3))
    out[:, 0] = np.bincount(key, weights=weights_at, minlength=2 * n)
    out[:, 1] = np.bincount(key, weights=weights_at * col, minlength=2 * n)
    out[:, 2] = np.bincount(key, weights=weights_at * row, minlength=2 * n)
    return out.reshape(n, 2, 3)


def moments_to_cop(moments: np.ndarray, pitch: float, origin) -> np.ndarray:
    """``(n, 2, 3)`` moments to ``(n, 2, 2)`` foot COPs as (AP, ML) mm."""
    with np.errstate(invalid="ignore", divide="ignore"):
        col = moments[..., 1] / moments[..., 0]
        row = moments[..., 2] / moments[..., 0]
    cop = np.empty(moments.shape[:2] + (2,))
    cop[..., 0] = origin[1] - (row + 0.5) * pitch
    cop[..., 1] = origin[0] + (col + 0.5) * pitch
    return cop


@dataclass
class FrameFeet:
    """Stack-path result: per-frame foot moments plus per-frame failures."""

    moments: np.ndarray  # (n, 2, 3) in the cropped grid
    failures: dict[int, str]
    pitch: float
    origin: tuple[float, float]  # of the cropped grid

    def cops(self) -> np.ndarray:
        return moments_to_cop(self.moments, self.pitch, self.origin)


def trial_feet(trial: TrialRecording, seg: SegmentationParams, chunk: int = CHUNK_FRAMES,
               keep_pressure: bool = False):
    """Segment every frame and accumulate the uncalibrated I**1.5 foot moments.

    With ``keep_pressure`` also returns, per chunk, the assigned flat indices
    and I**1.5 values in the cropped grid (for rebinning).
    """
    frames = trial.frames
    n = len(frames)
    pitch = trial.meta.pixel_pitch
    full_origin = plate_origin(trial.width, trial.height, pitch)
    rs, cs = active_window(frames)
    if rs.stop - rs.start == 0:
        feet = FrameFeet(np.zeros((n, 2, 3)), {f: "feet not found" for f in range(n)}, pitch, full_origin)
        return (feet, []) if keep_pressure else feet
    origin = (full_origin[0] + cs.start * pitch, full_origin[1] - rs.start * pitch)
    moments = np.zeros((n, 2, 3))
    failures: dict[int, str] = {}
    kept = []
    for start in range(0, n, chunk):
        block = np.ascontiguousarray(frames[start:start + chunk, rs, cs])
        assignment = assign_stack(block, seg, pitch, origin[0])
        weights = block.ravel()[assignment.flat_index].astype(np.float64) ** 1.5
        moments[start:start + len(block)] = foot_moments(weights, assignment, block.shape)
        failures.update({start + f: r for f, r in assignment.failures.items()})
        if keep_pressure:
            kept.append((start, block.shape, assignment, weights))
    feet = FrameFeet(moments, failures, pitch, origin)
    return (feet, kept) if keep_pressure else feet


def frame_usability(feet: FrameFeet, totals: np.ndarray, load_floor: float) -> dict[int, str]:
    """Reason each unusable frame is skipped; frames not listed are usable."""
    skipped = {}
    w = feet.moments[..., 0]
    for f in range(len(totals)):
        if not totals[f] >= load_floor:
            skipped[f] = "load below floor"
        elif f in feet.failures:
            skipped[f] = feet.failures[f]
        elif w[f].sum() == 0:
            skipped[f] = "no contact signal under load"
        elif w[f, 0] == 0 or w[f, 1] == 0:
            skipped[f] = "unloaded region"
    return skipped


def cop_series(trial: TrialRecording, seg: SegmentationParams | None = None,
               load_floor: float = DEFAULT_LOAD_FLOOR, calibration: str = "frame",
               max_skip_fraction: float = MAX_SKIP_FRACTION) -> CopSeries:
    """COP time series of one trial.

    Each frame is segmented, calibrated against its force-sensor total (or a
    single trial-wide constant with ``calibration="trial"``), reconstructed,
    and reduced to left, right and total COP.  Frames under ``load_floor`` or
    without two loaded feet are skipped; more than ``max_skip_fraction``
    skipped raises TrialUnusable.
    """
    seg = seg or SegmentationParams()
    feet = trial_feet(trial, seg)
    totals = np.asarray(trial.force_totals, dtype=np.float64)
    return _series_from_feet(trial.meta, feet, totals, load_floor, calibration, max_skip_fraction)


def _series_from_feet(meta, feet: FrameFeet, totals, load_floor, calibration, max_skip_fraction) -> CopSeries:
    n = len(totals)
    skipped = frame_usability(feet, totals, load_floor)
    if len(skipped) > max_skip_fraction * n:
        raise TrialUnusable(skipped, n)
    ok = np.array([f not in skipped for f in range(n)], dtype=bool)
    idx = np.flatnonzero(ok)
    area = feet.pitch * feet.pitch
    w = feet.moments[idx, :, 0]
    if calibration == "frame":
        c = totals[idx] / (w.sum(axis=1) * area)
    elif calibration == "trial":
        c = np.full(len(idx), totals[idx].sum() / (w.sum() * area))
    else:
        raise ValueError(f"unknown calibration mode {calibration!r}")
    forces = c[:, None] * w * area
    cops = feet.cops()[idx]
    f_l, f_r = forces[:, 0], forces[:, 1]
    f_t = f_l + f_r
    cop_t = (f_l[:, None] * cops[:, 0] + f_r[:, None] * cops[:, 1]) / f_t[:, None]
    fps = meta.fps if meta is not None else 1.0
    return CopSeries(meta, idx.astype(np.int64), idx / fps, cops[:, 0], cops[:, 1], cop_t,
                     f_l, f_r, f_t, c, skipped)


def write_cop_csv(series: CopSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COP_COLUMNS)
        for i in range(len(series)):
            writer.writerow([int(series.frame_index[i])] + [repr(float(v)) for v in (
                series.t_s[i], *series.cop_left[i], *series.cop_right[i], *series.cop_total[i],
                series.f_left[i], series.f_right[i], series.f_total[i])])


def read_cop_csv(path, meta: TrialMeta | None = None) -> CopSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != COP_COLUMNS:
            raise CopError(f"unexpected COP CSV header {header}")
        rows = [[float(v) for v in row] for row in reader]
    a = np.array(rows, dtype=np.float64).reshape(-1, len(COP_COLUMNS))
    return CopSeries(meta, a[:, 0].astype(np.int64), a[:, 1], a[:, 2:4], a[:, 4:6], a[:, 6:8],
                     a[:, 8], a[:, 9], a[:, 10])


__all__ = [
    "CalibrationError", "SegmentationError", "CopError", "TrialUnusable", "CopSample", "CopSeries",
    "foot_cop", "total_cop", "cop_frame", "cop_series", "write_cop_csv", "read_cop_csv",
]
