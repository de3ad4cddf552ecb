"""Synthetic FTIR trials with known ground truth.

Two foot templates carry the body load.  Every frame both pressure fields are
translated (with mass-preserving bilinear splatting, so sub-pixel shifts move
the centroid exactly) until the force-weighted total centroid sits on the
sway trajectory, then rendered to camera counts with ``I = kappa * P**(2/3)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .calib import plate_origin
from .frameio import TrialMeta, TrialRecording, corner_sum

U16_MAX = 65535


class SynthError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FootTemplate:
    """Sole shape on the camera pixel grid.

    ``weights`` is ``(rows, cols)`` with row 0 at the toes; zero outside the
    support.  ``anchor`` is the plate position (AP, ML) mm of the weight
    centroid when the foot is at rest.
    """

    side: str
    weights: np.ndarray
    pixel_pitch: float
    length_mm: float
    width_mm: float
    anchor: tuple[float, float] = (0.0, 0.0)

    @property
    def support(self) -> np.ndarray:
        return self.weights > 0

    @property
    def centroid_px(self) -> tuple[float, float]:
        """(row, col) weight centroid in template index units."""
        w = self.weights
        total = w.sum()
        rows = np.arange(w.shape[0])
        cols = np.arange(w.shape[1])
        return float(w.sum(axis=1) @ rows / total), float(w.sum(axis=0) @ cols / total)

    def at(self, ap: float, ml: float) -> "FootTemplate":
        return replace(self, anchor=(ap, ml))


def _lobes(length: float, width: float, lateral: float):
    # (centre_u, centre_v, semi_u, semi_v); u across the foot, v toward the toes
    return [
        (0.0, 0.2 * length, 0.5 * width, 0.3 * length),  # forefoot
        (0.03 * lateral * width, -0.3 * length, 0.35 * width, 0.2 * length),  # heel
    ]


def lobe_union(length_mm: float, width_mm: float, side: str, u: np.ndarray, v: np.ndarray):
    """Analytic support test and weight profile at local points (u, v) mm."""
    lateral = 1.0 if side == "Right" else -1.0
    inside = np.zeros(np.broadcast(u, v).shape, dtype=bool)
    weight = np.zeros(inside.shape)
    for cu, cv, su, sv in _lobes(length_mm, width_mm, lateral):
        rho2 = ((u - cu) / su) ** 2 + ((v - cv) / sv) ** 2
        hit = rho2 <= 1.0
        inside |= hit
        weight = np.where(hit, np.maximum(weight, 1.0 - 0.7 * rho2), weight)
    # arch band on the lateral side joins heel and forefoot
    band = (np.abs(u - lateral * 0.22 * width_mm) <= 0.13 * width_mm) & (v >= -0.3 * length_mm) & (v <= 0.2 * length_mm)
    weight = np.where(band & ~inside, 0.3, weight)
    inside |= band
    return inside, weight


def make_foot_template(side: str, length_mm: float, width_mm: float, pixel_pitch: float) -> FootTemplate:
    """Two-lobe sole (heel and forefoot ellipses joined by an arch band).

    Weights peak at 1 in the lobe centres and fall to 0.3 at the rim.
    """
    if side not in ("Left", "Right"):
        raise SynthError(f"side must be Left or Right, got {side!r}")
    if not (length_mm > 0 and width_mm > 0 and pixel_pitch > 0):
        raise SynthError("dimensions and pixel pitch must be positive")
    if length_mm / pixel_pitch < 2 or width_mm / pixel_pitch < 2:
        raise SynthError("template too small")
    n_rows = math.ceil(length_mm / pixel_pitch) + 2
    n_cols = math.ceil(width_mm / pixel_pitch) + 2
    u = (np.arange(n_cols) + 0.5 - n_cols / 2) * pixel_pitch
    v = (n_rows / 2 - np.arange(n_rows) - 0.5) * pixel_pitch
    inside, weight = lobe_union(length_mm, width_mm, side, u[None, :], v[:, None])
    weights = np.where(inside, weight, 0.0)
    if not weights.any():
        raise SynthError("template too small")
    return FootTemplate(side, weights, pixel_pitch, length_mm, width_mm)


@dataclass(frozen=True)
class SwayModelParams:
    equilibrium: tuple[float, float] = (0.0, 0.0)  # (AP, ML) mm
    relaxation_time_s: float = 0.5
    noise_sigma: tuple[float, float] = (0.0, 0.0)  # mm / sqrt(s), per axis
    target_se: tuple[float, float] | None = None  # (AP, ML) mm
    seed: int = 0

    def stationary_sd(self) -> np.ndarray:
        if self.target_se is not None:
            return np.asarray(self.target_se, dtype=np.float64) / math.sqrt(2.0 / math.pi)
        return np.asarray(self.noise_sigma, dtype=np.float64) * math.sqrt(self.relaxation_time_s / 2.0)


def sway_trajectory(model: SwayModelParams, n_frames: int, dt_s: float) -> np.ndarray:
    """Ornstein-Uhlenbeck sway, ``(n_frames, 2)`` as (AP, ML) mm.

    Exact discretisation with decay ``exp(-dt/tau)``, started from the
    stationary distribution so there is no transient.
    """
    if n_frames < 1:
        raise SynthError("n_frames must be >= 1")
    if not dt_s > 0:
        raise SynthError("dt_s must be positive")
    if not model.relaxation_time_s > 0:
        raise SynthError("relaxation_time_s must be positive")
    sd = model.stationary_sd()
    if np.any(sd < 0):
        raise SynthError("noise must be non-negative")
    eq = np.asarray(model.equilibrium, dtype=np.float64)
    decay = math.exp(-dt_s / model.relaxation_time_s)
    innovation = sd * math.sqrt(1.0 - decay * decay)
    eps = np.random.default_rng(model.seed).standard_normal((n_frames, 2))
    dev = np.empty((n_frames, 2))
    dev[0] = sd * eps[0]
    for k in range(1, n_frames):
        dev[k] = decay * dev[k - 1] + innovation * eps[k]
    return eq + dev


@dataclass(frozen=True)
class LoadProfile:
    """Body load and its left/right split per frame."""

    body_force_n: float
    left_share: float = 0.5
    shift_amplitude: float = 0.0  # peak change of the left share
    shift_period_s: float = 10.0

    def per_frame(self, n: int, fps: float) -> tuple[np.ndarray, np.ndarray]:
        t = np.arange(n) / fps
        share = self.left_share + self.shift_amplitude * np.sin(2 * np.pi * t / self.shift_period_s)
        if np.any((share < 0) | (share > 1)):
            raise SynthError("left share leaves [0, 1]")
        return np.full(n, float(self.body_force_n)), share


@dataclass(frozen=True)
class SensorNoise:
    """Additive Gaussian camera noise, counts; clamped at zero."""

    sigma_counts: float
    seed: int = 0


@dataclass(frozen=True, eq=False)
class GroundTruth:
    cop_true: np.ndarray  # (n, 2) AP, ML mm
    foot_force_true: np.ndarray  # (n, 2) left, right N
    kappa_true: float

    def __len__(self):
        return len(self.cop_true)


def corner_forces(total: np.ndarray, cop: np.ndarray, plate_w_mm: float, plate_h_mm: float) -> np.ndarray:
    """Split the load over four corner sensors by bilinear weights of the COP.

    Columns: f1 back-left, f2 back-right, f3 front-left, f4 front-right.
    """
    u = np.clip(cop[:, 1] / plate_w_mm + 0.5, 0.0, 1.0)
    v = np.clip(cop[:, 0] / plate_h_mm + 0.5, 0.0, 1.0)
    total = np.asarray(total, dtype=np.float64)
    return np.stack([total * (1 - u) * (1 - v), total * u * (1 - v),
                     total * (1 - u) * v, total * u * v], axis=1)


def splat(out: np.ndarray, patch: np.ndarray, row: float, col: float) -> None:
    """Add ``patch`` to ``out`` with its top-left at fractional (row, col).

    Bilinear splitting keeps the patch mass and moves its centroid by
    exactly the fractional offset.
    """
    i, j = math.floor(row), math.floor(col)
    fr, fc = row - i, col - j
    th, tw = patch.shape
    if i < 0 or j < 0 or i + th + 1 > out.shape[0] or j + tw + 1 > out.shape[1]:
        raise SynthError("foot out of bounds")
    out[i:i + th, j:j + tw] += patch * ((1 - fr) * (1 - fc))
    out[i + 1:i + th + 1, j:j + tw] += patch * (fr * (1 - fc))
    out[i:i + th, j + 1:j + tw + 1] += patch * ((1 - fr) * fc)
    out[i + 1:i + th + 1, j + 1:j + tw + 1] += patch * (fr * fc)


def render_intensity(pressure: np.ndarray, kappa: float) -> np.ndarray:
    """Forward optical model, unquantised counts."""
    return kappa * np.power(pressure, 2.0 / 3.0)


def pressure_field(templates, cop_target, f_left: float, f_right: float, shape, pixel_pitch: float) -> np.ndarray:
    """Plate pressure (N/mm^2) with the total centroid at ``cop_target`` (AP, ML)."""
    left, right = templates
    h, w = shape
    x0, y0 = plate_origin(w, h, pixel_pitch)
    out = np.zeros(shape)
    f_t = f_left + f_right
    if f_t == 0:
        return out

    def idx(ap, ml):
        return (y0 - ap) / pixel_pitch - 0.5, (ml - x0) / pixel_pitch - 0.5

    anchors = [np.array(idx(*t.anchor)) for t in (left, right)]
    base = (f_left * anchors[0] + f_right * anchors[1]) / f_t
    shift = np.array(idx(*cop_target)) - base
    area = pixel_pitch * pixel_pitch
    for t, anchor, force in zip((left, right), anchors, (f_left, f_right)):
        if force == 0:
            continue
        patch = t.weights * (force / (t.weights.sum() * area))
        top_left = anchor - np.array(t.centroid_px) + shift
        splat(out, patch, top_left[0], top_left[1])
    return out


def render_trial(templates, trajectory, forces_profile: LoadProfile, kappa_true: float,
                 noise_model: SensorNoise | None, meta: TrialMeta,
                 shape: tuple[int, int]) -> tuple[TrialRecording, GroundTruth]:
    """Render a trial whose total COP follows ``trajectory`` exactly.

    ``shape`` is the (height, width) of the camera frame.
    """
    trajectory = np.asarray(trajectory, dtype=np.float64)
    n = meta.n_frames
    if len(trajectory) != n:
        raise SynthError(f"trajectory has {len(trajectory)} frames, trial needs {n}")
    if not kappa_true > 0:
        raise SynthError("kappa_true must be positive")
    h, w = shape
    pitch = meta.pixel_pitch
    body, share = forces_profile.per_frame(n, meta.fps)
    corners = corner_forces(body, trajectory, w * pitch, h * pitch)
    totals = corner_sum(corners[:, 0], corners[:, 1], corners[:, 2], corners[:, 3])
    f_left = totals * share
    f_right = totals - f_left
    frames = np.empty((n, h, w), dtype=np.uint16)
    for k in range(n):
        p = pressure_field(templates, trajectory[k], f_left[k], f_right[k], shape, pitch)
        counts = render_intensity(p, kappa_true)
        if noise_model is not None and noise_model.sigma_counts > 0:
            rng = np.random.default_rng([noise_model.seed, k])
            counts = np.maximum(counts + rng.normal(0.0, noise_model.sigma_counts, counts.shape), 0.0)
        if counts.max(initial=0.0) > U16_MAX:
            raise SynthError(f"intensity saturated at frame {k}; lower kappa_true")
        frames[k] = np.rint(counts)
    trial = TrialRecording(meta, frames, corners, totals)
    truth = GroundTruth(trajectory.copy(), np.stack([f_left, f_right], axis=1), float(kappa_true))
    return trial, truth


def kappa_for_peak(templates, body_force_n: float, pixel_pitch: float, peak_counts: float,
                   max_share: float = 0.5) -> float:
    """Forward constant that puts the rendered peak near ``peak_counts``."""
    peak_p = max(max_share * body_force_n * t.weights.max() / (t.weights.sum() * pixel_pitch ** 2)
                 for t in templates)
    return peak_counts / peak_p ** (2.0 / 3.0)


TRUTH_COLUMNS = ["frame", "ap_true", "ml_true", "f_L_true", "f_R_true", "kappa_true"]


def write_truth_csv(truth: GroundTruth, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_COLUMNS)
        for k in range(len(truth)):
            writer.writerow([k, repr(float(truth.cop_true[k, 0])), repr(float(truth.cop_true[k, 1])),
                             repr(float(truth.foot_force_true[k, 0])), repr(float(truth.foot_force_true[k, 1])),
                             repr(truth.kappa_true)])


def read_truth_csv(path) -> GroundTruth:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != TRUTH_COLUMNS:
            raise SynthError("unexpected ground-truth header")
        rows = [[float(v) for v in r] for r in reader]
    a = np.array(rows, dtype=np.float64).reshape(-1, len(TRUTH_COLUMNS))
    kappa = float(a[0, 5]) if len(a) else 0.0
    return GroundTruth(a[:, 1:3].copy(), a[:, 3:5].copy(), kappa)
