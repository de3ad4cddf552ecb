"""Trial container: raw FTIR intensity frames plus the corner force log.

A trial is stored as a single little-endian PPMF file::

    magic "PPMF" | version u16 | width u32 | height u32 | frame_count u32
    | fps f64 | pixel_pitch_mm f64 | pose u8 | repeat u8
    | subject_id (u16 length + UTF-8)
    | frame_count x (height x width u16, row-major)
    | frame_count x (f1 f2 f3 f4 as f64)

Plate coordinates put the origin at the plate center, +x mediolateral
(subject's right) and +y anteroposterior (toward the toes).  Row 0 of a frame
is the toe-side edge of the plate.
"""

from __future__ import annotations

import csv
import enum
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"PPMF"
VERSION = 1
PLATE_ORIGIN = "center; +x=ML (right), +y=AP (toes)"

_HEADER = struct.Struct("<4sHIIIddBB")
_SUBJECT_LEN = struct.Struct("<H")
_FORCE_RTOL = 1e-9


class PPMFError(ValueError):
    """Raised for malformed trial files or trials that cannot be written."""


class Pose(enum.IntEnum):
    """Test poses; T1-T6 are Romberg stances, T7 inhibits vestibular input."""

    T1 = 1
    T2 = 2
    T3 = 3
    T4 = 4
    T5 = 5
    T6 = 6
    T7 = 7

    @property
    def vestibular_inhibition(self) -> bool:
        return self is Pose.T7

    @classmethod
    def parse(cls, value) -> "Pose":
        if isinstance(value, str):
            value = value.strip().upper()
            if value.startswith("T"):
                value = value[1:]
        return cls(int(value))


@dataclass(frozen=True)
class TrialMeta:
    subject_id: str
    pose: Pose
    repeat_index: int
    fps: float
    pixel_pitch: float  # mm per pixel
    duration_s: float

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.duration_s))

    @property
    def name(self) -> str:
        return f"{self.subject_id}_T{int(self.pose)}_R{self.repeat_index}"


@dataclass(frozen=True)
class IntensityFrame:
    pixels: np.ndarray  # (height, width) camera counts
    timestamp_index: int = 0

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ForceSample:
    frame_index: int
    f1: float
    f2: float
    f3: float
    f4: float
    total: float

    @classmethod
    def from_corners(cls, frame_index, f1, f2, f3, f4) -> "ForceSample":
        return cls(frame_index, f1, f2, f3, f4, corner_sum(f1, f2, f3, f4))


def corner_sum(f1, f2, f3, f4):
    """Sum of the four corner loads in a fixed order (bit-reproducible)."""
    return ((f1 + f2) + f3) + f4


@dataclass(frozen=True, eq=False)
class TrialRecording:
    """One trial held as arrays.

    ``frames`` is ``(n, height, width)`` uint16, ``corner_forces`` is
    ``(n, 4)`` Newtons and ``force_totals`` is ``(n,)`` Newtons.  Frame ``i``
    and force sample ``i`` belong together, so the frame index is implicit.
    """

    meta: TrialMeta
    frames: np.ndarray
    corner_forces: np.ndarray
    force_totals: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.force_totals is None:
            cf = np.asarray(self.corner_forces, dtype=np.float64)
            object.__setattr__(
                self, "force_totals",
                corner_sum(cf[:, 0], cf[:, 1], cf[:, 2], cf[:, 3]) if cf.ndim == 2 and cf.shape[1] == 4
                else np.zeros(0))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    def frame(self, i: int) -> IntensityFrame:
        return IntensityFrame(self.frames[i], i)

    def force(self, i: int) -> ForceSample:
        f1, f2, f3, f4 = (float(v) for v in self.corner_forces[i])
        return ForceSample(i, f1, f2, f3, f4, float(self.force_totals[i]))

    @property
    def forces(self) -> list[ForceSample]:
        return [self.force(i) for i in range(len(self.corner_forces))]

    def __eq__(self, other):
        if not isinstance(other, TrialRecording):
            return NotImplemented
        return (
            self.meta == other.meta
            and _same_array(self.frames, other.frames)
            and _same_array(self.corner_forces, other.corner_forces)
            and _same_array(self.force_totals, other.force_totals)
        )

    __hash__ = None


def _same_array(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


@dataclass(frozen=True)
class Issue:
    invariant: str
    message: str
    index: int | None = None

    def __str__(self):
        where = "" if self.index is None else f" (index {self.index})"
        return f"{self.invariant}: {self.message}{where}"


def validate_trial(trial) -> list[Issue]:
    """List every violated trial invariant; an empty list means valid."""
    issues: list[Issue] = []
    try:
        meta = trial.meta
        for name in ("fps", "pixel_pitch", "duration_s"):
            value = getattr(meta, name)
            if not (np.isfinite(value) and value > 0):
                issues.append(Issue(name, f"{name} must be positive"))
        try:
            Pose(int(meta.pose))
        except (ValueError, TypeError):
            issues.append(Issue("pose", f"pose must be T1..T7, got {meta.pose!r}"))
        if not (isinstance(meta.repeat_index, (int, np.integer)) and 1 <= meta.repeat_index <= 3):
            issues.append(Issue("repeat_index", f"repeat_index must be 1..3, got {meta.repeat_index!r}"))
        if not isinstance(meta.subject_id, str) or len(meta.subject_id.encode("utf-8")) > 0xFFFF:
            issues.append(Issue("subject_id", "subject_id must be a string under 65536 bytes"))

        frames = np.asarray(trial.frames)
        corners = np.asarray(trial.corner_forces, dtype=np.float64)
        totals = np.asarray(trial.force_totals, dtype=np.float64)
        if frames.ndim != 3:
            issues.append(Issue("frames", f"frames must be (n, height, width), got shape {frames.shape}"))
            return issues
        n = frames.shape[0]
        if n == 0:
            issues.append(Issue("frames", "empty trial"))
        if frames.shape[1] == 0 or frames.shape[2] == 0:
            issues.append(Issue("frames", "frame width and height must be positive"))
        if frames.dtype != np.uint16:
            if np.issubdtype(frames.dtype, np.number) and frames.size and frames.min() < 0:
                bad = int(np.argmax((frames < 0).reshape(n, -1).any(axis=1)))
                issues.append(Issue("pixels", "intensity must be non-negative", bad))
            issues.append(Issue("pixels", f"intensity dtype must be uint16, got {frames.dtype}"))
        if corners.ndim != 2 or corners.shape[1] != 4:
            issues.append(Issue("forces", f"corner forces must be (n, 4), got shape {corners.shape}"))
            return issues
        if len(corners) != n or len(totals) != n:
            issues.append(Issue("forces", f"length mismatch: {n} frames, {len(corners)} force samples"))
        elif all(not i.invariant in ("fps", "duration_s") for i in issues) and n != meta.n_frames:
            issues.append(Issue("frames", f"frame count {n} != round(fps * duration_s) = {meta.n_frames}"))
        m = min(len(corners), len(totals))
        for i in np.flatnonzero(~np.isfinite(corners[:m]).all(axis=1)):
            issues.append(Issue("forces", "corner force is not finite", int(i)))
        expected = corner_sum(corners[:m, 0], corners[:m, 1], corners[:m, 2], corners[:m, 3])
        with np.errstate(invalid="ignore"):
            off = np.abs(totals[:m] - expected) > _FORCE_RTOL * np.maximum(np.abs(expected), 1e-300)
            off &= ~(totals[:m] == expected)
        for i in np.flatnonzero(off):
            issues.append(Issue("force_total", "total != f1+f2+f3+f4", int(i)))
        for i in np.flatnonzero(totals[:m] < 0):
            issues.append(Issue("force_total", "total force must be >= 0", int(i)))
    except Exception as exc:  # validation reports, never raises
        issues.append(Issue("structure", f"unreadable trial structure: {exc}"))
    return issues


def write_trial(trial: TrialRecording, path) -> None:
    """Write ``trial`` atomically as a PPMF file."""
    if len(trial.frames) == 0:
        raise PPMFError("empty trial")
    issues = validate_trial(trial)
    if issues:
        mismatch = [i for i in issues if "length mismatch" in i.message]
        raise PPMFError(str(mismatch[0] if mismatch else issues[0]))
    meta = trial.meta
    n, h, w = trial.frames.shape
    subject = meta.subject_id.encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, w, h, n, float(meta.fps), float(meta.pixel_pitch),
                          int(meta.pose), int(meta.repeat_index))
    payload = [
        header,
        _SUBJECT_LEN.pack(len(subject)),
        subject,
        np.ascontiguousarray(trial.frames, dtype="<u2").tobytes(),
        np.ascontiguousarray(trial.corner_forces, dtype="<f8").tobytes(),
    ]
    atomic_write_bytes(path, b"".join(payload))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_trial(path) -> TrialRecording:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise PPMFError(f"not a PPMF file: {path}")
    if len(data) < _HEADER.size + _SUBJECT_LEN.size:
        raise PPMFError(f"truncated header: {path}")
    _, version, w, h, n, fps, pitch, pose, repeat = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise PPMFError(f"corrupt: unsupported version {version}")
    off = _HEADER.size
    (slen,) = _SUBJECT_LEN.unpack_from(data, off)
    off += _SUBJECT_LEN.size
    if len(data) < off + slen:
        raise PPMFError(f"truncated subject id: {path}")
    try:
        subject = data[off:off + slen].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PPMFError(f"corrupt: subject id is not UTF-8 ({exc})") from None
    off += slen
    if w == 0 or h == 0 or n == 0:
        raise PPMFError(f"corrupt: header declares {n} frames of {w}x{h}")
    frame_bytes = n * h * w * 2
    force_bytes = n * 32
    expected = off + frame_bytes + force_bytes
    if len(data) < expected:
        raise PPMFError(f"truncated: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise PPMFError(f"corrupt: {len(data) - expected} trailing bytes after payload")
    if not 1 <= pose <= 7:
        raise PPMFError(f"corrupt: pose {pose} out of range")
    if not (fps > 0 and pitch > 0):
        raise PPMFError(f"corrupt: fps={fps} pixel_pitch={pitch}")

    frames = np.frombuffer(data, dtype="<u2", count=n * h * w, offset=off).reshape(n, h, w)
    corners = np.frombuffer(data, dtype="<f8", count=n * 4, offset=off + frame_bytes).reshape(n, 4)
    frames = frames.astype(np.uint16)
    corners = corners.astype(np.float64)
    frames.flags.writeable = False
    corners.flags.writeable = False
    meta = TrialMeta(subject, Pose(pose), repeat, fps, pitch, n / fps)
    trial = TrialRecording(meta, frames, corners)
    trial.force_totals.flags.writeable = False
    issues = validate_trial(trial)
    if issues:
        raise PPMFError(f"corrupt: {issues[0]}")
    return trial


def read_force_csv(path) -> np.ndarray:
    """Load an externally recorded force log (``frame_index,f1,f2,f3,f4``).

    Returns the ``(n, 4)`` corner force array; rows must be in frame order.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["frame_index", "f1", "f2", "f3", "f4"]:
            raise PPMFError("force CSV header must be frame_index,f1,f2,f3,f4")
        for i, row in enumerate(reader):
            if int(row["frame_index"]) != i:
                raise PPMFError(f"force CSV row {i} has frame_index {row['frame_index']}")
            rows.append([float(row[k]) for k in ("f1", "f2", "f3", "f4")])
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def write_force_csv(corner_forces: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "f1", "f2", "f3", "f4"])
        for i, row in enumerate(np.asarray(corner_forces)):
            writer.writerow([i, *(repr(float(v)) for v in row)])


def trial_with_force_log(meta: TrialMeta, frames: np.ndarray, force_csv) -> TrialRecording:
    """Pair raw frames with a force log imported from CSV."""
    return TrialRecording(meta, np.asarray(frames, dtype=np.uint16), read_force_csv(force_csv))
