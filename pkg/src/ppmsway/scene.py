"""Scene / run configuration: a human-editable ``key = value`` text file.

Lines starting with ``#`` are comments.  Per-pose sway targets use dotted
keys (``se_ml.T7 = 1.3``); optical plate parameters use ``optical.<name>``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

from .calib import OpticalParams
from .frameio import Pose
from .segment import SegmentationParams, parse_threshold


class ConfigError(ValueError):
    pass


def _default_targets(balanced: float, imbalanced: float) -> dict[Pose, float]:
    return {p: (imbalanced if p is Pose.T7 else balanced) for p in Pose}


DEFAULT_PITCHES = (0.26, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0)
MARKET_PITCH_MM = 5.0


@dataclass
class Scene:
    # plate and camera
    width_px: int = 200
    height_px: int = 200
    pixel_pitch_mm: float = 0.26
    fps: float = 20.0
    duration_s: float = 30.0
    # feet; scaled so both fit a 200 x 200 camera frame at 0.26 mm
    foot_length_mm: float = 24.0
    foot_width_mm: float = 9.0
    stance_width_mm: float = 24.0
    # cohort
    subjects: int = 17
    repeats: int = 3
    poses: tuple[Pose, ...] = tuple(Pose)
    seed: int | None = None
    # sway
    relaxation_time_s: float = 0.5
    se_ap: dict = field(default_factory=lambda: _default_targets(0.12, 0.20))
    se_ml: dict = field(default_factory=lambda: _default_targets(0.30, 1.30))
    subject_sd: float = 0.10  # log-scale spread of per-subject sway
    equilibrium_sd_mm: float = 0.5
    # load and rendering
    body_mass_kg: float = 74.0
    body_mass_sd_kg: float = 15.0
    left_share: float = 0.5
    shift_amplitude: float = 0.0
    shift_period_s: float = 10.0
    peak_counts: float = 30000.0
    kappa_true: float | None = None
    noise_counts: float = 0.0
    # analysis
    threshold: str = "0.05"
    min_area_mm2: float = 2.0
    connectivity: int = 8
    split_x: float | None = None
    load_floor_n: float = 50.0
    alpha: float = 0.05
    pitches: tuple[float, ...] = DEFAULT_PITCHES
    offsets: int = 3
    optical: dict = field(default_factory=dict)

    def segmentation(self) -> SegmentationParams:
        return SegmentationParams(parse_threshold(self.threshold), self.min_area_mm2, self.connectivity, self.split_x)

    def optical_params(self) -> OpticalParams | None:
        if not self.optical:
            return None
        try:
            return OpticalParams(**{k: float(v) for k, v in self.optical.items()})
        except TypeError as exc:
            raise ConfigError(f"incomplete optical parameters: {exc}") from None

    def targets(self, pose: Pose) -> tuple[float, float]:
        return self.se_ap[Pose(pose)], self.se_ml[Pose(pose)]

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.duration_s))

    def check(self) -> None:
        if self.width_px < 4 or self.height_px < 4:
            raise ConfigError("frame must be at least 4 x 4 pixels")
        for name in ("pixel_pitch_mm", "fps", "duration_s", "relaxation_time_s", "foot_length_mm", "foot_width_mm"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.subjects < 1 or self.repeats < 1 or self.repeats > 3:
            raise ConfigError("subjects must be >= 1 and repeats in 1..3")
        if not self.poses:
            raise ConfigError("at least one pose is required")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.offsets < 1:
            raise ConfigError("offsets must be >= 1")
        for p in self.pitches:
            if p < self.pixel_pitch_mm * (1 - 1e-12):
                raise ConfigError(f"pitch {p} mm is finer than the camera pixel pitch {self.pixel_pitch_mm} mm")
        if list(self.pitches) != sorted(set(self.pitches)):
            raise ConfigError("pitches must be strictly increasing")
        try:
            self.segmentation()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _parse_value(name: str, raw: str, current):
    raw = raw.strip()
    if name == "poses":
        return tuple(Pose.parse(v) for v in raw.split(",") if v.strip())
    if name == "pitches":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if raw.lower() in ("none", ""):
        return None
    if name == "threshold":
        parse_threshold(raw)
        return raw
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int) or name in ("seed",):
        return int(raw)
    return float(raw)


_FIELDS = {f.name: f for f in fields(Scene)}


def apply_setting(scene: Scene, key: str, raw) -> None:
    key = key.strip()
    if "." in key:
        group, sub = key.split(".", 1)
        if group in ("se_ap", "se_ml"):
            try:
                getattr(scene, group)[Pose.parse(sub)] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
            return
        if group == "optical":
            scene.optical[sub] = float(raw)
            return
        raise ConfigError(f"unknown key {key!r}")
    if key in ("se_ap", "se_ml"):
        # one value for T1..T6 and one for T7, comma separated
        parts = [float(v) for v in str(raw).split(",")]
        if len(parts) != 2:
            raise ConfigError(f"{key} expects 'balanced,imbalanced'")
        setattr(scene, key, _default_targets(*parts))
        return
    if key not in _FIELDS or key == "optical":
        raise ConfigError(f"unknown key {key!r}")
    current = getattr(scene, key)
    try:
        value = raw if not isinstance(raw, str) else _parse_value(key, raw, current if current is not None else 0.0)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None
    setattr(scene, key, value)


def parse_scene(text: str, scene: Scene | None = None) -> Scene:
    scene = scene or Scene()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        apply_setting(scene, key, raw)
    return scene


def load_scene(path=None) -> Scene:
    scene = Scene()
    scene.se_ap = dict(scene.se_ap)
    scene.se_ml = dict(scene.se_ml)
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        parse_scene(text, scene)
    return scene


def resolve_seed(flag: int | None, scene: Scene) -> int:
    """Explicit flag, then the config file, then ``PPM_SEED``."""
    if flag is not None:
        return flag
    if scene.seed is not None:
        return scene.seed
    env = os.environ.get("PPM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"PPM_SEED is not an integer: {env!r}") from None
    raise ConfigError("a seed is required (--seed, 'seed =' in the config, or PPM_SEED)")


def dump_scene(scene: Scene) -> str:
    """Render ``scene`` back to the text format (stable key order)."""
    lines = []
    for f in fields(Scene):
        value = getattr(scene, f.name)
        if f.name in ("se_ap", "se_ml"):
            lines += [f"{f.name}.T{int(p)} = {value[p]!r}" for p in sorted(value)]
        elif f.name == "optical":
            lines += [f"optical.{k} = {v!r}" for k, v in sorted(value.items())]
        elif f.name == "poses":
            lines.append(f"poses = {','.join(f'T{int(p)}' for p in value)}")
        elif f.name == "pitches":
            lines.append(f"pitches = {','.join(repr(p) for p in value)}")
        else:
            lines.append(f"{f.name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


def copy_scene(scene: Scene, **changes) -> Scene:
    out = dataclasses.replace(scene, **changes)
    out.se_ap = dict(out.se_ap)
    out.se_ml = dict(out.se_ml)
    out.optical = dict(out.optical)
    return out
