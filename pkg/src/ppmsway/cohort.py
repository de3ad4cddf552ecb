"""Synthetic cohorts: subjects x poses x repeats trials drawn from a scene."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frameio import Pose, TrialMeta, TrialRecording
from .scene import Scene
from .synth import (
    GroundTruth,
    LoadProfile,
    SensorNoise,
    SwayModelParams,
    kappa_for_peak,
    make_foot_template,
    render_trial,
    sway_trajectory,
)

GRAVITY = 9.81


@dataclass(frozen=True)
class TrialSpec:
    subject_index: int
    pose: Pose
    repeat: int
    target_se: tuple[float, float]  # (AP, ML) mm after the subject's scaling
    seed: int

    @property
    def subject_id(self) -> str:
        return f"S{self.subject_index + 1:02d}"

    @property
    def name(self) -> str:
        return f"{self.subject_id}_T{int(self.pose)}_R{self.repeat}"


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1, np.uint64)[0])


def subject_traits(scene: Scene, seed: int, subject_index: int) -> tuple[float, float]:
    """(sway scale factor, body mass kg) of one synthetic subject."""
    rng = _stream(seed, 1, subject_index)
    s = scene.subject_sd
    scale = float(np.exp(rng.normal(-0.5 * s * s, s))) if s > 0 else 1.0
    mass = float(np.clip(rng.normal(scene.body_mass_kg, scene.body_mass_sd_kg), 40.0, 130.0)) \
        if scene.body_mass_sd_kg > 0 else scene.body_mass_kg
    return scale, mass


def trial_specs(scene: Scene, seed: int) -> list[TrialSpec]:
    specs = []
    for si in range(scene.subjects):
        scale, _ = subject_traits(scene, seed, si)
        for pose in scene.poses:
            ap, ml = scene.targets(pose)
            for rep in range(1, scene.repeats + 1):
                specs.append(TrialSpec(si, Pose(pose), rep, (ap * scale, ml * scale),
                                       _derived_seed(seed, 2, si, int(pose), rep)))
    return specs


def templates(scene: Scene):
    half = scene.stance_width_mm / 2
    left = make_foot_template("Left", scene.foot_length_mm, scene.foot_width_mm, scene.pixel_pitch_mm)
    right = make_foot_template("Right", scene.foot_length_mm, scene.foot_width_mm, scene.pixel_pitch_mm)
    return left.at(0.0, -half), right.at(0.0, half)


def generate_trial(scene: Scene, seed: int, spec: TrialSpec) -> tuple[TrialRecording, GroundTruth]:
    _, mass = subject_traits(scene, seed, spec.subject_index)
    rng = _stream(spec.seed, 3)
    eq = tuple(rng.normal(0.0, scene.equilibrium_sd_mm, 2)) if scene.equilibrium_sd_mm > 0 else (0.0, 0.0)
    model = SwayModelParams(equilibrium=eq, relaxation_time_s=scene.relaxation_time_s,
                            target_se=spec.target_se, seed=spec.seed)
    meta = TrialMeta(spec.subject_id, spec.pose, spec.repeat, scene.fps, scene.pixel_pitch_mm,
                     scene.n_frames / scene.fps)
    traj = sway_trajectory(model, meta.n_frames, 1.0 / scene.fps)
    feet = templates(scene)
    load = LoadProfile(mass * GRAVITY, scene.left_share, scene.shift_amplitude, scene.shift_period_s)
    kappa = scene.kappa_true
    if kappa is None:
        # headroom for the load shifting toward one foot
        kappa = kappa_for_peak(feet, load.body_force_n, scene.pixel_pitch_mm, scene.peak_counts,
                               max_share=max(scene.left_share, 1 - scene.left_share) + abs(scene.shift_amplitude))
    noise = SensorNoise(scene.noise_counts, _derived_seed(spec.seed, 4)) if scene.noise_counts > 0 else None
    return render_trial(feet, traj, load, kappa, noise, meta, (scene.height_px, scene.width_px))


def expected_se_bias(scene: Scene) -> float:
    """Approximate ratio E[SE of one trial] / long-run SE for the OU sway.

    Deviations are measured from the trial's own mean, which absorbs part
    of the slow motion; for ``tau << T`` the ratio is ``sqrt(1 - 2 tau / T)``.
    """
    tau, T = scene.relaxation_time_s, scene.duration_s
    return math.sqrt(max(1.0 - 2.0 * tau / T, 0.0))
