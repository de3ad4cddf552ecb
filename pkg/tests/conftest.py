import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ppmsway.cohort import generate_trial, trial_specs
from ppmsway.frameio import Pose, TrialMeta, TrialRecording
from ppmsway.scene import Scene, copy_scene

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_trial(n=3, h=4, w=5, seed=0, subject="S01", pose=Pose.T1, fps=20.0, pitch=0.26):
    rng = np.random.default_rng(seed)
    frames = rng.integers(0, 65536, (n, h, w), dtype=np.uint16)
    corners = rng.uniform(0, 300, (n, 4))
    return TrialRecording(TrialMeta(subject, pose, 1, fps, pitch, n / fps), frames, corners)


@pytest.fixture(scope="session")
def small_scene():
    return copy_scene(Scene(), subjects=1, repeats=1, poses=(Pose.T1, Pose.T7), duration_s=5.0, seed=11)


@pytest.fixture(scope="session")
def small_trial(small_scene):
    spec = trial_specs(small_scene, 11)[0]
    return generate_trial(small_scene, 11, spec)
