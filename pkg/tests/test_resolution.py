import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ppmsway.calib import PressureMap, plate_origin, total_force
from ppmsway.cop import cop_series, foot_cop
from ppmsway.frameio import Pose
from ppmsway.resolution import (
    SensorGridSpec,
    SweepResult,
    SweepRow,
    cop_error_at_pitch,
    default_offsets,
    downsample_pressure,
    minimum_resolution,
    overlap_matrix,
    read_sweep_csv,
    resolution_sweep,
    sweep_summary,
)
from ppmsway.scene import Scene, copy_scene


def test_identity_rebin():
    values = np.random.default_rng(0).uniform(0, 4, (6, 5))
    pm = PressureMap(values, values > 1, 0.26, plate_origin(5, 6, 0.26))
    out = downsample_pressure(pm, SensorGridSpec(0.26))
    np.testing.assert_allclose(out.values, values, rtol=1e-14)
    np.testing.assert_array_equal(out.mask, pm.mask)
    assert out.origin == pm.origin


def test_two_by_two_block():
    pm = PressureMap(np.array([[1.0, 3.0], [5.0, 7.0]]), np.ones((2, 2), bool), 1.0, (0.0, 0.0))
    out = downsample_pressure(pm, SensorGridSpec(2.0))
    assert out.values.shape == (1, 1)
    assert out.values[0, 0] == 4.0
    assert total_force(out) == 16.0


def test_overlap_columns_sum_to_one():
    for ratio, off in [(1.0, 0.0), (1.923, 0.3), (3.7, -1.1), (38.46, 12.8)]:
        w, b0 = overlap_matrix(37, ratio, off)
        np.testing.assert_allclose(w.sum(axis=0), 1.0, rtol=1e-12)
        assert b0 <= 0


def test_pitch_finer_than_map():
    pm = PressureMap(np.ones((4, 4)), np.ones((4, 4), bool), 1.0, (0.0, 0.0))
    with pytest.raises(ValueError, match="finer"):
        downsample_pressure(pm, SensorGridSpec(0.5))


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), ratio=st.floats(1.0, 40.0),
       ox=st.floats(-20, 20), oy=st.floats(-20, 20))
def test_force_conserved(seed, ratio, ox, oy):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0, 3, (23, 31)) * (rng.random((23, 31)) < 0.6)
    pm = PressureMap(values, values > 0, 0.26, plate_origin(31, 23, 0.26))
    out = downsample_pressure(pm, SensorGridSpec(0.26 * ratio, (ox, oy)))
    assert total_force(out) == pytest.approx(total_force(pm), rel=1e-9)


@settings(max_examples=40)
@given(r=st.integers(0, 39), c=st.integers(0, 39), pitch=st.floats(0.26, 8.0), off=st.floats(0, 8.0))
def test_single_cell_snaps_to_centre(r, c, pitch, off):
    values = np.zeros((40, 40))
    values[r, c] = 3.0
    pm = PressureMap(values, values > 0, 0.26, plate_origin(40, 40, 0.26))
    true_cop, _ = foot_cop(pm, pm.mask)
    coarse = downsample_pressure(pm, SensorGridSpec(pitch, (off, off)))
    (ap, ml), force = foot_cop(coarse, coarse.values > 0)
    assert force == pytest.approx(3.0 * 0.26 ** 2, rel=1e-9)
    # the pixel may straddle cell lines, so the bound is one cell diagonal
    assert math.hypot(ap - true_cop[0], ml - true_cop[1]) <= pitch / math.sqrt(2) + 0.26 + 1e-9
    if coarse.mask.sum() == 1:
        assert math.hypot(ap - true_cop[0], ml - true_cop[1]) <= pitch / math.sqrt(2) + 1e-9
        i, j = np.argwhere(coarse.mask)[0]
        assert ap == pytest.approx(coarse.y_centers()[i], abs=1e-9)
        assert ml == pytest.approx(coarse.x_centers()[j], abs=1e-9)


def test_default_offsets():
    assert default_offsets(3.0, 3) == [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]


def test_pixel_pitch_matches_full_pipeline(small_trial, small_scene):
    trial, truth = small_trial
    seg = small_scene.segmentation()
    r = cop_error_at_pitch(trial, truth, SensorGridSpec(small_scene.pixel_pitch_mm), seg)
    full = cop_series(trial, seg)
    assert not r.skipped
    np.testing.assert_allclose(r.error, np.abs(full.cop_total - truth.cop_true), rtol=0, atol=1e-9)


def test_coarse_pitch_errors_are_recorded(small_trial, small_scene):
    trial, truth = small_trial
    r = cop_error_at_pitch(trial, truth, SensorGridSpec(10.0), small_scene.segmentation())
    assert r.error.shape == (len(trial), 2)
    assert set(np.flatnonzero(~r.usable)) == set(r.skipped)


@pytest.mark.parametrize("pitches,flags,expected,non_mono", [
    ([0.5, 1.0, 5.0], [True, True, False], 1.0, False),
    ([0.5, 1.0, 5.0], [False, False, False], None, False),
    ([0.5, 1.0, 5.0], [True, False, True], 0.5, True),
    ([0.5, 1.0, 5.0], [True, True, True], 5.0, False),
])
def test_minimum_resolution(pitches, flags, expected, non_mono):
    got = minimum_resolution((pitches, flags))
    assert got.pitch_mm == expected
    assert got.non_monotone is non_mono


def test_minimum_resolution_needs_two():
    with pytest.raises(ValueError):
        minimum_resolution(([1.0], [True]))


def _cohort(**changes):
    base = dict(subjects=6, repeats=1, duration_s=4.0, seed=3, equilibrium_sd_mm=0.0)
    base.update(changes)
    return copy_scene(Scene(), **base)


def test_null_cohort_rejects_at_nominal_rate():
    # T7 drawn like T1..T6: any discrimination is a type-I error, so check the
    # rate over fixed seeds rather than a single draw
    decisions = []
    for seed in range(8):
        scene = _cohort(subjects=5, duration_s=2.0, seed=seed)
        scene.se_ap[Pose.T7] = scene.se_ap[Pose.T1]
        scene.se_ml[Pose.T7] = scene.se_ml[Pose.T1]
        sweep = resolution_sweep(scene, pitches=[0.26, 2.0], n_offsets=1)
        assert all(r.valid for r in sweep.rows)
        decisions += [r.discriminates for r in sweep.rows if r.pitch_mm == 0.26]
    # 16 decisions at alpha 0.05; P(5 or more) is below 1%
    assert sum(decisions) <= 4


def test_pixel_pitch_discriminates_and_csv_is_deterministic():
    scene = _cohort()
    a = resolution_sweep(scene, pitches=[0.26], n_offsets=2)
    assert a.row(0.26, 0, "ML").discriminates
    assert a.row(0.26, 1, "ML").valid
    b = resolution_sweep(scene, pitches=[0.26], n_offsets=2)
    assert a.to_csv() == b.to_csv()
    parsed = read_sweep_csv(a.to_csv())
    assert len(parsed) == 1 * 2 * 2
    assert a.to_csv().splitlines()[0] == \
        "pitch_mm,offset_id,axis,median_cop_err_mm,p95_cop_err_mm,group_final_p,discriminates"


def test_sweep_rejects_bad_pitches():
    with pytest.raises(ValueError):
        resolution_sweep(_cohort(), pitches=[0.1])
    with pytest.raises(ValueError):
        resolution_sweep(_cohort(), pitches=[1.0, 0.5])


def _fake(flags_ml, pitches=(0.26, 1.0, 5.0), valid=None):
    rows = []
    for i, p in enumerate(pitches):
        for axis in ("AP", "ML"):
            ok = flags_ml[i] if axis == "ML" else True
            v = True if valid is None else valid[i]
            rows.append(SweepRow(p, 0, (0.0, 0.0), axis, 0.01 * (i + 1), 0.02 * (i + 1),
                                 0.001 if ok else 0.4, ok and v, v, 1.0 if v else 0.2))
    return SweepResult(list(pitches), 1, 0.05, rows, {}, 0.26)


def test_invalid_rows_in_csv_and_summary():
    sweep = _fake([True, True, False], valid=[True, True, False])
    lines = sweep.to_csv().splitlines()
    assert lines[-1].endswith(",invalid")
    text = sweep_summary(sweep)
    assert "market baseline" in text.lower()
    assert minimum_resolution(sweep, "ML").pitch_mm == 1.0


def test_summary_reports_none():
    text = sweep_summary(_fake([False, False, False]))
    assert "none" in text
