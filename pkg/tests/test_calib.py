import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ppmsway.calib import (
    CalibrationError,
    OpticalParams,
    PressureMap,
    calibrate_frame,
    calibrate_trial,
    cos_refraction,
    kappa_to_calibration,
    reconstruct_pressure,
    theoretical_kappa,
    total_force,
)
from ppmsway.frameio import IntensityFrame
from ppmsway.synth import render_intensity

UNIT = OpticalParams(A_p=1, I_o=1, alpha=1, phi_o=1, D=1, theta_s=0.0, lam=1, n_o=1, n_w=1, E=3, nu=0.0)


def _kappa_oracle(p: OpticalParams) -> float:
    # written out term by term; Snell's law for the refraction angle
    theta_r = math.asin(p.n_w / p.n_o * math.sin(p.theta_s))
    num = math.pi ** 4 * p.A_p * p.I_o * p.alpha ** 2 * (1 + math.cos(p.theta_s) ** 2) * p.phi_o
    den = 2 * p.lam ** 3 * p.D ** 2 * p.n_o * math.cos(theta_r)
    return num / den * math.pow(3 * (1 - p.nu ** 2) / p.E, 2 / 3)


def test_unit_kappa_is_pi_to_the_fourth():
    assert theoretical_kappa(UNIT) == pytest.approx(math.pi ** 4, rel=1e-15)
    assert theoretical_kappa(UNIT) == pytest.approx(97.409, abs=1e-3)


def test_kappa_matches_term_by_term_oracle():
    p = OpticalParams(A_p=0.0676, I_o=2.5, alpha=0.7, phi_o=0.3, D=400, theta_s=0.4, lam=5.5e-4,
                      n_o=1.5, n_w=1.33, E=60, nu=0.45)
    assert theoretical_kappa(p) == pytest.approx(_kappa_oracle(p), rel=1e-13)


def test_equal_indices_normal_angle():
    assert cos_refraction(0.0, 1.7, 1.7) == 1.0
    assert cos_refraction(0.0, 1.2, 3.0) == 1.0


def test_total_internal_reflection():
    with pytest.raises(CalibrationError, match="total internal reflection"):
        theoretical_kappa(OpticalParams(1, 1, 1, 1, 1, 1.2, 1, 1.0, 1.5, 3, 0.3))


def test_doubling_E():
    p2 = OpticalParams(**{**UNIT.__dict__, "E": 6.0})
    assert theoretical_kappa(p2) / theoretical_kappa(UNIT) == pytest.approx(2 ** (-2 / 3), rel=1e-14)


@given(e=st.floats(0.1, 1e3), phi=st.floats(0.01, 10), k=st.floats(1.01, 5))
def test_kappa_monotonicity(e, phi, k):
    base = OpticalParams(1, 1, 1, phi, 1, 0.2, 1, 1.5, 1.33, e, 0.3)
    stiffer = OpticalParams(1, 1, 1, phi, 1, 0.2, 1, 1.5, 1.33, e * k, 0.3)
    denser = OpticalParams(1, 1, 1, phi * k, 1, 0.2, 1, 1.5, 1.33, e, 0.3)
    assert theoretical_kappa(stiffer) < theoretical_kappa(base) < theoretical_kappa(denser)


def test_single_pixel_calibration_and_reconstruction():
    frame = np.array([[4.0]])
    c = calibrate_frame(frame, [[True]], 8.0, 1.0)
    assert c.c == 1.0
    pm = reconstruct_pressure(frame, [[True]], c, 1.0)
    assert pm.values[0, 0] == 8.0
    assert total_force(pm) == 8.0


def test_calibration_errors():
    with pytest.raises(CalibrationError, match="no contact signal under load"):
        calibrate_frame(np.zeros((3, 3)), None, 500.0, 0.26)
    with pytest.raises(CalibrationError, match="no load"):
        calibrate_frame(np.ones((3, 3)), None, 0.0, 0.26)


def test_frame_index_carried():
    c = calibrate_frame(IntensityFrame(np.ones((2, 2)), 17), None, 1.0, 1.0)
    assert c.frame_index == 17


def test_zero_frame_reconstructs_to_zero():
    pm = reconstruct_pressure(np.zeros((4, 4)), None, 2.0, 0.5)
    assert not pm.values.any()
    assert total_force(pm) == 0.0


def test_outside_mask_is_exactly_zero():
    frame = np.full((3, 3), 9.0)
    mask = np.eye(3, dtype=bool)
    pm = reconstruct_pressure(frame, mask, 1.0)
    assert np.all(pm.values[~mask] == 0.0)
    assert np.all(pm.values[mask] == 27.0)


def test_uniform_total_force():
    values = np.zeros((4, 5))
    mask = np.zeros((4, 5), bool)
    mask.flat[:10] = True
    values[mask] = 2.0
    assert total_force(PressureMap(values, mask, 1.0, (0.0, 0.0))) == 20.0


def test_kappa_to_calibration_inverts_forward_model():
    kappa = 37.0
    p = np.array([[0.3, 1.7], [0.0, 5.0]])
    intensity = render_intensity(p, kappa)
    back = kappa_to_calibration(kappa) * intensity ** 1.5
    np.testing.assert_allclose(back, p, rtol=1e-13)


def test_trial_calibration_matches_hand_sum():
    frames = [np.array([[1.0, 4.0]]), np.array([[9.0, 0.0]])]
    c = calibrate_trial(frames, [None, None], [10.0, 20.0], 1.0)
    assert c.c == pytest.approx(30.0 / (1 + 8 + 27))


@given(seed=st.integers(0, 2**32 - 1), ft=st.floats(1e-3, 1e4), pitch=st.floats(0.05, 10))
def test_calibration_closure(seed, ft, pitch):
    rng = np.random.default_rng(seed)
    frame = rng.integers(0, 65536, (8, 9)).astype(np.uint16)
    mask = rng.random((8, 9)) < 0.5
    frame[0, 0] = 1
    mask[0, 0] = True
    c = calibrate_frame(frame, mask, ft, pitch)
    assert total_force(reconstruct_pressure(frame, mask, c, pitch)) == pytest.approx(ft, rel=1e-9)


@given(seed=st.integers(0, 2**32 - 1), s=st.floats(1e-3, 1e3))
def test_intensity_scale_cancels(seed, s):
    rng = np.random.default_rng(seed)
    frame = rng.uniform(0.1, 100, (5, 6))
    mask = rng.random((5, 6)) < 0.6
    mask[0, 0] = True
    a = reconstruct_pressure(frame, mask, calibrate_frame(frame, mask, 300.0, 0.26), 0.26)
    b = reconstruct_pressure(frame * s, mask, calibrate_frame(frame * s, mask, 300.0, 0.26), 0.26)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12)
    c_a = calibrate_frame(frame, mask, 300.0, 0.26).c
    c_b = calibrate_frame(frame * s, mask, 300.0, 0.26).c
    assert c_b == pytest.approx(c_a * s ** -1.5, rel=1e-12)


@given(seed=st.integers(0, 2**32 - 1))
def test_force_additive_over_disjoint_masks(seed):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0, 5, (6, 6))
    a = rng.random((6, 6)) < 0.5
    pm = PressureMap(values, np.ones((6, 6), bool), 0.5, (0.0, 0.0))
    assert total_force(pm, a) + total_force(pm, ~a) == pytest.approx(total_force(pm), rel=1e-12)
