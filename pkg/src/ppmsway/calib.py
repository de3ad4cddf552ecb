"""Intensity to pressure conversion for an FTIR plate.

Two constants appear here and they are not the same number:

* ``theoretical_kappa`` is the optical-mechanical constant of the forward
  model ``I = kappa * P**(2/3)``.
* The calibration constant ``c`` of the inverse model ``P = c * I**(3/2)``
  is what the pipeline uses.  It is recovered every frame from the force
  sensor total, ``c = F_t / sum(I**1.5 * A_p)``.  For an ideal plate
  ``c == kappa**-1.5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class OpticalParams:
    A_p: float  # pixel area, mm^2
    I_o: float  # incident intensity
    alpha: float  # volume polarizability of scatterers
    phi_o: float  # scatterer concentration
    D: float  # camera to contact distance, mm
    theta_s: float  # scattering angle, rad
    lam: float  # wavelength, same length unit as D
    n_o: float
    n_w: float
    E: float  # tissue Young's modulus, kPa
    nu: float  # Poisson's ratio


def cos_refraction(theta_s: float, n_o: float, n_w: float) -> float:
    s = (n_w / n_o) * math.sin(theta_s)
    if s >= 1:
        raise CalibrationError("total internal reflection violated at camera path")
    return math.sqrt(1.0 - s * s)


def theoretical_kappa(p: OpticalParams) -> float:
    """Forward-model constant from the plate's optical and tissue properties.

    ``nu`` is only range-checked when it lies outside ``[0, 0.5]``; ``nu = 0``
    is accepted so the hand-evaluable reference case works.
    """
    for name in ("A_p", "I_o", "alpha", "phi_o", "D", "lam", "n_o", "n_w", "E"):
        if not getattr(p, name) > 0:
            raise CalibrationError(f"{name} must be positive")
    if not 0 <= p.theta_s < math.pi / 2:
        raise CalibrationError("theta_s must lie in [0, pi/2)")
    if not 0 <= p.nu <= 0.5:
        raise CalibrationError("nu must lie in [0, 0.5]")
    cos_r = cos_refraction(p.theta_s, p.n_o, p.n_w)
    optical = (math.pi ** 4 * p.A_p * p.I_o * p.alpha ** 2 * (1 + math.cos(p.theta_s) ** 2) * p.phi_o
               / (2 * p.lam ** 3 * p.D ** 2 * p.n_o * cos_r))
    return optical * (3 * (1 - p.nu ** 2) / p.E) ** (2.0 / 3.0)


def kappa_to_calibration(kappa: float) -> float:
    return kappa ** -1.5


@dataclass(frozen=True)
class CalibrationConstant:
    c: float  # N / (mm^2 * counts^1.5)
    frame_index: int = 0


@dataclass(frozen=True)
class PressureMap:
    """Pressure grid in N/mm^2.

    ``origin`` is the plate position (x, y) in mm of the map's top-left
    corner; pixel (r, c) is centred at ``x = x0 + (c + 0.5) * pitch`` and
    ``y = y0 - (r + 0.5) * pitch``.
    """

    values: np.ndarray
    mask: np.ndarray
    pixel_pitch: float
    origin: tuple[float, float]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.width) + 0.5) * self.pixel_pitch

    def y_centers(self) -> np.ndarray:
        return self.origin[1] - (np.arange(self.height) + 0.5) * self.pixel_pitch


def plate_origin(width: int, height: int, pixel_pitch: float) -> tuple[float, float]:
    """Top-left corner of a plate-centred ``width x height`` pixel grid."""
    return (-0.5 * width * pixel_pitch, 0.5 * height * pixel_pitch)


def _pixels(frame) -> np.ndarray:
    return np.asarray(getattr(frame, "pixels", frame))


def _mask(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} != frame shape {shape}")
    return mask


def intensity_moment(frame, mask=None) -> float:
    """Sum of I**1.5 over the masked pixels."""
    pix = _pixels(frame)
    m = _mask(mask, pix.shape)
    return float(np.sum(pix[m].astype(np.float64) ** 1.5))


def calibrate_frame(frame, mask, F_t: float, pixel_pitch: float, frame_index: int | None = None) -> CalibrationConstant:
    """Per-frame constant that makes the reconstructed load equal ``F_t``."""
    if not F_t > 0:
        raise CalibrationError("no load")
    moment = intensity_moment(frame, mask)
    if moment == 0:
        raise CalibrationError("no contact signal under load")
    if frame_index is None:
        frame_index = getattr(frame, "timestamp_index", 0)
    return CalibrationConstant(F_t / (moment * pixel_pitch * pixel_pitch), frame_index)


def calibrate_trial(frames, masks, totals, pixel_pitch: float) -> CalibrationConstant:
    """Single constant for a whole trial (sensitivity-study mode)."""
    totals = np.asarray(totals, dtype=np.float64)
    moment = sum(intensity_moment(f, m) for f, m in zip(frames, masks))
    load = float(np.sum(totals))
    if not load > 0:
        raise CalibrationError("no load")
    if moment == 0:
        raise CalibrationError("no contact signal under load")
    return CalibrationConstant(load / (moment * pixel_pitch * pixel_pitch), -1)


def reconstruct_pressure(frame, mask, c, pixel_pitch: float = 1.0, origin=None) -> PressureMap:
    cval = c.c if isinstance(c, CalibrationConstant) else float(c)
    if not cval > 0:
        raise CalibrationError("calibration constant must be positive")
    pix = _pixels(frame)
    m = _mask(mask, pix.shape)
    values = np.zeros(pix.shape, dtype=np.float64)
    values[m] = cval * pix[m].astype(np.float64) ** 1.5
    if origin is None:
        origin = plate_origin(pix.shape[1], pix.shape[0], pixel_pitch)
    return PressureMap(values, m, pixel_pitch, origin)


def total_force(pm: PressureMap, mask=None) -> float:
    values = pm.values if mask is None else np.where(mask, pm.values, 0.0)
    return float(np.sum(values)) * pm.pixel_pitch * pm.pixel_pitch
