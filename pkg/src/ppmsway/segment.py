"""Foot contact segmentation: thresholding, connected components, left/right.

The per-frame functions mirror the steps one at a time.  ``assign_stack``
runs the same rules over a whole ``(n, h, w)`` stack at once; components
never connect across frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import ndimage


class SegmentationError(ValueError):
    def __init__(self, message: str, n_components: int = 0):
        super().__init__(f"{message} ({n_components} regions)")
        self.reason = message
        self.n_components = n_components


@dataclass(frozen=True)
class Fixed:
    counts: float


@dataclass(frozen=True)
class RelativeToMax:
    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie in (0, 1)")


ThresholdMode = Union[Fixed, RelativeToMax]


@dataclass(frozen=True)
class SegmentationParams:
    threshold: ThresholdMode = field(default_factory=lambda: RelativeToMax(0.05))
    min_component_area_mm2: float = 2.0
    connectivity: int = 8
    split_x: float | None = None  # mm; pixels left of the line go to the left foot

    def __post_init__(self):
        if not self.min_component_area_mm2 > 0:
            raise ValueError("min_component_area_mm2 must be positive")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


def parse_threshold(text: str) -> ThresholdMode:
    """``"0.05"`` or ``"rel:0.05"`` is relative to the frame max; ``"fixed:120"`` is in counts."""
    text = text.strip().lower()
    if text.startswith("fixed:"):
        return Fixed(float(text[6:]))
    if text.startswith("rel:"):
        text = text[4:]
    return RelativeToMax(float(text))


def _structure(connectivity: int) -> np.ndarray:
    return ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)


def threshold_level(values: np.ndarray, mode: ThresholdMode):
    """Threshold per frame; ``values`` may be one frame or an ``(n, h, w)`` stack."""
    if isinstance(mode, Fixed):
        return mode.counts
    peak = values.max(axis=(-2, -1), keepdims=values.ndim == 3) if values.size else 0
    return mode.fraction * np.asarray(peak, dtype=np.float64)


def _threshold(values: np.ndarray, mode: ThresholdMode) -> np.ndarray:
    level = threshold_level(values, mode)
    # an all-zero frame under a relative threshold yields an empty mask
    return (values >= level) & (values > 0)


def threshold_mask(frame, params) -> np.ndarray:
    mode = params.threshold if isinstance(params, SegmentationParams) else params
    values = np.asarray(getattr(frame, "pixels", frame))
    return _threshold(values, mode)


@dataclass(frozen=True)
class Component:
    rows: np.ndarray
    cols: np.ndarray
    shape: tuple[int, int]
    order: int = 0  # raster order of the component's first pixel

    @property
    def area(self) -> int:
        return len(self.rows)

    @property
    def col_range(self) -> tuple[int, int]:
        return int(self.cols.min()), int(self.cols.max())

    @property
    def centroid(self) -> tuple[float, float]:
        """(x, y) in pixel index units."""
        return float(self.cols.mean()), float(self.rows.mean())

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def pixel_set(self) -> set[tuple[int, int]]:
        return set(zip(self.cols.tolist(), self.rows.tolist()))


def connected_components(mask, connectivity: int = 8) -> list[Component]:
    """Maximal connected pixel sets, largest first, ties by first raster pixel."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, _structure(connectivity))
    if n == 0:
        return []
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    lab = flat[idx]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    bounds = np.searchsorted(lab, np.arange(1, n + 2))
    comps = []
    for k in range(n):
        pix = idx[bounds[k]:bounds[k + 1]]
        rows, cols = np.divmod(pix, mask.shape[1])
        comps.append(Component(rows, cols, mask.shape, k))
    # ndimage numbers labels in raster order of their first pixel
    comps.sort(key=lambda c: (-c.area, c.order))
    return comps


@dataclass(frozen=True)
class FootRegion:
    side: str  # "Left" or "Right"
    mask: np.ndarray
    area_mm2: float
    centroid_px: tuple[float, float]  # (x, y) pixel index units

    def pixel_set(self) -> set[tuple[int, int]]:
        rows, cols = np.nonzero(self.mask)
        return set(zip(cols.tolist(), rows.tolist()))


@dataclass
class _Piece:
    """Component summary used by the assignment rule."""

    key: int
    area: int
    col_min: int
    col_max: int
    sum_col: float
    side: int = 0  # 0 left of split line, 1 right; unused without a split


def _assign(pieces: Sequence[_Piece], min_area_px: float, split: bool):
    """Return (left_keys, right_keys) or raise SegmentationError.

    Pieces are expected largest first.  Without a split line, a kept piece
    whose column range overlaps an existing region joins it (heel and toe
    fragments of one foot); otherwise it opens a new region.
    """
    kept = [p for p in pieces if p.area >= min_area_px]
    if split:
        regions = [[p for p in kept if p.side == 0], [p for p in kept if p.side == 1]]
        if not regions[0] or not regions[1]:
            raise SegmentationError("feet not found", sum(1 for r in regions if r))
        return [p.key for p in regions[0]], [p.key for p in regions[1]]

    regions: list[dict] = []
    for p in kept:
        hits = [r for r in regions if p.col_min <= r["hi"] and r["lo"] <= p.col_max]
        if not hits:
            regions.append({"lo": p.col_min, "hi": p.col_max, "area": p.area,
                            "sum_col": p.sum_col, "keys": [p.key]})
            continue
        target = hits[0]
        for other in hits[1:]:
            target["keys"] += other["keys"]
            target["area"] += other["area"]
            target["sum_col"] += other["sum_col"]
            target["lo"] = min(target["lo"], other["lo"])
            target["hi"] = max(target["hi"], other["hi"])
            regions.remove(other)
        target["keys"].append(p.key)
        target["area"] += p.area
        target["sum_col"] += p.sum_col
        target["lo"] = min(target["lo"], p.col_min)
        target["hi"] = max(target["hi"], p.col_max)
    if len(regions) < 2:
        raise SegmentationError("feet not found", len(regions))
    if len(regions) > 2:
        raise SegmentationError("ambiguous segmentation", len(regions))
    a, b = regions
    if a["sum_col"] / a["area"] > b["sum_col"] / b["area"]:
        a, b = b, a
    return a["keys"], b["keys"]


def split_column(split_x: float, origin_x: float, pitch: float) -> int:
    """First pixel column whose centre lies at or right of ``split_x``."""
    return int(np.ceil((split_x - origin_x) / pitch - 0.5))


def _region(side: str, mask: np.ndarray, pixel_pitch: float) -> FootRegion:
    rows, cols = np.nonzero(mask)
    return FootRegion(side, mask, len(rows) * pixel_pitch * pixel_pitch,
                      (float(cols.mean()), float(rows.mean())))


def assign_feet(components: Sequence[Component], params: SegmentationParams, pixel_pitch: float,
                origin_x: float | None = None) -> tuple[FootRegion, FootRegion]:
    """Pick the left and right foot regions out of the frame's components.

    ``origin_x`` (plate x of the frame's left edge, mm) is needed only with
    a split line; it defaults to a plate-centred frame.
    """
    min_area_px = params.min_component_area_mm2 / (pixel_pitch * pixel_pitch)
    comps = sorted(components, key=lambda c: (-c.area, c.order))
    split = params.split_x is not None
    if not comps:
        raise SegmentationError("feet not found", 0)
    shape = comps[0].shape
    pieces, parts = [], {}
    if split:
        if origin_x is None:
            origin_x = -0.5 * shape[1] * pixel_pitch
        s = split_column(params.split_x, origin_x, pixel_pitch)
        for i, c in enumerate(comps):
            for side, sel in ((0, c.cols < s), (1, c.cols >= s)):
                if sel.any():
                    cols = c.cols[sel]
                    key = 2 * i + side
                    parts[key] = (c.rows[sel], cols)
                    # the area filter applies to the whole component
                    pieces.append(_Piece(key, c.area, int(cols.min()), int(cols.max()),
                                         float(cols.sum()), side))
    else:
        for i, c in enumerate(comps):
            parts[i] = (c.rows, c.cols)
            lo, hi = c.col_range
            pieces.append(_Piece(i, c.area, lo, hi, float(c.cols.sum())))
    left_keys, right_keys = _assign(pieces, min_area_px, split)
    out = []
    for side, keys in (("Left", left_keys), ("Right", right_keys)):
        m = np.zeros(shape, dtype=bool)
        for k in keys:
            m[parts[k]] = True
        out.append(_region(side, m, pixel_pitch))
    return out[0], out[1]


def segment_frame(frame, params: SegmentationParams, pixel_pitch: float, origin_x: float | None = None):
    mask = threshold_mask(frame, params)
    return assign_feet(connected_components(mask, params.connectivity), params, pixel_pitch, origin_x)


# ---------------------------------------------------------------------------
# stack path


@dataclass
class StackAssignment:
    """Per-pixel foot labels for a stack: 0 background, 1 left, 2 right.

    Only the labelled pixels are kept, as flat indices into the stack.
    ``failures`` maps frame index to the reason its feet were not found.
    """

    flat_index: np.ndarray
    foot: np.ndarray
    failures: dict[int, str]


def assign_stack(values: np.ndarray, params: SegmentationParams, pixel_pitch: float,
                 origin_x: float) -> StackAssignment:
    """Threshold, label and assign feet for every frame of ``values``."""
    n, h, w = values.shape
    mask = _threshold(values, params.threshold)
    structure = np.zeros((3, 3, 3), dtype=bool)
    structure[1] = _structure(params.connectivity)
    labels, nlab = ndimage.label(mask, structure)
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    lab = flat[idx]
    frame_of, rem = np.divmod(idx, h * w)
    cols = rem % w
    failures: dict[int, str] = {}
    if nlab == 0:
        return StackAssignment(idx[:0], lab[:0].astype(np.int8),
                               {f: "feet not found" for f in range(n)})

    split = params.split_x is not None
    side = (cols >= split_column(params.split_x, origin_x, pixel_pitch)).astype(np.int64) if split \
        else np.zeros_like(cols)
    key = lab * 2 + side
    nkey = 2 * (nlab + 1)
    area = np.bincount(lab, minlength=nlab + 1)
    k_area = np.bincount(key, minlength=nkey)
    k_sumcol = np.bincount(key, weights=cols, minlength=nkey)
    k_min = np.full(nkey, np.iinfo(np.int64).max)
    np.minimum.at(k_min, key, cols)
    k_max = np.full(nkey, -1)
    np.maximum.at(k_max, key, cols)
    lab_frame = np.zeros(nlab + 1, dtype=np.int64)
    lab_frame[lab] = frame_of

    min_area_px = params.min_component_area_mm2 / (pixel_pitch * pixel_pitch)
    key_foot = np.zeros(nkey, dtype=np.int8)
    frame_start = np.searchsorted(lab_frame[1:], np.arange(n + 1)) + 1
    for f in range(n):
        labs = range(frame_start[f], frame_start[f + 1])
        if len(labs) == 0:
            failures[f] = "feet not found"
            continue
        pieces = []
        for L in sorted(labs, key=lambda L: (-area[L], L)):
            for s in ((0, 1) if split else (0,)):
                k = 2 * L + s
                if k_area[k]:
                    pieces.append(_Piece(k, int(area[L]), int(k_min[k]), int(k_max[k]), float(k_sumcol[k]), s))
        try:
            left, right = _assign(pieces, min_area_px, split)
        except SegmentationError as exc:
            failures[f] = exc.reason
            continue
        key_foot[left] = 1
        key_foot[right] = 2
    foot = key_foot[key]
    keep = foot > 0
    return StackAssignment(idx[keep], foot[keep], failures)
