import random
from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ppmsway.segment import (
    Fixed,
    RelativeToMax,
    SegmentationError,
    SegmentationParams,
    assign_feet,
    assign_stack,
    connected_components,
    parse_threshold,
    segment_frame,
    threshold_mask,
)


def bfs_components(mask, connectivity):
    """Reference labelling by breadth-first flood fill."""
    h, w = mask.shape
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    seen = np.zeros_like(mask, dtype=bool)
    out = []
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not seen[r, c]:
                comp, queue = set(), deque([(r, c)])
                seen[r, c] = True
                while queue:
                    y, x = queue.popleft()
                    comp.add((x, y))
                    for dy, dx in steps:
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not seen[yy, xx]:
                            seen[yy, xx] = True
                            queue.append((yy, xx))
                out.append(comp)
    # discovery order is raster order of the first pixel; stable sort by size
    return sorted(out, key=lambda s: -len(s))


def blob(shape, r0, c0, r1, c1, value=100):
    f = np.zeros(shape)
    f[r0:r1, c0:c1] = value
    return f


PARAMS = SegmentationParams(RelativeToMax(0.05), min_component_area_mm2=1.0)


def test_threshold_fixed_all_below():
    assert not threshold_mask(np.full((3, 3), 4), SegmentationParams(Fixed(5))).any()


def test_threshold_relative_keeps_at_least_half():
    f = np.array([[100, 50, 49, 0]])
    assert threshold_mask(f, SegmentationParams(RelativeToMax(0.5))).tolist() == [[True, True, False, False]]


def test_threshold_all_zero_relative():
    assert not threshold_mask(np.zeros((4, 4)), PARAMS).any()


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.01, 0.98), b=st.floats(0.01, 0.98))
def test_threshold_monotone(seed, a, b):
    f = np.random.default_rng(seed).integers(0, 1000, (6, 7))
    lo, hi = sorted((a, b))
    m_lo = threshold_mask(f, SegmentationParams(RelativeToMax(lo)))
    m_hi = threshold_mask(f, SegmentationParams(RelativeToMax(hi)))
    assert not (m_hi & ~m_lo).any()


def test_parse_threshold():
    assert parse_threshold("0.1") == RelativeToMax(0.1)
    assert parse_threshold("rel:0.2") == RelativeToMax(0.2)
    assert parse_threshold("fixed:120") == Fixed(120.0)
    with pytest.raises(ValueError):
        parse_threshold("1.5")


def test_components_trivial():
    assert connected_components(np.zeros((3, 3), bool)) == []
    comps = connected_components(np.eye(1, dtype=bool))
    assert len(comps) == 1 and comps[0].area == 1


def test_diagonal_blocks():
    m = np.zeros((6, 6), bool)
    m[0:3, 0:3] = True
    m[3:6, 3:6] = True
    assert len(connected_components(m, 8)) == 1
    assert len(connected_components(m, 4)) == 2


@given(seed=st.integers(0, 2**32 - 1), density=st.floats(0.1, 0.7), conn=st.sampled_from([4, 8]))
def test_components_match_bfs(seed, density, conn):
    m = np.random.default_rng(seed).random((9, 11)) < density
    got = [c.pixel_set() for c in connected_components(m, conn)]
    assert got == bfs_components(m, conn)


def test_two_blobs_left_right():
    f = blob((20, 40), 5, 2, 15, 8) + blob((20, 40), 5, 30, 15, 36)
    left, right = segment_frame(f, PARAMS, 1.0)
    assert left.centroid_px[0] < right.centroid_px[0]
    assert left.centroid_px[0] == pytest.approx(4.5)
    assert left.area_mm2 == 60.0


def test_one_blob_feet_not_found():
    with pytest.raises(SegmentationError, match="feet not found") as err:
        segment_frame(blob((10, 10), 2, 2, 8, 8), PARAMS, 1.0)
    assert err.value.n_components == 1


def test_three_separated_blobs_ambiguous():
    f = blob((10, 30), 2, 0, 8, 4) + blob((10, 30), 2, 12, 8, 16) + blob((10, 30), 2, 24, 8, 28)
    with pytest.raises(SegmentationError, match="ambiguous segmentation") as err:
        segment_frame(f, PARAMS, 1.0)
    assert err.value.n_components == 3


def test_toe_blob_merges_with_overlapping_foot():
    shape = (30, 40)
    f = blob(shape, 8, 2, 28, 10) + blob(shape, 8, 28, 28, 36) + blob(shape, 1, 5, 4, 8)
    left, right = segment_frame(f, PARAMS, 1.0)
    assert left.mask[1:4, 5:8].all()
    assert left.mask.sum() == 20 * 8 + 9
    assert right.mask.sum() == 160


def test_small_blobs_are_dropped():
    shape = (20, 40)
    f = blob(shape, 5, 2, 15, 8) + blob(shape, 5, 30, 15, 36) + blob(shape, 0, 18, 1, 19)
    left, right = segment_frame(f, SegmentationParams(RelativeToMax(0.05), 2.0), 1.0)
    assert left.mask.sum() + right.mask.sum() == 120


def test_assignment_ignores_discovery_order():
    shape = (30, 40)
    f = blob(shape, 8, 2, 28, 10) + blob(shape, 8, 28, 28, 36) + blob(shape, 1, 5, 4, 8)
    comps = connected_components(threshold_mask(f, PARAMS))
    ref = assign_feet(comps, PARAMS, 1.0)
    for seed in range(5):
        shuffled = comps[:]
        random.Random(seed).shuffle(shuffled)
        got = assign_feet(shuffled, PARAMS, 1.0)
        assert all((a.mask == b.mask).all() for a, b in zip(ref, got))


def test_split_line_separates_touching_feet():
    f = blob((10, 20), 2, 4, 8, 16)
    params = SegmentationParams(RelativeToMax(0.05), 1.0, split_x=0.0)
    left, right = segment_frame(f, params, 1.0, origin_x=-10.0)
    assert left.mask[:, :10].sum() == left.mask.sum() == 36
    assert right.mask[:, 10:].sum() == right.mask.sum() == 36


@given(dx=st.integers(-3, 3), dy=st.integers(-3, 3))
def test_translation_equivariance(dx, dy):
    shape = (30, 50)
    f = blob(shape, 8, 8, 20, 14) + blob(shape, 8, 34, 20, 40) + blob(shape, 4, 10, 6, 12)
    moved = np.roll(np.roll(f, dy, axis=0), dx, axis=1)
    a = connected_components(threshold_mask(f, PARAMS))
    b = connected_components(threshold_mask(moved, PARAMS))
    assert [{(x + dx, y + dy) for x, y in c.pixel_set()} for c in a] == [c.pixel_set() for c in b]


@st.composite
def blob_stacks(draw):
    n = draw(st.integers(1, 5))
    h, w = 12, 16
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    frames = np.zeros((n, h, w))
    for k in range(n):
        for _ in range(draw(st.integers(0, 4))):
            r, c = rng.integers(0, h - 2), rng.integers(0, w - 2)
            frames[k, r:r + rng.integers(1, 4), c:c + rng.integers(1, 5)] = rng.integers(1, 100)
    return frames


@given(stack=blob_stacks(), conn=st.sampled_from([4, 8]), split=st.sampled_from([None, 0.3]),
       min_area=st.sampled_from([1.0, 3.0]))
def test_stack_matches_per_frame(stack, conn, split, min_area):
    params = SegmentationParams(RelativeToMax(0.2), min_area, conn, split)
    origin_x = -8.0
    got = assign_stack(stack, params, 1.0, origin_x)
    labels = np.zeros(stack.shape, np.int8)
    labels.flat[got.flat_index] = got.foot
    for k, frame in enumerate(stack):
        try:
            left, right = segment_frame(frame, params, 1.0, origin_x)
        except SegmentationError as exc:
            assert got.failures.get(k) == exc.reason
            assert not labels[k].any()
            continue
        assert k not in got.failures
        assert (labels[k] == 1).tolist() == left.mask.tolist()
        assert (labels[k] == 2).tolist() == right.mask.tolist()
