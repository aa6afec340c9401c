import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from instassign.maskcore import (
    DimensionError,
    EmptyMaskError,
    MalformedRleError,
    MaskOpsConfig,
    RleMask,
    binarize,
    centroid,
    decode_rle,
    dice,
    encode_rle,
    in_center_region,
    iou,
    pairwise_iou,
)

CFG = MaskOpsConfig()


def block(shape, rows, cols, value=1.0):
    m = np.zeros(shape)
    m[rows, cols] = value
    return m


# --- dice -------------------------------------------------------------------

def test_dice_identical_three_pixels():
    m = np.zeros((3, 3))
    m[0, 0] = m[1, 1] = m[2, 2] = 1.0
    assert dice(m, m) == pytest.approx(6 / (6 + 1e-5), abs=1e-12)
    assert dice(m, m) < 1.0


def test_dice_disjoint_is_zero():
    a = block((4, 4), slice(0, 2), slice(0, 2))
    b = block((4, 4), slice(2, 4), slice(2, 4))
    assert dice(a, b) == 0.0


def test_dice_soft_half_vs_ones():
    # 2 * (4 * 0.5) / (4 * 0.25 + 4 * 1 + eps)
    soft = np.full((2, 2), 0.5)
    ones = np.ones((2, 2))
    assert dice(soft, ones) == pytest.approx(4.0 / 5.00001, abs=1e-12)
    assert dice(soft, ones) == pytest.approx(0.799998, abs=1e-6)


def test_dice_shape_mismatch():
    with pytest.raises(DimensionError):
        dice(np.zeros((2, 2)), np.zeros((2, 3)))


def test_dice_respects_epsilon():
    m = np.ones((1, 2))
    assert dice(m, m, MaskOpsConfig(dice_epsilon=1.0)) == pytest.approx(4 / 5)


# --- iou --------------------------------------------------------------------

def test_iou_identical():
    m = block((5, 5), slice(1, 3), slice(1, 4))
    assert iou(m, m) == 1.0


def test_iou_half_overlapping_blocks():
    a = block((4, 4), slice(0, 2), slice(0, 2))
    b = block((4, 4), slice(0, 2), slice(1, 3))
    assert iou(a, b) == pytest.approx(2 / 6)


def test_iou_both_empty_is_zero():
    assert iou(np.zeros((3, 3)), np.zeros((3, 3))) == 0.0


def test_iou_binarizes_soft_masks():
    a = np.array([[0.49, 0.5], [0.9, 0.0]])
    b = np.array([[1.0, 1.0], [1.0, 0.0]])
    # a binarizes to {(0,1), (1,0)}
    assert iou(a, b) == pytest.approx(2 / 3)


def test_iou_shape_mismatch():
    with pytest.raises(DimensionError):
        iou(np.zeros((2, 2)), np.zeros((3, 2)))


def test_pairwise_iou_matches_scalar():
    rng = np.random.default_rng(5)
    a = [rng.random((6, 7)) for _ in range(4)]
    b = [rng.random((6, 7)) for _ in range(3)]
    mat = pairwise_iou(a, b)
    for i in range(4):
        for j in range(3):
            assert mat[i, j] == iou(a[i], b[j])


# --- centroid ---------------------------------------------------------------

def test_centroid_square():
    assert centroid(block((4, 4), slice(0, 2), slice(0, 2))) == (0.5, 0.5)


def test_centroid_point():
    m = np.zeros((5, 9))
    m[3, 7] = 1.0
    assert centroid(m) == (3.0, 7.0)


def test_centroid_l_shape():
    m = np.zeros((2, 2))
    m[0, 0] = m[1, 0] = m[1, 1] = 1.0
    r, c = centroid(m)
    assert r == pytest.approx(2 / 3)
    assert c == pytest.approx(1 / 3)


def test_centroid_empty():
    with pytest.raises(EmptyMaskError):
        centroid(np.zeros((3, 3)))


# --- rle --------------------------------------------------------------------

@pytest.mark.parametrize("mask, counts", [
    (np.zeros((2, 2)), [4]),
    (np.ones((2, 2)), [0, 4]),
    (np.array([[1.0, 0.0], [0.0, 0.0]]), [0, 1, 3]),
    # column-major: (1,0) comes before (0,1)
    (np.array([[0.0, 0.0], [1.0, 0.0]]), [1, 1, 2]),
    (np.array([[0.0, 1.0], [0.0, 1.0]]), [2, 2]),
])
def test_encode_rle_examples(mask, counts):
    r = encode_rle(mask)
    assert list(r.counts) == counts
    assert np.array_equal(decode_rle(r), mask)


def test_rle_json_shape():
    r = encode_rle(np.array([[1.0, 0.0], [0.0, 0.0]]))
    obj = r.to_json()
    assert obj == {"size": [2, 2], "counts": [0, 1, 3]}
    assert RleMask.from_json(json.loads(json.dumps(obj))) == r


@pytest.mark.parametrize("counts", [[3], [0, 2, 3], [-1, 5], [2, 0, 2]])
def test_malformed_rle(counts):
    with pytest.raises(MalformedRleError):
        RleMask(2, 2, tuple(counts))


def test_rle_from_json_rejects_missing_fields():
    with pytest.raises(MalformedRleError):
        RleMask.from_json({"counts": [4]})


# --- center region ----------------------------------------------------------

def test_center_region_filled_square():
    m = block((10, 10), slice(2, 7), slice(2, 7))
    assert in_center_region(centroid(m), m, radius=1.0)


def test_center_region_outside_radius():
    m = block((20, 20), slice(0, 20), slice(0, 20))
    c = centroid(m)
    assert not in_center_region((c[0] + 3.5, c[1]), m, radius=3.0)
    assert not in_center_region((c[0], c[1] - 3.5), m, radius=3.0)
    assert in_center_region((c[0] + 3.0, c[1] - 3.0), m, radius=3.0)


def test_center_region_ring_hole():
    m = block((9, 9), slice(1, 8), slice(1, 8))
    m[3:6, 3:6] = 0.0
    assert centroid(m) == (4.0, 4.0)
    # inside the radius but on the background hole
    assert not in_center_region((4.0, 4.0), m, radius=5.0)
    assert in_center_region((4.0, 2.0), m, radius=5.0)


def test_center_region_empty_mask():
    with pytest.raises(EmptyMaskError):
        in_center_region((0.0, 0.0), np.zeros((3, 3)), radius=2.0)


# --- properties -------------------------------------------------------------

masks_4x5 = arrays(np.float64, (4, 5), elements=st.floats(0.0, 1.0))
binary_4x5 = arrays(np.float64, (4, 5), elements=st.sampled_from([0.0, 1.0]))


@given(masks_4x5, masks_4x5)
def test_dice_symmetric(a, b):
    assert dice(a, b) == dice(b, a)
    assert 0.0 <= dice(a, b) < 1.0


@given(binary_4x5)
def test_dice_self_near_one(m):
    if m.sum() >= 1:
        assert dice(m, m) >= 1 - CFG.dice_epsilon


@given(binary_4x5, binary_4x5, st.integers(0, 19))
def test_dice_monotone_under_shared_pixel_removal(a, b, k):
    shared = np.flatnonzero((a.ravel() > 0) & (b.ravel() > 0))
    if shared.size == 0:
        return
    a2 = a.copy().ravel()
    a2[shared[k % shared.size]] = 0.0
    assert dice(a2.reshape(a.shape), b) <= dice(a, b)


@given(masks_4x5, masks_4x5)
def test_iou_bounds(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    same = np.array_equal(binarize(a), binarize(b)) and binarize(a).any()
    assert (v == 1.0) == same


@given(masks_4x5)
def test_rle_roundtrip(m):
    assert np.array_equal(decode_rle(encode_rle(m)), binarize(m).astype(float))


@settings(max_examples=50)
@given(binary_4x5)
def test_centroid_in_bbox(m):
    if not m.any():
        return
    r, c = centroid(m)
    rows, cols = np.nonzero(m)
    assert rows.min() <= r <= rows.max()
    assert cols.min() <= c <= cols.max()
