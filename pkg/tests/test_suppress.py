import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import pred, square
from instassign.maskcore import iou
from instassign.oyor import ScoredPrediction
from instassign.suppress import NmsConfig, apply_nms, greedy_mask_nms

SHAPE = (20, 20)


def sp(mask, score, category=0):
    return ScoredPrediction(pred(mask, [1.0] * 3), category, score)


def overlapping_pair(n_shared):
    """Two 10-pixel column strips sharing ``n_shared`` pixels."""
    a = np.zeros(SHAPE)
    b = np.zeros(SHAPE)
    a[0:10, 0] = 1.0
    b[10 - n_shared:20 - n_shared, 0] = 1.0
    return a, b


def test_overlap_above_threshold_suppressed():
    a, b = overlapping_pair(8)   # IoU 8/12
    assert iou(a, b) == pytest.approx(2 / 3)
    assert greedy_mask_nms([sp(a, 0.9), sp(b, 0.8)]) == [0]


def test_iou_060_with_threshold_070_kept():
    inter, union = 6.0, 10.0
    a = np.zeros(SHAPE)
    b = np.zeros(SHAPE)
    a[0:8, 0] = 1.0
    b[2:10, 0] = 1.0
    assert iou(a, b) == pytest.approx(inter / union)
    out = greedy_mask_nms([sp(a, 0.9), sp(b, 0.8)], NmsConfig(iou_threshold=0.7))
    assert out == [0, 1]
    assert greedy_mask_nms([sp(a, 0.9), sp(b, 0.8)], NmsConfig(iou_threshold=0.5)) == [0]


def test_lower_score_first_in_input():
    a, b = overlapping_pair(9)
    assert greedy_mask_nms([sp(a, 0.3), sp(b, 0.8)]) == [1]


def test_categories_are_independent():
    m = square(SHAPE, 2, 2, 5)
    assert greedy_mask_nms([sp(m, 0.9, 0), sp(m, 0.8, 1)]) == [0, 1]


def test_score_floor_and_cap():
    masks = [square(SHAPE, 0, i, 1) for i in range(5)]
    scored = [sp(m, s) for m, s in zip(masks, (0.9, 0.01, 0.5, 0.04, 0.6))]
    assert greedy_mask_nms(scored) == [0, 4, 2]
    assert greedy_mask_nms(scored, NmsConfig(max_keep=2)) == [0, 4]


def test_chain_suppression_is_greedy():
    # b overlaps both a and c, a and c are disjoint: a kills b, so c survives
    a = np.zeros(SHAPE)
    b = np.zeros(SHAPE)
    c = np.zeros(SHAPE)
    a[0:10, 0] = 1.0
    b[2:12, 0] = 1.0
    c[10:20, 0] = 1.0
    out = greedy_mask_nms([sp(a, 0.9), sp(b, 0.8), sp(c, 0.7)])
    assert out == [0, 2]


def test_config_validation():
    with pytest.raises(ValueError):
        NmsConfig(iou_threshold=1.0)
    with pytest.raises(ValueError):
        NmsConfig(max_keep=0)


def random_scored(seed, n):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        top, left = rng.integers(0, 12, size=2)
        size = int(rng.integers(3, 8))
        out.append(sp(square(SHAPE, top, left, size), float(rng.uniform(0.06, 1.0)),
                      int(rng.integers(0, 2))))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(0, 15))
def test_idempotent(seed, n):
    scored = random_scored(seed, n)
    once = apply_nms(scored)
    assert apply_nms(once) == once


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(0, 15))
def test_kept_are_mutually_below_threshold(seed, n):
    scored = random_scored(seed, n)
    kept = apply_nms(scored)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            if a.category == b.category:
                assert iou(a.pred.mask, b.pred.mask) < 0.5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 15))
def test_top_scoring_always_kept(seed, n):
    scored = random_scored(seed, n)
    best = min(range(n), key=lambda i: (-scored[i].score, i))
    assert greedy_mask_nms(scored)[0] == best
