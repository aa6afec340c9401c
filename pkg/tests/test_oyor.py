import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import gt, pred, square
from instassign.maskcore import DimensionError, EmptyMaskError, dice
from instassign.oyor import (
    DEFAULT_LEVELS,
    InvalidCategoryError,
    LevelSpec,
    OyorConfig,
    assign,
    build_quality_matrix,
    geometric_quality,
    in_prior,
    match_quality,
)

EPS = 1e-5


def half_dice_mask(gt_mask):
    """Soft mask with Dice exactly 0.5 against ``gt_mask`` under the default epsilon.

    A constant value v on the B gt pixels gives 2vB / (v^2 B + B + eps) = 1/2,
    i.e. v^2 - 4v + 1 + eps/B = 0.
    """
    b = gt_mask.sum()
    v = 2.0 - math.sqrt(3.0 - EPS / b)
    return gt_mask * v


def test_levels_and_radius():
    assert [lv.stride for lv in DEFAULT_LEVELS] == [8, 16, 32, 64, 128]
    assert OyorConfig().radius(LevelSpec(3)) == 12.0
    with pytest.raises(ValueError):
        LevelSpec(2)
    with pytest.raises(ValueError):
        LevelSpec(8)


def test_config_validation():
    with pytest.raises(ValueError):
        OyorConfig(alpha=1.5)
    with pytest.raises(ValueError):
        OyorConfig(alpha=-0.1)
    with pytest.raises(ValueError):
        OyorConfig(center_radius_multiplier=0.0)


def test_quality_reference_value():
    g = square((16, 16), 4, 4, 4)
    m = half_dice_mask(g)
    assert dice(m, g) == pytest.approx(0.5, abs=1e-14)
    p = pred(m, [0.8, 0.1])
    expected = math.exp(0.1 * math.log(0.8) + 0.9 * math.log(0.5))
    assert match_quality(p, gt(g)) == pytest.approx(expected, abs=1e-9)
    assert match_quality(p, gt(g)) == pytest.approx(0.5241, abs=5e-5)


def test_quality_matrix_outside_region_is_zero():
    g = square((64, 64), 4, 4, 4)
    m = half_dice_mask(g)
    near = pred(m, [0.8])
    far = pred(m, [0.8], loc=(50.0, 50.0))
    q = build_quality_matrix([near, far], [gt(g)])
    assert q.shape == (1, 2)
    assert q[0, 0] == pytest.approx(0.5241, abs=5e-5)
    assert q[0, 1] == 0.0
    a = assign([near, far], [gt(g)])
    assert [(gi, pi) for gi, pi, _ in a.pairs] == [(0, 0)]


def test_zero_quality_pairs_are_unmatched():
    g = square((64, 64), 4, 4, 4)
    far = pred(g, [0.9], loc=(60.0, 60.0))
    a = assign([far], [gt(g)])
    assert a.pairs == []
    assert a.unmatched_gts == [0]


def test_alpha_extremes():
    g = square((16, 16), 2, 2, 5)
    m = half_dice_mask(g)
    p = pred(m, [0.3])
    assert match_quality(p, gt(g), OyorConfig(alpha=0.0)) == pytest.approx(0.3)
    assert match_quality(p, gt(g), OyorConfig(alpha=1.0)) == pytest.approx(0.5, abs=1e-12)
    # zero score with alpha=1 uses 0^0 = 1
    p0 = pred(g, [0.0])
    assert match_quality(p0, gt(g), OyorConfig(alpha=1.0)) == pytest.approx(dice(g, g))
    assert match_quality(p0, gt(g)) == 0.0


def test_geometric_quality_zero_conventions():
    assert geometric_quality(0.0, 0.7, 1.0) == pytest.approx(0.7)
    assert geometric_quality(0.4, 0.0, 0.0) == pytest.approx(0.4)
    assert geometric_quality(0.0, 0.0, 0.5) == 0.0


def test_validation_errors():
    g = gt(square((8, 8), 1, 1, 3), category=2)
    with pytest.raises(InvalidCategoryError):
        match_quality(pred(g.mask, [0.5, 0.5]), g)
    with pytest.raises(DimensionError):
        match_quality(pred(square((9, 9), 1, 1, 3), [0.5, 0.5, 0.5]), g)
    with pytest.raises(EmptyMaskError):
        gt(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        gt(np.full((4, 4), 0.5))
    with pytest.raises(ValueError):
        pred(g.mask, [1.2])
    with pytest.raises(ValueError):
        pred(g.mask, [0.5], pred_iou=1.5)
    with pytest.raises(InvalidCategoryError):
        pred(g.mask, [0.5]).score(3)


def test_in_prior_uses_level_radius():
    g = square((200, 200), 0, 0, 200)
    c = (99.5, 99.5)
    off = (c[0] + 20.0, c[1])
    assert not in_prior(pred(g, [1.0], loc=off, level=3), gt(g))
    assert in_prior(pred(g, [1.0], loc=off, level=4), gt(g))


def test_assign_prefers_higher_quality():
    g1 = square((32, 32), 2, 2, 6)
    g2 = square((32, 32), 18, 18, 6)
    preds = [pred(g1, [0.4]), pred(g1, [0.9]), pred(g2, [0.7])]
    a = assign(preds, [gt(g1), gt(g2)])
    assert a.pred_for_gt() == {0: 1, 1: 2}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 31))
def test_scale_invariance(factor, seed):
    rng = np.random.default_rng(seed)
    base = np.zeros((8, 8))
    base[2:6, 2:6] = 1.0
    soft = base * rng.uniform(0.3, 1.0, size=base.shape)
    big_gt = np.kron(base, np.ones((factor, factor)))
    big_soft = np.kron(soft, np.ones((factor, factor)))
    s = float(rng.uniform(0.05, 1.0))
    # dice is a ratio of pixel sums, so it is unchanged up to epsilon
    q1 = match_quality(pred(soft, [s], level=7), gt(base))
    q2 = match_quality(pred(big_soft, [s], level=7), gt(big_gt))
    assert q2 == pytest.approx(q1, abs=1e-5)


def test_quality_matrix_degenerate_shapes():
    g = square((64, 64), 4, 4, 4)
    assert build_quality_matrix([], [gt(g), gt(g)]).shape == (2, 0)
    far = [pred(g, [0.9], loc=(60.0, 60.0)), pred(g, [0.9], loc=(0.0, 63.0))]
    assert not build_quality_matrix(far, [gt(g)]).any()


def test_assign_with_shared_candidates():
    g = square((32, 32), 4, 4, 6)
    preds = [pred(g, [0.5]) for _ in range(3)]
    q = np.array([[0.9, 0.5, 0.1], [0.8, 0.7, 0.2]])
    a = assign(preds, [gt(g), gt(g)], quality=q)
    assert a.pred_for_gt() == {0: 0, 1: 1}
    assert a.unmatched_gts == []
