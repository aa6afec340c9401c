"""One-to-one assignment of predictions to ground-truth instances.

Matching quality for a (prediction, ground truth) pair is

    [location in the gt's center region] * cls(c)^(1 - alpha) * dice^alpha

and the assignment maximizes total quality over injective maps from ground
truths to predictions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from .maskcore import (
    DEFAULT_MASK_CFG,
    DimensionError,
    EmptyMaskError,
    MaskOpsConfig,
    as_soft_mask,
    centroid,
    dice,
    in_center_region,
)
from .matcher import Assignment, solve

MIN_LEVEL = 3
MAX_LEVEL = 7


class InvalidCategoryError(ValueError):
    pass


@dataclass(frozen=True)
class LevelSpec:
    level_id: int

    def __post_init__(self):
        if not MIN_LEVEL <= self.level_id <= MAX_LEVEL:
            raise ValueError(f"level must be in [{MIN_LEVEL}, {MAX_LEVEL}], got {self.level_id}")

    @property
    def stride(self) -> int:
        return 2 ** self.level_id


DEFAULT_LEVELS = tuple(LevelSpec(i) for i in range(MIN_LEVEL, MAX_LEVEL + 1))


@dataclass(frozen=True, eq=False)
class Prediction:
    location: Tuple[float, float]
    level: LevelSpec
    class_scores: np.ndarray
    mask: np.ndarray
    pred_iou: float

    def __post_init__(self):
        scores = np.asarray(self.class_scores, dtype=np.float64).ravel()
        if scores.size == 0 or scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("class_scores must be a non-empty vector in [0, 1]")
        if not 0.0 <= self.pred_iou <= 1.0:
            raise ValueError(f"pred_iou must lie in [0, 1], got {self.pred_iou}")
        object.__setattr__(self, "class_scores", scores)
        object.__setattr__(self, "mask", as_soft_mask(self.mask))
        object.__setattr__(self, "location", (float(self.location[0]), float(self.location[1])))
        object.__setattr__(self, "pred_iou", float(self.pred_iou))

    def score(self, category: int) -> float:
        if not 0 <= category < self.class_scores.size:
            raise InvalidCategoryError(
                f"category {category} outside [0, {self.class_scores.size})")
        return float(self.class_scores[category])

    @property
    def top_category(self) -> int:
        return int(np.argmax(self.class_scores))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    category: int
    mask: np.ndarray

    def __post_init__(self):
        m = as_soft_mask(self.mask)
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError("ground-truth masks must be binary")
        if not m.any():
            raise EmptyMaskError("ground-truth mask has no foreground pixels")
        if self.category < 0:
            raise InvalidCategoryError(f"negative category id {self.category}")
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "category", int(self.category))


@dataclass(frozen=True)
class OyorConfig:
    alpha: float = 0.9
    center_radius_multiplier: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.center_radius_multiplier > 0:
            raise ValueError("center_radius_multiplier must be positive")

    def radius(self, level: LevelSpec) -> float:
        return self.center_radius_multiplier * level.stride


def _pow(base: float, exponent: float) -> float:
    # 0 ** 0 == 1 by convention
    if exponent == 0.0:
        return 1.0
    return base ** exponent


def geometric_quality(cls_score: float, mask_dice: float, alpha: float) -> float:
    """Weighted geometric mean ``cls^(1-alpha) * dice^alpha``."""
    return _pow(cls_score, 1.0 - alpha) * _pow(mask_dice, alpha)


def _validate_pair(pred: Prediction, gt: GroundTruth) -> None:
    if pred.mask.shape != gt.mask.shape:
        raise DimensionError(f"prediction mask {pred.mask.shape} vs gt mask {gt.mask.shape}")
    if gt.category >= pred.class_scores.size:
        raise InvalidCategoryError(
            f"gt category {gt.category} outside prediction's {pred.class_scores.size} scores")


def in_prior(pred: Prediction, gt: GroundTruth, cfg: OyorConfig = OyorConfig(),
             mcfg: MaskOpsConfig = DEFAULT_MASK_CFG, center=None) -> bool:
    return in_center_region(pred.location, gt.mask, cfg.radius(pred.level), mcfg, center=center)


def match_quality(pred: Prediction, gt: GroundTruth, cfg: OyorConfig = OyorConfig(),
                  mcfg: MaskOpsConfig = DEFAULT_MASK_CFG, center=None) -> float:
    _validate_pair(pred, gt)
    if not in_prior(pred, gt, cfg, mcfg, center=center):
        return 0.0
    return geometric_quality(pred.class_scores[gt.category], dice(pred.mask, gt.mask, mcfg),
                             cfg.alpha)


def build_quality_matrix(preds: Sequence[Prediction], gts: Sequence[GroundTruth],
                         cfg: OyorConfig = OyorConfig(),
                         mcfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> np.ndarray:
    """G x N matrix of match qualities, rows in gt order and columns in prediction order."""
    q = np.zeros((len(gts), len(preds)))
    for i, gt in enumerate(gts):
        center = centroid(gt.mask)
        for j, pred in enumerate(preds):
            q[i, j] = match_quality(pred, gt, cfg, mcfg, center=center)
    return q


def assign(preds: Sequence[Prediction], gts: Sequence[GroundTruth],
           cfg: OyorConfig = OyorConfig(), mcfg: MaskOpsConfig = DEFAULT_MASK_CFG,
           quality: np.ndarray | None = None) -> Assignment:
    """Optimal one-to-one assignment; zero-quality matches are reported as unmatched."""
    if quality is None:
        quality = build_quality_matrix(preds, gts, cfg, mcfg)
    result = solve(quality)
    pairs = [(g, p, qv) for g, p, qv in result.pairs if qv > 0.0]
    matched = {g for g, _, _ in pairs}
    return Assignment(pairs=pairs,
                      unmatched_gts=[g for g in range(len(gts)) if g not in matched])


class ScoredPrediction(NamedTuple):
    """A prediction emitted at inference with its chosen category and ranking score."""
    pred: Prediction
    category: int
    score: float
