"""Inference re-ranking and scalar training losses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from .maskcore import DEFAULT_MASK_CFG, DimensionError, MaskOpsConfig, centroid, dice, iou
from .matcher import Assignment
from .oyor import GroundTruth, OyorConfig, Prediction, _validate_pair, geometric_quality, in_prior

SCORE_CLAMP = 1e-6
AUX_TOP_K = 9


class InvalidLossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 1.0
    lambda_mask: float = 1.0
    lambda_rank: float = 1.0
    lambda_aux: float = 1.0

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_mask", "lambda_rank", "lambda_aux"):
            w = getattr(self, name)
            if not (math.isfinite(w) and w >= 0):
                raise ValueError(f"{name} must be a non-negative real, got {w}")


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    alpha_f: float = 0.25

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not 0.0 < self.alpha_f < 1.0:
            raise ValueError("alpha_f must lie in (0, 1)")


@dataclass
class AuxAssignment:
    """Many-to-one auxiliary positives.

    ``per_level_candidates`` pools the top candidates of every ground truth on
    each level; ``positives_per_gt`` records which gt made each index positive.
    """
    positives: Set[int] = field(default_factory=set)
    per_level_candidates: Dict[int, List[Tuple[int, float]]] = field(default_factory=dict)
    positives_per_gt: Dict[int, List[int]] = field(default_factory=dict)


@dataclass(frozen=True)
class SceneLosses:
    cls: float
    mask: float
    rank: float
    aux: float


def rerank_score(pred: Prediction, category: int) -> float:
    """Ranking score at inference: class score times predicted mask IoU."""
    return pred.score(category) * pred.pred_iou


def rank_loss(pred: Prediction, gt: GroundTruth, in_prior: bool,
              mcfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> float:
    """L1 error of the predicted IoU, counted only for candidates inside the prior."""
    if pred.mask.shape != gt.mask.shape:
        raise DimensionError(f"prediction mask {pred.mask.shape} vs gt mask {gt.mask.shape}")
    if not in_prior:
        return 0.0
    return abs(pred.pred_iou - iou(pred.mask, gt.mask, mcfg))


def focal_loss(score: float, is_positive: bool, cfg: FocalConfig = FocalConfig()) -> float:
    s = min(max(float(score), SCORE_CLAMP), 1.0 - SCORE_CLAMP)
    if is_positive:
        return -cfg.alpha_f * (1.0 - s) ** cfg.gamma * math.log(s)
    return -(1.0 - cfg.alpha_f) * s ** cfg.gamma * math.log(1.0 - s)


def mask_loss(pred_mask, gt_mask, mcfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> float:
    return 1.0 - dice(pred_mask, gt_mask, mcfg)


def aux_assign(preds: Sequence[Prediction], gts: Sequence[GroundTruth],
               cfg: OyorConfig = OyorConfig(),
               mcfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> AuxAssignment:
    """Top-9-per-level candidates for each gt; those strictly above that gt's
    pooled mean quality become positives.

    Candidates are the predictions inside the gt's center region.
    """
    out = AuxAssignment()
    for gi, gt in enumerate(gts):
        center = centroid(gt.mask)
        by_level: Dict[int, List[Tuple[int, float]]] = {}
        for pi, pred in enumerate(preds):
            _validate_pair(pred, gt)
            if not in_prior(pred, gt, cfg, mcfg, center=center):
                continue
            q = geometric_quality(pred.class_scores[gt.category],
                                  dice(pred.mask, gt.mask, mcfg), cfg.alpha)
            by_level.setdefault(pred.level.level_id, []).append((pi, q))
        pooled: List[Tuple[int, float]] = []
        for level_id in sorted(by_level):
            # stable: equal qualities keep prediction order
            top = sorted(by_level[level_id], key=lambda t: -t[1])[:AUX_TOP_K]
            pooled.extend(top)
            out.per_level_candidates.setdefault(level_id, []).extend(top)
        if not pooled:
            out.positives_per_gt[gi] = []
            continue
        mean_q = sum(q for _, q in pooled) / len(pooled)
        pos = sorted(pi for pi, q in pooled if q > mean_q)
        out.positives_per_gt[gi] = pos
        out.positives.update(pos)
    return out


def total_loss(cls: float, mask: float, rank: float, aux: float,
               w: LossWeights = LossWeights()) -> float:
    terms = (cls, mask, rank, aux)
    for t in terms:
        if not math.isfinite(t) or t < 0:
            raise InvalidLossError(f"loss terms must be finite and non-negative, got {terms}")
    return (w.lambda_cls * cls + w.lambda_mask * mask
            + w.lambda_rank * rank + w.lambda_aux * aux)


def scene_losses(preds: Sequence[Prediction], gts: Sequence[GroundTruth],
                 assignment: Assignment, cfg: OyorConfig = OyorConfig(),
                 mcfg: MaskOpsConfig = DEFAULT_MASK_CFG,
                 focal: FocalConfig = FocalConfig()) -> SceneLosses:
    """Evaluate the four loss terms for one scene given its one-to-one assignment.

    Classification and auxiliary terms sum focal loss over every
    (prediction, category) score and normalize by the number of positives;
    mask and rank terms average over matched pairs.
    """
    aux = aux_assign(preds, gts, cfg, mcfg)
    matched = assignment.pairs
    one_to_one = {p: gts[g].category for g, p, _ in matched}
    aux_targets: Dict[int, int] = {}
    for gi, pos in aux.positives_per_gt.items():
        for pi in pos:
            aux_targets.setdefault(pi, gts[gi].category)

    def focal_sum(targets: Dict[int, int]) -> float:
        total = 0.0
        for pi, pred in enumerate(preds):
            for c, s in enumerate(pred.class_scores):
                total += focal_loss(s, targets.get(pi) == c, focal)
        return total / max(len(targets), 1)

    cls = focal_sum(one_to_one)
    aux_l = focal_sum(aux_targets)
    if matched:
        mask_l = float(np.mean([mask_loss(preds[p].mask, gts[g].mask, mcfg)
                                for g, p, _ in matched]))
        rank_l = float(np.mean([rank_loss(preds[p], gts[g], True, mcfg)
                                for g, p, _ in matched]))
    else:
        mask_l = rank_l = 0.0
    return SceneLosses(cls=cls, mask=mask_l, rank=rank_l, aux=aux_l)
