"""Greedy mask-IoU non-maximum suppression (the post-processing baseline)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

from .maskcore import DEFAULT_MASK_CFG, MaskOpsConfig, pairwise_iou
from .oyor import ScoredPrediction


@dataclass(frozen=True)
class NmsConfig:
    iou_threshold: float = 0.5
    score_floor: float = 0.05
    max_keep: int = 100

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError("iou_threshold must lie in (0, 1)")
        if not 0.0 <= self.score_floor <= 1.0:
            raise ValueError("score_floor must lie in [0, 1]")
        if self.max_keep < 1:
            raise ValueError("max_keep must be positive")


def greedy_mask_nms(scored: Sequence[ScoredPrediction], cfg: NmsConfig = NmsConfig(),
                    mcfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> List[int]:
    """Indices of kept predictions, ordered by descending score (ties by input index).

    Suppression only happens within a category; a prediction survives iff its
    IoU with every kept, higher-ranked prediction is below the threshold.
    """
    order = sorted(range(len(scored)), key=lambda i: (-scored[i].score, i))
    order = [i for i in order if scored[i].score >= cfg.score_floor]
    kept: List[int] = []
    by_cat = {}
    for i in order:
        by_cat.setdefault(scored[i].category, []).append(i)
    for cat, idx in by_cat.items():
        ious = pairwise_iou([scored[i].pred.mask for i in idx],
                            [scored[i].pred.mask for i in idx], mcfg)
        keep_local: List[int] = []
        for a in range(len(idx)):
            if all(ious[a, b] < cfg.iou_threshold for b in keep_local):
                keep_local.append(a)
        kept.extend(idx[a] for a in keep_local)
    kept.sort(key=lambda i: (-scored[i].score, i))
    return kept[:cfg.max_keep]


def apply_nms(scored: Sequence[ScoredPrediction], cfg: NmsConfig = NmsConfig(),
              mcfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> List[ScoredPrediction]:
    return [scored[i] for i in greedy_mask_nms(scored, cfg, mcfg)]
