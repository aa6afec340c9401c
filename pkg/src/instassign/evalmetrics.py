"""COCO-protocol mask AP / AR over a set of scenes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .maskcore import DEFAULT_MASK_CFG, MaskOpsConfig, pairwise_iou
from .oyor import GroundTruth, InvalidCategoryError, ScoredPrediction
from .parallel import pmap

IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
MAX_DETS = 100

Scene = Tuple[Sequence[GroundTruth], Sequence[ScoredPrediction]]


@dataclass
class EvalReport:
    ap: float
    ap50: float
    ap75: float
    ar: float
    per_threshold: Dict[float, Tuple[float, float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ar": self.ar,
            "per_threshold": {f"{t:.2f}": {"ap": a, "recall": r}
                              for t, (a, r) in sorted(self.per_threshold.items())},
        }


@dataclass
class _SceneMatches:
    # per category: scores of kept detections (descending) and, per threshold,
    # a boolean true-positive flag for each of them
    scores: Dict[int, np.ndarray]
    tp: Dict[int, np.ndarray]          # shape (len(thresholds), n_dets)
    num_gts: Dict[int, int]


def _check_categories(scene: Scene, num_categories: int | None) -> None:
    gts, dets = scene
    cats = [g.category for g in gts] + [d.category for d in dets]
    for c in cats:
        if c < 0 or (num_categories is not None and c >= num_categories):
            raise InvalidCategoryError(f"unknown category id {c}")


def _top_detections(dets: Sequence[ScoredPrediction], max_dets: int) -> List[int]:
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    return order[:max_dets]


def _match_scene(scene: Scene, max_dets: int, mcfg: MaskOpsConfig) -> _SceneMatches:
    gts, dets = scene
    kept = _top_detections(dets, max_dets)
    cats = sorted({g.category for g in gts} | {dets[i].category for i in kept})
    out = _SceneMatches({}, {}, {})
    for c in cats:
        gidx = [i for i, g in enumerate(gts) if g.category == c]
        didx = [i for i in kept if dets[i].category == c]
        out.num_gts[c] = len(gidx)
        ious = pairwise_iou([dets[i].pred.mask for i in didx], [gts[i].mask for i in gidx], mcfg)
        tp = np.zeros((len(IOU_THRESHOLDS), len(didx)), dtype=bool)
        for ti, t in enumerate(IOU_THRESHOLDS):
            taken = np.zeros(len(gidx), dtype=bool)
            for d in range(len(didx)):
                best, best_iou = -1, t
                for g in range(len(gidx)):
                    if taken[g] or ious[d, g] < best_iou:
                        continue
                    if best < 0 or ious[d, g] > best_iou:
                        best, best_iou = g, ious[d, g]
                if best >= 0:
                    taken[best] = True
                    tp[ti, d] = True
        out.scores[c] = np.array([dets[i].score for i in didx], dtype=np.float64)
        out.tp[c] = tp
    return out


def _interpolated_ap(tp: np.ndarray, npos: int) -> Tuple[float, float]:
    """101-point AP and final recall for detections already sorted by score."""
    if npos == 0:
        return 0.0, 0.0
    if tp.size == 0:
        return 0.0, 0.0
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    recall = tps / npos
    precision = tps / (tps + fps)
    # ceiling interpolation: precision at recall r is the best precision at any recall >= r
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    inds = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.zeros(len(RECALL_POINTS))
    valid = inds < len(precision)
    sampled[valid] = precision[inds[valid]]
    return float(sampled.mean()), float(recall[-1])


def evaluate(scenes: Sequence[Scene], max_dets: int = MAX_DETS,
             num_categories: int | None = None,
             mcfg: MaskOpsConfig = DEFAULT_MASK_CFG,
             workers: int | None = None) -> EvalReport:
    """Mask AP/AR at IoU thresholds 0.50:0.05:0.95.

    Detections are matched greedily in descending score order within each
    scene; each gt can absorb one detection, taking the unmatched gt with the
    highest IoU (first one on ties). Categories without ground truth do not
    contribute.
    """
    for scene in scenes:
        _check_categories(scene, num_categories)
    per_scene = pmap(lambda s: _match_scene(s, max_dets, mcfg), scenes, workers)

    npos: Dict[int, int] = {}
    for sm in per_scene:
        for c, n in sm.num_gts.items():
            npos[c] = npos.get(c, 0) + n
    eval_cats = sorted(c for c, n in npos.items() if n > 0)

    per_threshold: Dict[float, Tuple[float, float]] = {}
    for ti, t in enumerate(IOU_THRESHOLDS):
        aps, recs = [], []
        for c in eval_cats:
            chunks = [(sm.scores[c], sm.tp[c][ti]) for sm in per_scene if c in sm.scores]
            if chunks:
                scores = np.concatenate([s for s, _ in chunks])
                flags = np.concatenate([f for _, f in chunks])
            else:
                scores = np.zeros(0)
                flags = np.zeros(0, dtype=bool)
            # stable sort keeps scene order, then in-scene order, among equal scores
            order = np.argsort(-scores, kind="mergesort")
            ap, rec = _interpolated_ap(flags[order], npos[c])
            aps.append(ap)
            recs.append(rec)
        per_threshold[t] = (float(np.mean(aps)) if aps else 0.0,
                            float(np.mean(recs)) if recs else 0.0)

    ap_vals = [per_threshold[t][0] for t in IOU_THRESHOLDS]
    rec_vals = [per_threshold[t][1] for t in IOU_THRESHOLDS]
    return EvalReport(
        ap=float(np.mean(ap_vals)),
        ap50=per_threshold[0.5][0],
        ap75=per_threshold[0.75][0],
        ar=float(np.mean(rec_vals)),
        per_threshold=per_threshold,
    )


def duplicate_rate(scenes: Sequence[Scene], threshold: float = 0.5,
                   mcfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> float:
    """Mean over gts of (same-category predictions with IoU >= threshold) - 1, floored at 0."""
    extras = []
    for gts, dets in scenes:
        for c in sorted({g.category for g in gts}):
            gidx = [i for i, g in enumerate(gts) if g.category == c]
            didx = [i for i, d in enumerate(dets) if d.category == c]
            ious = pairwise_iou([gts[i].mask for i in gidx], [dets[i].pred.mask for i in didx],
                                mcfg)
            hits = (ious >= threshold).sum(axis=1) if didx else np.zeros(len(gidx))
            extras.extend(max(int(h) - 1, 0) for h in hits)
    return float(np.mean(extras)) if extras else 0.0
