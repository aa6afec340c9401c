"""Deterministic synthetic scenes and controllable prediction models.

Randomness
----------
Every random draw comes from a Philox counter-based generator keyed by
``SeedSequence(seed, spawn_key=(scene_index, stream, entity, ...))``, so each
scene, instance and prediction owns an independent stream. Generating scenes
in any order, or in parallel, gives bit-identical results.

Occlusion
---------
Instances are placed in order. With ``occlusion_level > 0`` each new instance
is placed against a randomly chosen earlier *anchor* at the distance where
the overlap of their full (amodal) shapes, ``|A & B| / min(|A|, |B|)``,
matches the target. Later instances are drawn on top; occluded pixels are
removed from earlier masks, so ground-truth masks are always disjoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .maskcore import DEFAULT_MASK_CFG, centroid, in_center_region, iou
from .oyor import DEFAULT_LEVELS, GroundTruth, LevelSpec, OyorConfig, Prediction, ScoredPrediction

SHAPE_FAMILIES = ("ellipse", "rectangle", "blob-polygon")
PREDICTOR_KINDS = ("redundant", "unique", "misaligned")

# rng stream ids
_STREAM_LAYOUT = 0
_STREAM_INSTANCE = 1
_STREAM_PREDICTION = 2

MAX_PLACEMENT_ATTEMPTS = 30
MAX_SCENE_ATTEMPTS = 8
MIN_VISIBLE_FRACTION = 0.3
MIN_VISIBLE_PIXELS = 12
_BISECT_STEPS = 14


class GenerationError(RuntimeError):
    pass


def prediction_seed(seed: int, scene_index: int) -> int:
    """64-bit seed for the predictions of one scene, derived from the run seed."""
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1),
                                spawn_key=(int(scene_index), _STREAM_PREDICTION))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one entity; ``key`` is its spawn path."""
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SceneConfig:
    image_size: Tuple[int, int] = (64, 64)
    num_instances: Tuple[int, int] = (2, 5)
    shape_family: str = "ellipse"
    occlusion_level: float = 0.0
    categories: int = 3
    seed: int = 0
    # half-extent of a shape as a fraction of the shorter image side
    instance_scale: Tuple[float, float] = (0.08, 0.16)

    def __post_init__(self):
        h, w = self.image_size
        lo, hi = self.num_instances
        if h < 8 or w < 8:
            raise ValueError("image_size must be at least 8x8")
        if not 1 <= lo <= hi:
            raise ValueError(f"num_instances must satisfy 1 <= lo <= hi, got {self.num_instances}")
        if self.shape_family not in SHAPE_FAMILIES:
            raise ValueError(f"shape_family must be one of {SHAPE_FAMILIES}")
        if not 0.0 <= self.occlusion_level <= 1.0:
            raise ValueError("occlusion_level must lie in [0, 1]")
        if self.categories < 1:
            raise ValueError("categories must be >= 1")
        s_lo, s_hi = self.instance_scale
        if not 0.0 < s_lo <= s_hi <= 0.5:
            raise ValueError("instance_scale must satisfy 0 < lo <= hi <= 0.5")

    def to_json(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "num_instances": list(self.num_instances),
            "shape_family": self.shape_family,
            "occlusion_level": self.occlusion_level,
            "categories": self.categories,
            "seed": self.seed,
            "instance_scale": list(self.instance_scale),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SceneConfig":
        kw = dict(obj)
        for key in ("image_size", "num_instances", "instance_scale"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class PredictorModel:
    kind: str = "unique"
    duplicates_per_instance: int = 1
    mask_noise: float = 0.0
    score_noise: float = 0.05
    cls_quality_correlation: float = 0.0

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ValueError(f"kind must be one of {PREDICTOR_KINDS}")
        if self.kind == "unique":
            object.__setattr__(self, "duplicates_per_instance", 1)
        if self.kind == "redundant" and self.duplicates_per_instance < 2:
            raise ValueError("redundant predictor needs duplicates_per_instance >= 2")
        if self.duplicates_per_instance < 1:
            raise ValueError("duplicates_per_instance must be >= 1")
        if self.mask_noise < 0 or self.score_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if not -1.0 <= self.cls_quality_correlation <= 1.0:
            raise ValueError("cls_quality_correlation must lie in [-1, 1]")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "duplicates_per_instance": self.duplicates_per_instance,
            "mask_noise": self.mask_noise,
            "score_noise": self.score_noise,
            "cls_quality_correlation": self.cls_quality_correlation,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PredictorModel":
        return cls(**obj)


@dataclass
class GeneratedScene:
    gts: List[GroundTruth]
    image_shape: Tuple[int, int]
    amodal: List[np.ndarray] = field(default_factory=list)
    # (instance, anchor) for every instance placed against an earlier one
    anchor_pairs: List[Tuple[int, int]] = field(default_factory=list)

    def realized_overlap(self) -> float | None:
        """Mean amodal overlap over anchor pairs, or None without pairs."""
        if not self.anchor_pairs:
            return None
        return float(np.mean([amodal_overlap(self.amodal[i], self.amodal[j])
                              for i, j in self.anchor_pairs]))


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Shape:
    family: str
    half_extents: Tuple[float, float]
    angle: float
    # blob-polygon vertices relative to the center, unrotated
    vertices: Tuple[Tuple[float, float], ...] = ()

    @property
    def reach(self) -> float:
        return float(max(self.half_extents)) * (1.42 if self.family == "rectangle" else 1.0)

    def raster(self, center: Tuple[float, float], shape: Tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        # only the window that can contain the shape is evaluated
        reach = self.reach + 1.0
        r0 = max(int(math.floor(center[0] - reach)), 0)
        r1 = min(int(math.ceil(center[0] + reach)) + 1, shape[0])
        c0 = max(int(math.floor(center[1] - reach)), 0)
        c1 = min(int(math.ceil(center[1] + reach)) + 1, shape[1])
        if r0 >= r1 or c0 >= c1:
            return out
        out[r0:r1, c0:c1] = self._inside(center, r0, r1, c0, c1)
        return out

    def _inside(self, center, r0, r1, c0, c1) -> np.ndarray:
        rows, cols = np.ogrid[r0:r1, c0:c1]
        dy = rows - center[0]
        dx = cols - center[1]
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        u = dx * ca + dy * sa
        v = -dx * sa + dy * ca
        a, b = self.half_extents
        if self.family == "ellipse":
            return (u / a) ** 2 + (v / b) ** 2 <= 1.0
        if self.family == "rectangle":
            return (np.abs(u) <= a) & (np.abs(v) <= b)
        return _point_in_polygon(u, v, self.vertices)


def _point_in_polygon(x, y, vertices) -> np.ndarray:
    # even-odd ray casting, vectorized over the pixel grid
    x, y = np.broadcast_arrays(x, y)
    inside = np.zeros(x.shape, dtype=bool)
    n = len(vertices)
    for k in range(n):
        x1, y1 = vertices[k]
        x2, y2 = vertices[(k + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > y) != (y2 > y)
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _sample_shape(cfg: SceneConfig, rng: np.random.Generator) -> _Shape:
    side = min(cfg.image_size)
    s_lo, s_hi = cfg.instance_scale
    a = rng.uniform(s_lo, s_hi) * side
    b = a * rng.uniform(0.6, 1.0)
    angle = rng.uniform(0.0, math.pi)
    if cfg.shape_family != "blob-polygon":
        return _Shape(cfg.shape_family, (a, b), angle)
    k = int(rng.integers(6, 11))
    thetas = np.sort(rng.uniform(0.0, 2 * math.pi, size=k))
    radii = a * rng.uniform(0.6, 1.0, size=k)
    verts = tuple((float(r * math.cos(t)), float(r * math.sin(t) * b / a))
                  for r, t in zip(radii, thetas))
    return _Shape("blob-polygon", (a, b), angle, verts)


def amodal_overlap(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.count_nonzero(a & b)
    denom = min(np.count_nonzero(a), np.count_nonzero(b))
    return inter / denom if denom else 0.0


def _dilate(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    out[1:, :] |= m[:-1, :]
    out[:-1, :] |= m[1:, :]
    out[:, 1:] |= m[:, :-1]
    out[:, :-1] |= m[:, 1:]
    return out


def _place_disjoint(shape: _Shape, amodal: List[np.ndarray], cfg: SceneConfig,
                    rng: np.random.Generator):
    h, w = cfg.image_size
    occupied = np.zeros((h, w), dtype=bool)
    for m in amodal:
        occupied |= m
    # one pixel of clearance so that instances never touch
    occupied = _dilate(occupied)
    r = shape.reach
    lo_r, hi_r = min(r, h / 2), max(h - 1 - r, h / 2)
    lo_c, hi_c = min(r, w / 2), max(w - 1 - r, w / 2)
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        center = (rng.uniform(lo_r, hi_r), rng.uniform(lo_c, hi_c))
        m = shape.raster(center, (h, w))
        if np.count_nonzero(m) >= MIN_VISIBLE_PIXELS and not np.any(m & occupied):
            return m, None
    return None


def _place_against_anchor(shape: _Shape, amodal: List[np.ndarray], cfg: SceneConfig,
                          rng: np.random.Generator):
    h, w = cfg.image_size
    target = cfg.occlusion_level
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        anchor = int(rng.integers(0, len(amodal)))
        ac = centroid(amodal[anchor])
        theta = rng.uniform(0.0, 2 * math.pi)
        direction = (math.sin(theta), math.cos(theta))
        d_hi = shape.reach + 0.75 * min(h, w)

        def overlap_at(d):
            c = (ac[0] + d * direction[0], ac[1] + d * direction[1])
            m = shape.raster(c, (h, w))
            return amodal_overlap(m, amodal[anchor]), m, c

        ov0, m, c = overlap_at(0.0)
        if ov0 > target:
            lo, hi = 0.0, d_hi
            for _ in range(_BISECT_STEPS):
                mid = 0.5 * (lo + hi)
                if overlap_at(mid)[0] > target:
                    lo = mid
                else:
                    hi = mid
            # pick the bracket end closest to the target
            ov_lo, m_lo, c_lo = overlap_at(lo)
            ov_hi, m_hi, c_hi = overlap_at(hi)
            m, c = (m_lo, c_lo) if abs(ov_lo - target) <= abs(ov_hi - target) else (m_hi, c_hi)
        if not (0 <= c[0] < h and 0 <= c[1] < w):
            continue
        area = np.count_nonzero(m)
        if area < MIN_VISIBLE_PIXELS:
            continue
        if _keeps_visible(amodal, m):
            return m, anchor
    return None


def _keeps_visible(amodal: Sequence[np.ndarray], new: np.ndarray) -> bool:
    """Would every earlier instance stay sufficiently visible under ``new``?"""
    for v, a in zip(_visible(list(amodal) + [new])[:-1], amodal):
        if np.count_nonzero(v) < max(MIN_VISIBLE_PIXELS,
                                     MIN_VISIBLE_FRACTION * np.count_nonzero(a)):
            return False
    return True


def _visible(amodal: Sequence[np.ndarray]) -> List[np.ndarray]:
    cover = np.zeros_like(amodal[0]) if amodal else None
    out = []
    for m in reversed(amodal):
        out.append(m & ~cover)
        cover = cover | m
    return out[::-1]


def generate_scene_detailed(cfg: SceneConfig, index: int) -> GeneratedScene:
    """Scene ``index`` of the stream defined by ``cfg``; a pure function of both."""
    lo, hi = cfg.num_instances
    layout = rng_for(cfg.seed, index, _STREAM_LAYOUT)
    n = int(layout.integers(lo, hi + 1))
    cats = layout.integers(0, cfg.categories, size=n)
    for attempt in range(MAX_SCENE_ATTEMPTS):
        amodal: List[np.ndarray] = []
        anchors: List[Tuple[int, int]] = []
        failed = False
        for k in range(n):
            rng = rng_for(cfg.seed, index, _STREAM_INSTANCE, k, attempt)
            shape = _sample_shape(cfg, rng)
            if k == 0 or cfg.occlusion_level == 0.0:
                placed = _place_disjoint(shape, amodal, cfg, rng)
            else:
                placed = _place_against_anchor(shape, amodal, cfg, rng)
            if placed is None:
                failed = True
                break
            m, anchor = placed
            amodal.append(m)
            if anchor is not None:
                anchors.append((k, anchor))
        if failed:
            continue
        visible = _visible(amodal)
        if any(np.count_nonzero(v) < max(MIN_VISIBLE_PIXELS,
                                         MIN_VISIBLE_FRACTION * np.count_nonzero(a))
               for v, a in zip(visible, amodal)):
            continue
        gts = [GroundTruth(int(c), v.astype(np.float64)) for c, v in zip(cats, visible)]
        return GeneratedScene(gts, tuple(cfg.image_size), amodal, anchors)
    raise GenerationError(
        f"could not place {n} instances in scene {index} after {MAX_SCENE_ATTEMPTS} attempts")


def generate_scene(cfg: SceneConfig, index: int) -> Tuple[List[GroundTruth], Tuple[int, int]]:
    scene = generate_scene_detailed(cfg, index)
    return scene.gts, scene.image_shape


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------

def _boundary(m: np.ndarray) -> np.ndarray:
    """Pixels on either side of the mask edge (4-connectivity)."""
    return _dilate(m) & ~_erode(m)


def _erode(m: np.ndarray) -> np.ndarray:
    return ~_dilate(~m)


def perturb_mask(gt_mask: np.ndarray, flip_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Flip a fraction of the boundary pixels and attach soft activations.

    Foreground pixels get activations in [0.75, 1.0]; background stays 0, so
    binarizing at 0.5 recovers the flipped binary mask exactly.
    """
    m = np.asarray(gt_mask) >= 0.5
    band = np.flatnonzero(_boundary(m).ravel())
    n_flip = int(round(min(flip_fraction, 1.0) * band.size))
    flat = m.ravel().copy()
    if n_flip:
        idx = rng.choice(band, size=n_flip, replace=False)
        flat[idx] = ~flat[idx]
    if not flat.any():
        # never emit an empty prediction
        flat = m.ravel().copy()
    act = rng.uniform(0.75, 1.0, size=flat.size)
    return np.where(flat, act, 0.0).reshape(m.shape)


def _mislocalize(gt_mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Translate the mask by up to half its equivalent radius in a random direction.

    Gives the misaligned model a spread of mask qualities roughly covering
    IoU 0.5 to 1.
    """
    m = gt_mask >= 0.5
    r_eq = math.sqrt(np.count_nonzero(m) / math.pi)
    d = rng.uniform(0.0, 0.5 * r_eq)
    theta = rng.uniform(0.0, 2 * math.pi)
    dr = int(round(d * math.sin(theta)))
    dc = int(round(d * math.cos(theta)))
    out = _shift(m, dr, dc)
    return out if out.any() else m


def _shift(m: np.ndarray, dr: int, dc: int) -> np.ndarray:
    h, w = m.shape
    out = np.zeros_like(m)
    src = m[max(-dr, 0):h - max(dr, 0), max(-dc, 0):w - max(dc, 0)]
    out[max(dr, 0):max(dr, 0) + src.shape[0], max(dc, 0):max(dc, 0) + src.shape[1]] = src
    return out


def _class_scores(categories: int, category: int, score: float,
                  rng: np.random.Generator) -> np.ndarray:
    scores = rng.uniform(0.0, 0.05, size=categories)
    scores[category] = score
    return scores


def _central_location(gt: GroundTruth, levels: Sequence[LevelSpec], oyor_cfg: OyorConfig):
    """Location at the gt centroid, or the foreground pixel nearest it, plus the
    smallest level whose center region contains it."""
    center = centroid(gt.mask)
    r, c = (int(math.floor(center[0] + 0.5)), int(math.floor(center[1] + 0.5)))
    h, w = gt.mask.shape
    if 0 <= r < h and 0 <= c < w and gt.mask[r, c] >= 0.5:
        loc = center
    else:
        fg = np.argwhere(gt.mask >= 0.5)
        d2 = (fg[:, 0] - center[0]) ** 2 + (fg[:, 1] - center[1]) ** 2
        rr, cc = fg[int(np.argmin(d2))]
        loc = (float(rr), float(cc))
    for level in sorted(levels, key=lambda lv: lv.level_id):
        if in_center_region(loc, gt.mask, oyor_cfg.radius(level), center=center):
            return loc, level
    return loc, max(levels, key=lambda lv: lv.level_id)


def _scattered_location(gt: GroundTruth, levels: Sequence[LevelSpec], oyor_cfg: OyorConfig,
                        rng: np.random.Generator):
    """Random foreground pixel inside the center region of a random level."""
    center = centroid(gt.mask)
    level = levels[int(rng.integers(0, len(levels)))]
    radius = oyor_cfg.radius(level)
    fg = np.argwhere(gt.mask >= 0.5)
    near = fg[(np.abs(fg[:, 0] - center[0]) <= radius) & (np.abs(fg[:, 1] - center[1]) <= radius)]
    if near.size == 0:
        return _central_location(gt, levels, oyor_cfg)
    rr, cc = near[int(rng.integers(0, len(near)))]
    return (float(rr), float(cc)), level


def misaligned_score(true_iou: float, noise: float, correlation: float) -> float:
    """Affine mix of true IoU and uniform noise in [0, 1]; strictly monotone in
    ``true_iou`` whenever ``correlation != 0``."""
    t = correlation * (true_iou - 0.5) + math.sqrt(1.0 - correlation ** 2) * (noise - 0.5)
    return 0.5 + 0.6 * t


def synthesize_predictions(gts: Sequence[GroundTruth], model: PredictorModel,
                           levels: Sequence[LevelSpec] = DEFAULT_LEVELS, seed: int = 0,
                           categories: int | None = None,
                           oyor_cfg: OyorConfig = OyorConfig()) -> List[ScoredPrediction]:
    """Emulated network outputs for one scene.

    Each prediction's mask flips a per-prediction fraction of boundary pixels
    drawn uniformly from ``[0, 2 * mask_noise]``; ``pred_iou`` is the true
    IoU of the resulting mask. The scored category is the gt category, which
    is also the argmax of ``class_scores``.
    """
    levels = list(levels) or list(DEFAULT_LEVELS)
    if categories is None:
        categories = max((g.category for g in gts), default=0) + 1
    out: List[ScoredPrediction] = []
    for gi, gt in enumerate(gts):
        base_rng = rng_for(seed, _STREAM_PREDICTION, gi)
        base_score = base_rng.uniform(0.55, 0.95)
        for k in range(model.duplicates_per_instance):
            rng = rng_for(seed, _STREAM_PREDICTION, gi, k + 1)
            flip = rng.uniform(0.0, 2.0 * model.mask_noise) if model.mask_noise > 0 else 0.0
            src = gt.mask
            if model.kind == "misaligned":
                src = _mislocalize(gt.mask, rng)
            mask = perturb_mask(src, flip, rng)
            true_iou = iou(mask, gt.mask, DEFAULT_MASK_CFG)
            if model.kind == "unique":
                loc, level = _central_location(gt, levels, oyor_cfg)
            else:
                loc, level = _scattered_location(gt, levels, oyor_cfg, rng)
            if model.kind == "misaligned":
                score = misaligned_score(true_iou, rng.uniform(), model.cls_quality_correlation)
            else:
                score = base_score + rng.normal(0.0, model.score_noise)
            score = float(np.clip(score, 0.1, 0.99))
            pred = Prediction(loc, level, _class_scores(categories, gt.category, score, rng),
                              mask, true_iou)
            out.append(ScoredPrediction(pred, gt.category, score))
    return out
