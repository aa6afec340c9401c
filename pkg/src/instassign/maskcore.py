"""Mask representation and mask-level arithmetic.

Soft masks are plain 2-D ``float64`` numpy arrays with values in [0, 1].
Binary ground-truth masks use the same representation with values in {0, 1}.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


class MaskError(ValueError):
    """Base class for mask validation failures."""


class DimensionError(MaskError):
    pass


class EmptyMaskError(MaskError):
    pass


class MalformedRleError(MaskError):
    pass


@dataclass(frozen=True)
class MaskOpsConfig:
    dice_epsilon: float = 1e-5
    binarize_threshold: float = 0.5

    def __post_init__(self):
        if not self.dice_epsilon > 0:
            raise ValueError(f"dice_epsilon must be > 0, got {self.dice_epsilon}")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError(
                f"binarize_threshold must lie in (0, 1), got {self.binarize_threshold}")


DEFAULT_MASK_CFG = MaskOpsConfig()


def as_soft_mask(values) -> np.ndarray:
    """Validate ``values`` as a soft mask and return it as a float64 array."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"mask must be a non-empty 2-D grid, got shape {m.shape}")
    if not np.all(np.isfinite(m)) or m.min() < 0.0 or m.max() > 1.0:
        raise MaskError("mask values must be finite and within [0, 1]")
    return m


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")


def binarize(m: np.ndarray, cfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> np.ndarray:
    return np.asarray(m) >= cfg.binarize_threshold


def dice(a: np.ndarray, b: np.ndarray, cfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> float:
    """Soft Dice coefficient ``2 sum(a*b) / (sum(a^2) + sum(b^2) + eps)``.

    Computed on raw activations, so it is always strictly below 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    inter = float(np.sum(a * b))
    mag = float(np.sum(a * a)) + float(np.sum(b * b))
    return 2.0 * inter / (mag + cfg.dice_epsilon)


def iou(a: np.ndarray, b: np.ndarray, cfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> float:
    """Set IoU of the two masks after binarization; 0.0 when both are empty."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_shape(a, b)
    ba = binarize(a, cfg)
    bb = binarize(b, cfg)
    union = int(np.count_nonzero(ba | bb))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(ba & bb)) / union


def pairwise_iou(masks_a: Sequence[np.ndarray], masks_b: Sequence[np.ndarray],
                 cfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> np.ndarray:
    """IoU matrix between two lists of same-shape masks (binarized).

    Agrees exactly with :func:`iou` applied cell by cell: the counts are
    integers, so the final division is the only rounding step.
    """
    if len(masks_a) == 0 or len(masks_b) == 0:
        return np.zeros((len(masks_a), len(masks_b)))
    shape = np.shape(masks_a[0])
    for m in list(masks_a) + list(masks_b):
        if np.shape(m) != shape:
            raise DimensionError(f"mask shapes differ: {shape} vs {np.shape(m)}")
    fa = np.stack([binarize(m, cfg).ravel() for m in masks_a]).astype(np.int64)
    fb = np.stack([binarize(m, cfg).ravel() for m in masks_b]).astype(np.int64)
    inter = fa @ fb.T
    area_a = fa.sum(axis=1)
    area_b = fb.sum(axis=1)
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros(inter.shape, dtype=np.float64)
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def centroid(m: np.ndarray) -> Tuple[float, float]:
    """Activation-weighted mean (row, col); pixel centers sit on integer coordinates."""
    m = np.asarray(m, dtype=np.float64)
    total = float(m.sum())
    if total <= 0.0:
        raise EmptyMaskError("centroid of an all-zero mask is undefined")
    rows = np.arange(m.shape[0], dtype=np.float64)
    cols = np.arange(m.shape[1], dtype=np.float64)
    r = float(m.sum(axis=1) @ rows) / total
    c = float(m.sum(axis=0) @ cols) / total
    return r, c


def nearest_pixel(loc: Tuple[float, float]) -> Tuple[int, int]:
    # round-half-up; Python's round() is banker's rounding
    return int(np.floor(loc[0] + 0.5)), int(np.floor(loc[1] + 0.5))


def in_center_region(loc: Tuple[float, float], m: np.ndarray, radius: float,
                     cfg: MaskOpsConfig = DEFAULT_MASK_CFG,
                     center: Tuple[float, float] | None = None) -> bool:
    """True iff ``loc`` is within ``radius`` of the mask centroid along both axes
    and its nearest pixel is foreground.

    ``center`` may carry a precomputed centroid of ``m``.
    """
    m = np.asarray(m)
    if center is None:
        center = centroid(m)
    elif not np.any(m > 0):
        raise EmptyMaskError("center region of an all-zero mask is undefined")
    if abs(loc[0] - center[0]) > radius or abs(loc[1] - center[1]) > radius:
        return False
    r, c = nearest_pixel(loc)
    if not (0 <= r < m.shape[0] and 0 <= c < m.shape[1]):
        return False
    return bool(m[r, c] >= cfg.binarize_threshold)


@dataclass(frozen=True)
class RleMask:
    """Uncompressed column-major run-length encoding, zeros first."""

    height: int
    width: int
    counts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.height < 1 or self.width < 1:
            raise MalformedRleError(f"bad RLE size {(self.height, self.width)}")
        if any(c < 0 for c in self.counts):
            raise MalformedRleError("RLE counts must be non-negative")
        if sum(self.counts) != self.height * self.width:
            raise MalformedRleError(
                f"RLE counts sum to {sum(self.counts)}, expected {self.height * self.width}")
        if any(c == 0 for c in self.counts[1:]):
            raise MalformedRleError("RLE has an interior zero-length run")

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = obj["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRleError(f"RLE object must have 'size' and 'counts': {exc}") from None
        if not all(isinstance(c, int) and not isinstance(c, bool) for c in counts):
            raise MalformedRleError("RLE counts must be integers")
        return cls(int(h), int(w), tuple(counts))


def encode_rle(m: np.ndarray, cfg: MaskOpsConfig = DEFAULT_MASK_CFG) -> RleMask:
    m = np.asarray(m)
    if m.ndim != 2 or 0 in m.shape:
        raise DimensionError(f"mask must be a non-empty 2-D grid, got shape {m.shape}")
    flat = binarize(m, cfg).ravel(order="F").astype(np.int8)
    # run boundaries in the column-major scan
    change = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0] == 1:
        runs.insert(0, 0)
    return RleMask(m.shape[0], m.shape[1], tuple(runs))


def decode_rle(r: RleMask) -> np.ndarray:
    vals = np.zeros(len(r.counts), dtype=np.float64)
    vals[1::2] = 1.0
    flat = np.repeat(vals, r.counts)
    if flat.size != r.height * r.width:
        raise MalformedRleError("RLE counts do not cover the mask")
    return flat.reshape((r.height, r.width), order="F")
