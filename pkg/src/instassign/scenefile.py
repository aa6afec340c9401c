"""JSON scene files: ground truths and raw predictions with RLE masks."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .maskcore import MaskError, RleMask, decode_rle, encode_rle
from .oyor import GroundTruth, LevelSpec, Prediction

SCENE_GLOB = "scene_*.json"


class SceneFormatError(ValueError):
    """A scene file is malformed; the message names the file and the field."""


def scene_to_json(gts: Sequence[GroundTruth], preds: Sequence[Prediction],
                  image_shape: Tuple[int, int]) -> dict:
    h, w = image_shape
    return {
        "image": {"h": int(h), "w": int(w)},
        "ground_truths": [
            {"category": g.category, "mask": encode_rle(g.mask).to_json()} for g in gts
        ],
        "predictions": [
            {
                "location": {"row": p.location[0], "col": p.location[1]},
                "level": p.level.level_id,
                "class_scores": [float(s) for s in p.class_scores],
                "mask": encode_rle(p.mask).to_json(),
                "pred_iou": p.pred_iou,
            }
            for p in preds
        ],
    }


def dump_scene(path: Path, gts, preds, image_shape) -> None:
    text = json.dumps(scene_to_json(gts, preds, image_shape), sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _field(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise SceneFormatError(f"{where}: missing field '{key}'")
    return obj[key]


def _mask(obj, shape, where) -> np.ndarray:
    try:
        rle = RleMask.from_json(obj)
    except MaskError as exc:
        raise SceneFormatError(f"{where}: {exc}") from None
    if (rle.height, rle.width) != shape:
        raise SceneFormatError(f"{where}: RLE size {[rle.height, rle.width]} "
                               f"does not match image {list(shape)}")
    return decode_rle(rle)


def scene_from_json(obj, source: str = "<scene>"):
    """Parse a scene dict into ``(gts, preds, image_shape)``."""
    image = _field(obj, "image", source)
    try:
        shape = (int(_field(image, "h", f"{source}: image")),
                 int(_field(image, "w", f"{source}: image")))
    except (TypeError, ValueError):
        raise SceneFormatError(f"{source}: field 'image' must hold integer h and w") from None
    gts: List[GroundTruth] = []
    for i, g in enumerate(_field(obj, "ground_truths", source)):
        where = f"{source}: ground_truths[{i}]"
        m = _mask(_field(g, "mask", where), shape, f"{where}.mask")
        try:
            gts.append(GroundTruth(int(_field(g, "category", where)), m))
        except (ValueError, TypeError) as exc:
            raise SceneFormatError(f"{where}: {exc}") from None
    preds: List[Prediction] = []
    for i, p in enumerate(_field(obj, "predictions", source)):
        where = f"{source}: predictions[{i}]"
        loc = _field(p, "location", where)
        m = _mask(_field(p, "mask", where), shape, f"{where}.mask")
        try:
            level = LevelSpec(int(_field(p, "level", where)))
        except (ValueError, TypeError) as exc:
            raise SceneFormatError(f"{where}.level: {exc}") from None
        try:
            preds.append(Prediction(
                (float(_field(loc, "row", f"{where}.location")),
                 float(_field(loc, "col", f"{where}.location"))),
                level,
                np.asarray(_field(p, "class_scores", where), dtype=np.float64),
                m,
                float(_field(p, "pred_iou", where)),
            ))
        except SceneFormatError:
            raise
        except (ValueError, TypeError) as exc:
            raise SceneFormatError(f"{where}: {exc}") from None
    return gts, preds, shape


def load_scene(path: Path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: invalid JSON ({exc})") from None
    return scene_from_json(obj, str(path))


def scene_paths(directory: Path) -> List[Path]:
    return sorted(Path(directory).glob(SCENE_GLOB))
