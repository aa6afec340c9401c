"""Small builders shared by the test modules."""
import numpy as np

from instassign.oyor import GroundTruth, LevelSpec, Prediction


def square(shape, top, left, size):
    m = np.zeros(shape)
    m[top:top + size, left:left + size] = 1.0
    return m


def center_of(mask):
    rows, cols = np.nonzero(mask)
    return float(rows.mean()), float(cols.mean())


def pred(mask, scores, loc=None, level=3, pred_iou=1.0):
    if loc is None:
        loc = center_of(mask)
    return Prediction(location=loc, level=LevelSpec(level),
                      class_scores=np.asarray(scores, dtype=float), mask=mask,
                      pred_iou=pred_iou)


def gt(mask, category=0):
    return GroundTruth(category=category, mask=mask)
