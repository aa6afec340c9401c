"""One-to-one instance assignment, mask-quality re-ranking and evaluation."""

__version__ = "0.1.0"

from .maskcore import (  # noqa: E402
    MaskOpsConfig,
    RleMask,
    centroid,
    decode_rle,
    dice,
    encode_rle,
    in_center_region,
    iou,
)
from .matcher import Assignment, solve, solve_bruteforce  # noqa: E402
from .oyor import (  # noqa: E402
    GroundTruth,
    LevelSpec,
    OyorConfig,
    Prediction,
    ScoredPrediction,
    assign,
    build_quality_matrix,
    match_quality,
)
from .evalmetrics import EvalReport, duplicate_rate, evaluate  # noqa: E402
from .suppress import NmsConfig, greedy_mask_nms  # noqa: E402
