"""Counting metrics: within-one accuracy and normalized mean absolute error.

``obo`` is the fraction of videos whose predicted count lands within one of
the ground truth (higher is better); ``mae`` averages
|truth - prediction| / truth over videos (lower is better).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import GroundTruthCount
from .errors import DataError, ValidationError


@dataclass
class VideoEval:
    video_id: str
    action_class: str
    ground_truth: int
    prediction: int
    absolute_error: int
    normalized_error: float


@dataclass
class EvalResult:
    mae: float
    obo: float
    per_video: list


def obo(ground_truth, predictions) -> float:
    gt = np.asarray(ground_truth, dtype=np.float64)
    pred = np.asarray(predictions, dtype=np.float64)
    if gt.shape != pred.shape or gt.ndim != 1 or gt.size == 0:
        raise ValidationError(f"obo: need equal non-empty count vectors, got {gt.shape} vs {pred.shape}")
    return float(np.mean(np.abs(gt - pred) <= 1.0))


def mae(ground_truth, predictions) -> float:
    gt = np.asarray(ground_truth, dtype=np.float64)
    pred = np.asarray(predictions, dtype=np.float64)
    if gt.shape != pred.shape or gt.ndim != 1 or gt.size == 0:
        raise ValidationError(f"mae: need equal non-empty count vectors, got {gt.shape} vs {pred.shape}")
    if np.any(gt == 0):
        raise ValidationError("mae: ground-truth count of 0 (every video must contain an event)")
    return float(np.mean(np.abs(gt - pred) / gt))


def evaluate(ground_truth: list[GroundTruthCount], predictions) -> EvalResult:
    """Join predictions onto ground truth by (video_id, action_class) and
    aggregate both metrics. Every ground-truth video must be predicted."""
    predicted = {(p.video_id, p.action_class): p.count for p in predictions}
    if not ground_truth:
        raise DataError("evaluate: empty ground truth")
    per_video = []
    for gt in sorted(ground_truth, key=lambda g: (g.video_id, g.action_class)):
        key = (gt.video_id, gt.action_class)
        if key not in predicted:
            raise DataError(f"no prediction for video {gt.video_id!r} class {gt.action_class!r}")
        pred = predicted[key]
        per_video.append(
            VideoEval(
                video_id=gt.video_id,
                action_class=gt.action_class,
                ground_truth=gt.count,
                prediction=pred,
                absolute_error=abs(gt.count - pred),
                normalized_error=abs(gt.count - pred) / gt.count if gt.count else float("nan"),
            )
        )
    gt_counts = [v.ground_truth for v in per_video]
    pred_counts = [v.prediction for v in per_video]
    return EvalResult(
        mae=mae(gt_counts, pred_counts),
        obo=obo(gt_counts, pred_counts),
        per_video=per_video,
    )


def summary_json(result: EvalResult) -> str:
    return json.dumps({"mae": result.mae, "obo": result.obo, "n": len(result.per_video)})


def per_video_csv(result: EvalResult) -> str:
    lines = ["video_id,action_class,ground_truth,prediction,absolute_error,normalized_error"]
    for v in result.per_video:
        lines.append(
            f"{v.video_id},{v.action_class},{v.ground_truth},{v.prediction},"
            f"{v.absolute_error},{repr(v.normalized_error)}"
        )
    return "\n".join(lines) + "\n"
