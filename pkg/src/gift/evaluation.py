"""Occurrence scoring: TP/FP/FN matching, precision/recall/F1 and timing MAE."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .annotation import ClipAnnotation
from .errors import ConfigError, EmptyInput, KeyMismatch
from .model import GiftModel, OccurrencePrediction

Predictor = Callable[[ClipAnnotation], OccurrencePrediction]


@dataclass(frozen=True)
class MatchConfig:
    # tolerance in frames; 0 means the forecast must hit the exact frame
    delta: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ConfigError("delta must be non-negative")


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class EvalReport:
    recall: float
    precision: float
    f1: float
    mae: float
    tp: int
    fp: int
    fn: int
    n_clips: int
    coverage: float
    delta: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        head = "recall,precision,f1,mae,coverage,n_clips,delta"
        row = ",".join(repr(v) for v in (self.recall, self.precision, self.f1, self.mae, self.coverage))
        return f"{head}\n{row},{self.n_clips},{self.delta}\n"


def _aligned(preds: Mapping[str, OccurrencePrediction], gts: Mapping[str, int]) -> list:
    if set(preds) != set(gts):
        missing = sorted(set(gts) ^ set(preds))[:5]
        raise KeyMismatch(f"prediction and ground-truth clip sets differ, e.g. {missing}")
    return sorted(preds)


def match_occurrences(preds: Mapping[str, OccurrencePrediction], gts: Mapping[str, int],
                      cfg: MatchConfig = MatchConfig()) -> MatchCounts:
    """Count outcomes per clip.

    A crossed forecast within ``delta`` frames is a TP; a crossed forecast
    outside it is both an FP and an FN; a forecast that never crossed is an FN.
    """
    tp = fp = fn = 0
    for key in _aligned(preds, gts):
        p = preds[key]
        if not p.crossed_threshold:
            fn += 1
        elif abs(p.point_estimate - gts[key]) <= cfg.delta:
            tp += 1
        else:
            fp += 1
            fn += 1
    return MatchCounts(tp, fp, fn)


def prf1(counts: MatchCounts) -> tuple[float, float, float]:
    """(precision, recall, f1) with zero guards on empty denominators."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_score(precision, recall)


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 2.0 * precision * recall / s if s > 0 else 0.0


def mae(preds: Mapping[str, OccurrencePrediction], gts: Mapping[str, int]) -> float:
    keys = _aligned(preds, gts)
    if not keys:
        raise EmptyInput("no clips to score")
    return float(np.mean([abs(preds[k].point_estimate - gts[k]) for k in keys]))


def evaluate(model: GiftModel | Predictor, test_clips: Sequence[ClipAnnotation], tau: int | None = None,
             match: MatchConfig = MatchConfig(), threshold: float | None = None) -> EvalReport:
    """Forecast every test clip and score it.

    ``model`` is either a trained :class:`GiftModel` or any callable mapping
    a clip to an :class:`OccurrencePrediction`.
    """
    test_clips = list(test_clips)
    if not test_clips:
        raise EmptyInput("test set is empty")
    predictor = model.predictor(tau, threshold) if isinstance(model, GiftModel) else model
    preds = {c.clip_id: predictor(c) for c in test_clips}
    gts = {c.clip_id: c.occurrence_frame for c in test_clips}
    counts = match_occurrences(preds, gts, match)
    precision, recall, f1 = prf1(counts)
    return EvalReport(
        recall=recall,
        precision=precision,
        f1=f1,
        mae=mae(preds, gts),
        tp=counts.tp,
        fp=counts.fp,
        fn=counts.fn,
        n_clips=len(test_clips),
        coverage=float(np.mean([p.crossed_threshold for p in preds.values()])),
        delta=match.delta,
    )


def predictions_table(predictor: Predictor, clips: Sequence[ClipAnnotation]) -> list[dict]:
    """Per-clip rows (clip_id, predicted, truth, abs_error, crossed) for plotting."""
    rows = []
    for c in clips:
        p = predictor(c)
        rows.append({
            "clip_id": c.clip_id,
            "predicted": p.point_estimate,
            "truth": c.occurrence_frame,
            "abs_error": abs(p.point_estimate - c.occurrence_frame),
            "crossed": p.crossed_threshold,
        })
    return rows


def baseline_mean_predictor(train_clips: Sequence[ClipAnnotation]) -> Predictor:
    """Predict the rounded mean training occurrence frame for every clip, always crossed."""
    train_clips = list(train_clips)
    if not train_clips:
        raise EmptyInput("baseline needs training clips")
    frame = int(np.floor(np.mean([c.occurrence_frame for c in train_clips]) + 0.5))
    return lambda clip: OccurrencePrediction(frame, True, 1.0, clip.clip_id)


def oracle_predictor(clip: ClipAnnotation) -> OccurrencePrediction:
    """Reads the ground truth; the perfect-score reference."""
    return OccurrencePrediction(clip.occurrence_frame, True, 1.0, clip.clip_id)
