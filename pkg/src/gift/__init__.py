"""Group intention forecasting on multi-player annotation clips."""

__version__ = "0.1.0"

from .annotation import ClipAnnotation, derive_velocities, parse_clip, serialize_clip, validate_clip
from .evaluation import EvalReport, MatchConfig, evaluate
from .model import GiftModel, TrainConfig, forecast_occurrence, model_init, train
from .synth import SynthConfig, generate_clip, generate_dataset

__all__ = [
    "ClipAnnotation", "EvalReport", "GiftModel", "MatchConfig", "SynthConfig", "TrainConfig",
    "derive_velocities", "evaluate", "forecast_occurrence", "generate_clip", "generate_dataset",
    "model_init", "parse_clip", "serialize_clip", "train", "validate_clip",
]
