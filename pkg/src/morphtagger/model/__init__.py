"""Trainable multi-task tagger."""

from .io import load_model, save_model
from .tagger import LossParts, ModelConfig, TaggerModel, encode, forward_heads
from .training import EpochLog, Prediction, TrainResult, predict, predict_distributions, train
from .vocab import Index, Vocabulary, build_vocabulary

__all__ = [
    "EpochLog", "Index", "LossParts", "ModelConfig", "Prediction", "TaggerModel", "TrainResult",
    "Vocabulary", "build_vocabulary", "encode", "forward_heads", "load_model", "predict",
    "predict_distributions", "save_model", "train",
]
