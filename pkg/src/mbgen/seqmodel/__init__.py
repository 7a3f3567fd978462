"""Encoder-decoder sequence model, its routing rules and the training loop."""

from .config import ModelConfig, TrainConfig, desk_preset, full_preset
from .model import Encoded, LengthError, Seq2SeqModel, count_params_flops
from .routing import behavior_context, position_route

__all__ = [
    "ModelConfig", "TrainConfig", "desk_preset", "full_preset", "Encoded", "LengthError",
    "Seq2SeqModel", "count_params_flops", "behavior_context", "position_route",
]
from .train import DivergenceError, Examples, TrainResult, build_examples, pad_sequences, train  # noqa: E402

__all__ += ["DivergenceError", "Examples", "TrainResult", "build_examples", "pad_sequences", "train"]
