"""Encoder-decoder trajectory predictor trained with hand-written backpropagation through time."""
from .checkpoint import load as load_checkpoint, save as save_checkpoint
from .model import (ModelSpec, beam_decode, decode_step, encode, greedy_decode, init_params, loss_and_grads,
                    param_shapes, sequence_log_prob)
from .training import (AdamState, PredictionResult, TrainConfig, TrainResult, adam_step, forward,
                       forward_regression, nll_loss, predict, predict_batch, sample_inputs, train)

__all__ = [
    "ModelSpec", "init_params", "param_shapes", "encode", "decode_step", "greedy_decode", "beam_decode",
    "sequence_log_prob", "loss_and_grads", "AdamState", "adam_step", "TrainConfig", "TrainResult", "train",
    "PredictionResult", "predict", "predict_batch", "forward", "forward_regression", "nll_loss", "sample_inputs",
    "save_checkpoint", "load_checkpoint",
]
