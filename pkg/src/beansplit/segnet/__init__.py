"""Pyramid segmentation network: layers, model, optimizer, weight files, training."""

from .layers import conv3x3, conv3x3_backward, maxpool2, maxpool2_backward, upsample_nn2, upsample_nn2_backward
from .network import (
    ModelKind,
    NetworkConfig,
    NetworkWeights,
    masked_cross_entropy,
    pyramid_forward,
    receptive_field,
)
from .optim import OptimizerState, adadelta_step
from .serialize import deserialize_weights, load_weights, save_weights, serialize_weights, weights_id
from .train import TrainConfig, TrainingHistory, class_probability, train_model, train_on_pairs

__all__ = [
    "conv3x3", "conv3x3_backward", "maxpool2", "maxpool2_backward", "upsample_nn2",
    "upsample_nn2_backward", "ModelKind", "NetworkConfig", "NetworkWeights",
    "masked_cross_entropy", "pyramid_forward", "receptive_field", "OptimizerState",
    "adadelta_step", "deserialize_weights", "load_weights", "save_weights", "serialize_weights",
    "weights_id", "TrainConfig", "TrainingHistory", "class_probability", "train_model",
    "train_on_pairs",
]
