"""From-scratch dense/convolutional network engine."""

from .kernels import BACKEND
from .layers import BatchNorm, Conv, Dense, Flatten, MaxPool, ReLU, Softmax, check_stack
from .model import Model, backward, build_model, forward_logits, predict, predict_proba
from .ops import (batchnorm_forward, conv_forward, dense_forward, maxpool_forward, sgd_step,
                  softmax, softmax_cross_entropy)
from .serialize import load_model, save_model
from .train import TrainConfig, train

__all__ = [
    "BACKEND", "BatchNorm", "Conv", "Dense", "Flatten", "MaxPool", "ReLU", "Softmax", "Model",
    "TrainConfig", "backward", "batchnorm_forward", "build_model", "check_stack", "conv_forward",
    "dense_forward", "forward_logits", "load_model", "maxpool_forward", "predict", "predict_proba",
    "save_model", "sgd_step", "softmax", "softmax_cross_entropy", "train",
]
