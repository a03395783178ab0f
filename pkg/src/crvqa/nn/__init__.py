"""A small numpy network engine and the generator / pooling models."""

from .gradcheck import GradCheckReport, gradient_check
from .layers import (BatchNorm2d, Conv2d, GlobalAvgPool, Linear, Module, Parameter, ReLU,
                     ResidualBlock, Sequential, Sigmoid)
from .losses import DEFAULT_ALPHA, loss_generator, loss_l1, loss_mse, loss_ssim
from .models import (DESK_GENERATOR, PAPER_GENERATOR, POOLING_DILATIONS, Generator, PoolingNet,
                     build_generator, build_pooling_net, receptive_field)
from .optim import Adam, TrainConfig
from .train import (TrainResult, downsample, frame_maps, load_weights, predict_frame_scores,
                    predict_score, save_weights, train_generator, train_pooling)

__all__ = [
    "Adam", "BatchNorm2d", "Conv2d", "DEFAULT_ALPHA", "DESK_GENERATOR", "Generator",
    "GlobalAvgPool", "GradCheckReport", "Linear", "Module", "PAPER_GENERATOR", "POOLING_DILATIONS",
    "Parameter", "PoolingNet", "ReLU", "ResidualBlock", "Sequential", "Sigmoid", "TrainConfig",
    "TrainResult", "build_generator", "build_pooling_net", "downsample", "frame_maps",
    "gradient_check", "load_weights", "loss_generator", "loss_l1", "loss_mse", "loss_ssim",
    "predict_frame_scores", "predict_score", "receptive_field", "save_weights", "train_generator",
    "train_pooling",
]
