"""U-Net segmentation in plain numpy: layers, training, MC-dropout inference."""

from .augment import AugmentConfig, Augmenter
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .inference import predict_eval, predict_mc, predict_mc_batch
from .losses import bce_loss, binary_entropy, sigmoid
from .training import TrainConfig, TrainHistory, TrainingDivergedError, train
from .unet import ShapeError, UNetConfig, UNetParams, backward, build_unet, forward

__all__ = [
    "AugmentConfig", "Augmenter", "CheckpointError", "load_checkpoint", "save_checkpoint", "predict_eval",
    "predict_mc", "predict_mc_batch", "bce_loss", "binary_entropy", "sigmoid", "TrainConfig", "TrainHistory",
    "TrainingDivergedError", "train", "ShapeError", "UNetConfig", "UNetParams", "backward", "build_unet",
    "forward",
]
