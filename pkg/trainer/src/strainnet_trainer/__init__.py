"""Flow-network training on rendered speckle datasets.

Defines the encoder-decoder variants, the multi-scale endpoint-error
loss, a manifest-driven data pipeline, and train/infer entry points that
exchange flow files with the measurement toolbox.
"""

from .config import (
    DECODER_STEPS,
    NEW_LEVEL_WEIGHT,
    LossSpec,
    NetworkSpec,
    TrainingSchedule,
    Variant,
)
from .data import NORMALIZATION, ManifestDataset, normalize_frame
from .flow_io import FlowFormatError, read_flow, write_flow
from .inference import infer
from .loss import endpoint_error, multiscale_loss, pool_ground_truth
from .model import FlowNet, build_model
from .training import TrainResult, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "DECODER_STEPS",
    "NEW_LEVEL_WEIGHT",
    "NORMALIZATION",
    "FlowFormatError",
    "FlowNet",
    "LossSpec",
    "ManifestDataset",
    "NetworkSpec",
    "TrainResult",
    "TrainingSchedule",
    "Variant",
    "build_model",
    "endpoint_error",
    "infer",
    "load_checkpoint",
    "multiscale_loss",
    "normalize_frame",
    "pool_ground_truth",
    "read_flow",
    "save_checkpoint",
    "train",
    "write_flow",
]
