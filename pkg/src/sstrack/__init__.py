"""Self-supervised visual tracker: forward/backward cycle training on
unlabeled video, an instance contrastive loss, and a synthetic benchmark.

The usual entry points:

>>> from sstrack import make_dataset, ci_config, train
>>> from sstrack import TrackerModel, track_sequence, evaluate_dataset
"""

from .boxes import BBox, CropWindow, giou, iou, make_crop_window
from .evaluate import (TrackerSettings, evaluate_dataset, static_baseline,
                       track_sequence)
from .losses import LossConfig
from .model import BoxOracleModel, ModelConfig, TrackerModel, decode
from .pipeline import TrainConfig, ci_config, train, train_step
from .synth import SceneSpec, SequenceSample, SpriteSpec, generate, make_dataset
from .augment import AugConfig, AugSpec, sample_views

__version__ = "0.1.0"

__all__ = [
    "AugConfig", "AugSpec", "BBox", "BoxOracleModel", "CropWindow",
    "LossConfig", "ModelConfig", "SceneSpec", "SequenceSample", "SpriteSpec",
    "TrackerModel", "TrackerSettings", "TrainConfig", "ci_config", "decode",
    "evaluate_dataset", "generate", "giou", "iou", "make_crop_window",
    "make_dataset", "sample_views", "static_baseline", "track_sequence",
    "train", "train_step",
]
