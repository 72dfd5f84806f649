"""License-plate restoration: synthesis, degradation, training, evaluation."""

__version__ = "0.1.0"

from .degrade import (
    DatasetManifest,
    DegradedPair,
    SsimInterval,
    build_subsets,
    degrade_to_interval,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DegradationError,
    NonFiniteLossError,
    OcrError,
    PlateSrError,
    ShapeError,
)
from .evaluation import EvalReport, evaluate, report
from .layouts import ALPHABET, PLATE_LEN, PlateLayout
from .loss import LossBreakdown, LossConfig, details_term, perceptual_loss
from .metrics import RecognitionTally, levenshtein, psnr, ssim, tally_recognition
from .network import (
    ModelConfig,
    NetworkOutput,
    PlateSrNet,
    build_network,
    load_network,
    save_network,
)
from .ocr import OcrAdapter, ToyOcr, apply_layout_mask, toy_ocr_build, toy_ocr_train
from .pixelops import (
    load_png,
    pad_and_resize,
    pixel_shuffle,
    pixel_unshuffle,
    save_png,
)
from .synthplate import PlateSample, render_plate, sample_corpus
from .trainer import TrainConfig, TrainLog, evaluate_epoch, train

__all__ = [
    "ALPHABET",
    "PLATE_LEN",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DatasetManifest",
    "DegradationError",
    "DegradedPair",
    "EvalReport",
    "LossBreakdown",
    "LossConfig",
    "ModelConfig",
    "NetworkOutput",
    "NonFiniteLossError",
    "OcrAdapter",
    "OcrError",
    "PlateLayout",
    "PlateSample",
    "PlateSrError",
    "PlateSrNet",
    "RecognitionTally",
    "ShapeError",
    "SsimInterval",
    "ToyOcr",
    "TrainConfig",
    "TrainLog",
    "apply_layout_mask",
    "build_network",
    "build_subsets",
    "degrade_to_interval",
    "details_term",
    "evaluate",
    "evaluate_epoch",
    "levenshtein",
    "load_network",
    "load_png",
    "pad_and_resize",
    "perceptual_loss",
    "pixel_shuffle",
    "pixel_unshuffle",
    "psnr",
    "render_plate",
    "report",
    "sample_corpus",
    "save_network",
    "save_png",
    "ssim",
    "tally_recognition",
    "toy_ocr_build",
    "toy_ocr_train",
    "train",
]
