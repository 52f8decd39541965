"""Learnable severity predictor: hand-crafted feature columns feeding a
shared trunk with per-defect softmax heads, trained with the infogain
loss; plus prediction fusion and patch-based defect localization."""

from .features import FEATURE_DIM, FEATURE_VERSION, HOLISTIC_SIZE, extract_features
from .infogain import (
    ClassProbabilities,
    InfogainMatrix,
    decode_score,
    derive_infogain_matrix,
    infogain_loss,
)
from .network import DefectModel, load_model, save_model
from .training import (
    AugmentPlan,
    LabeledImage,
    TrainConfig,
    TrainingData,
    augment_training_set,
    build_training_arrays,
    labeled_images_from_synth,
    train,
    train_on_arrays,
)
from .inference import PredictionResult, localize, predict

__all__ = [
    "FEATURE_DIM",
    "FEATURE_VERSION",
    "HOLISTIC_SIZE",
    "extract_features",
    "ClassProbabilities",
    "InfogainMatrix",
    "decode_score",
    "derive_infogain_matrix",
    "infogain_loss",
    "DefectModel",
    "load_model",
    "save_model",
    "AugmentPlan",
    "LabeledImage",
    "TrainConfig",
    "TrainingData",
    "augment_training_set",
    "build_training_arrays",
    "labeled_images_from_synth",
    "train",
    "train_on_arrays",
    "PredictionResult",
    "localize",
    "predict",
]
