"""OrthTD: multimodal multi-task risk prediction with orthogonal task
decomposition, plus baseline strategies, a synthetic cohort generator and an
evaluation suite."""

from .cohort import (
    Cohort,
    FeatureSchema,
    PatientRecord,
    load_cohort,
    load_schema,
    stratified_split,
    write_cohort,
    write_schema,
)
from .decomposition import DecompConfig, TaskDecomposition, ortho_loss
from .encoders import TabularEncoderConfig, TextEncoderConfig
from .fusion import FusionConfig
from .losses import LossConfig, asymmetric_loss, combined_loss, uncertainty_weighted_loss
from .metrics import auc, auprc, brier, curves
from .strategies import ModelConfig, StrategyConfig, build_strategy
from .synthetic import GroundTruthLatents, SyntheticSpec, generate_synthetic
from .training import TrainConfig, cosine_lr, train
from .vitals import VitalFeatureSpec, augment_cohort, extract_vital_features

__version__ = "0.1.0"

__all__ = [
    "Cohort",
    "FeatureSchema",
    "PatientRecord",
    "load_cohort",
    "load_schema",
    "stratified_split",
    "write_cohort",
    "write_schema",
    "DecompConfig",
    "TaskDecomposition",
    "ortho_loss",
    "TabularEncoderConfig",
    "TextEncoderConfig",
    "FusionConfig",
    "LossConfig",
    "asymmetric_loss",
    "combined_loss",
    "uncertainty_weighted_loss",
    "auc",
    "auprc",
    "brier",
    "curves",
    "ModelConfig",
    "StrategyConfig",
    "build_strategy",
    "GroundTruthLatents",
    "SyntheticSpec",
    "generate_synthetic",
    "TrainConfig",
    "cosine_lr",
    "train",
    "VitalFeatureSpec",
    "augment_cohort",
    "extract_vital_features",
    "__version__",
]
