"""Frozen-encoder task adaptation: LoS/nLoS classification and localization."""

from .evaluate import evaluate_localization, evaluate_los, localization_targets
from .heads import FusionTrunk, LocalizationHead, LosHead, fuse, make_head
from .losses import FocalConfig, LocalizationWeights, cross_entropy, focal_loss, localization_loss
from .metrics import (
    classification_metrics,
    confusion_matrix,
    localization_metrics,
    metrics_from_confusion,
    write_confusion_csv,
)
from .probe import ProbeReport, linear_probe_check

__all__ = [
    "FocalConfig", "FusionTrunk", "LocalizationHead", "LocalizationWeights", "LosHead", "ProbeReport",
    "classification_metrics", "evaluate_localization", "evaluate_los", "localization_targets", "confusion_matrix", "cross_entropy", "focal_loss", "fuse",
    "linear_probe_check", "localization_loss", "localization_metrics", "make_head",
    "metrics_from_confusion", "write_confusion_csv",
]
