"""Scoring trained heads on precomputed fused embeddings."""

from __future__ import annotations

import numpy as np

from ..diffcore import Tensor, no_grad
from .losses import FocalConfig, LocalizationWeights, focal_loss, localization_loss
from .metrics import classification_metrics, localization_metrics


def _eval_forward(head, z):
    was = head.training
    head.eval()
    try:
        with no_grad():
            return head(Tensor(z))
    finally:
        head.train(was)


def evaluate_los(head, z, labels, focal: FocalConfig):
    """Accuracy, balanced accuracy, per-class precision/recall/F1 and focal loss."""
    if len(z) == 0:
        raise ValueError("cannot evaluate an empty split")
    logits = _eval_forward(head, z)
    pred = np.argmax(logits.data, axis=1)
    metrics = classification_metrics(labels, pred, num_classes=2)
    metrics["focal_loss"] = float(focal_loss(logits, labels, focal).data)
    return metrics


def localization_targets(split, street_length):
    return (np.asarray(split.pos_x, np.float64) / street_length, split.lane_y.astype(np.int64), split.z_class.astype(np.int64))


def evaluate_localization(head, z, split, scenario, weights: LocalizationWeights = LocalizationWeights()):
    """Mean Euclidean distance (m), x MAE (m), lane / height accuracy and per-term losses."""
    if len(z) == 0:
        raise ValueError("cannot evaluate an empty split")
    x_pred, y_logits, z_logits = _eval_forward(head, z)
    targets = localization_targets(split, scenario.street_length)
    total, terms = localization_loss((x_pred, y_logits, z_logits), targets, weights)
    metrics = localization_metrics(
        x_pred.data * scenario.street_length,
        np.argmax(y_logits.data, axis=1),
        np.argmax(z_logits.data, axis=1),
        np.asarray(split.pos_x, np.float64),
        split.lane_y,
        split.z_class,
        scenario.lane_y_centers,
        scenario.z_centroids(),
    )
    metrics.update({"loss": float(total.data), "loss_x": terms["x"], "loss_y": terms["y"], "loss_z": terms["z"]})
    return metrics
