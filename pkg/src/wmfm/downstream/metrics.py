"""Classification and localization metrics."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def confusion_matrix(y_true, y_pred, num_classes):
    """Rows = true class, columns = predicted class."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def metrics_from_confusion(cm):
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    present = support > 0
    return {
        "accuracy": float(tp.sum() / total),
        "balanced_accuracy": float(recall[present].mean()),
        "precision": precision.tolist(),
        "recall": recall.tolist(),
        "f1": f1.tolist(),
        "support": support.astype(int).tolist(),
        "confusion_matrix": cm.astype(int).tolist(),
    }


def classification_metrics(y_true, y_pred, num_classes=2):
    if len(y_true) == 0:
        raise ValueError("cannot evaluate an empty split")
    return metrics_from_confusion(confusion_matrix(y_true, y_pred, num_classes))


def write_confusion_csv(cm, path, labels=("nLoS", "LoS")):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(labels))
        for name, row in zip(labels, np.asarray(cm)):
            w.writerow([name] + [int(v) for v in row])
    return path


def localization_metrics(x_pred, y_pred, z_pred, x_true, y_true, z_true, lane_centers, z_centroids):
    """Distances in metres; lane / height classes are placed at their bin centroids."""
    lane_centers = np.asarray(lane_centers, dtype=np.float64)
    z_centroids = np.asarray(z_centroids, dtype=np.float64)
    x_pred, x_true = np.asarray(x_pred, np.float64), np.asarray(x_true, np.float64)
    y_pred, y_true = np.asarray(y_pred, np.int64), np.asarray(y_true, np.int64)
    z_pred, z_true = np.asarray(z_pred, np.int64), np.asarray(z_true, np.int64)
    if len(x_true) == 0:
        raise ValueError("cannot evaluate an empty split")
    dx = x_pred - x_true
    dy = lane_centers[y_pred] - lane_centers[y_true]
    dz = z_centroids[z_pred] - z_centroids[z_true]
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    return {
        "mean_distance": float(dist.mean()),
        "x_mae": float(np.abs(dx).mean()),
        "y_accuracy": float((y_pred == y_true).mean()),
        "z_accuracy": float((z_pred == z_true).mean()),
    }
