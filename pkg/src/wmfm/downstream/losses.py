"""Focal, cross-entropy and hybrid localization losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Tensor, ops


@dataclass(frozen=True)
class FocalConfig:
    """Focusing exponent and per-class weights (index 0 = nLoS, 1 = LoS)."""

    gamma: float = 2.0
    alpha: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if any(a <= 0 for a in self.alpha):
            raise ValueError("alpha weights must be positive")

    @classmethod
    def from_labels(cls, labels, num_classes=2, gamma=2.0):
        """Inverse class frequency, normalized to mean 1."""
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes).astype(np.float64)
        inv = 1.0 / np.maximum(counts, 1.0)
        alpha = inv / inv.mean()
        return cls(gamma=gamma, alpha=tuple(float(a) for a in alpha))


def _check_labels(labels, num_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1 or np.any(labels < 0) or np.any(labels >= num_classes) or np.any(labels != np.round(labels)):
        raise ValueError(f"labels must be integers in [0, {num_classes})")
    return labels.astype(np.int64)


def cross_entropy(logits, labels) -> Tensor:
    logits = ops.as_tensor(logits)
    labels = _check_labels(labels, logits.shape[1])
    return ops.neg(ops.mean(ops.pick(ops.log_softmax(logits, axis=1), labels)))


def focal_loss(logits, labels, cfg: FocalConfig = FocalConfig()) -> Tensor:
    """Batch mean of -alpha_y (1 - p_y)^gamma log p_y under softmax probabilities."""
    logits = ops.as_tensor(logits)
    labels = _check_labels(labels, logits.shape[1])
    if len(cfg.alpha) != logits.shape[1]:
        raise ValueError(f"alpha has {len(cfg.alpha)} entries for {logits.shape[1]} classes")
    logp = ops.pick(ops.log_softmax(logits, axis=1), labels)
    weight = np.asarray(cfg.alpha, dtype=logits.dtype)[labels]
    term = ops.mul(logp, weight)
    if cfg.gamma != 0:
        term = ops.mul(term, ops.power(ops.sub(1.0, ops.exp(logp)), cfg.gamma))
    return ops.neg(ops.mean(term))


@dataclass(frozen=True)
class LocalizationWeights:
    x: float = 1.0
    y: float = 1.0
    z: float = 1.0

    def __post_init__(self):
        if min(self.x, self.y, self.z) < 0:
            raise ValueError("localization weights must be nonnegative")
        if self.x == self.y == self.z == 0:
            raise ValueError("localization weights must not all be zero")


def localization_loss(preds, targets, w: LocalizationWeights = LocalizationWeights()):
    """Weighted sum of x-MSE (normalized x) and lane / height cross-entropies.

    ``preds`` = (x_pred (N,), y_logits (N, 4), z_logits (N, 9)) and
    ``targets`` = (x_norm (N,), lane (N,), z_class (N,)). Returns the total
    loss tensor and a dict of the three term values.
    """
    x_pred, y_logits, z_logits = preds
    x_true, lane, zc = targets
    x_true = np.asarray(x_true, dtype=ops.as_tensor(x_pred).dtype)
    if not np.all(np.isfinite(x_true)):
        raise ValueError("x targets must be finite")
    lx = ops.mean(ops.square(ops.sub(x_pred, x_true)))
    ly = cross_entropy(y_logits, lane)
    lz = cross_entropy(z_logits, zc)
    total = ops.add(ops.add(ops.mul(lx, w.x), ops.mul(ly, w.y)), ops.mul(lz, w.z))
    return total, {"x": float(lx.data), "y": float(ly.data), "z": float(lz.data)}
