"""Similarity matrices, symmetric InfoNCE and embedding-space diagnostics."""

from __future__ import annotations

import json
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from .diffcore import Tape, Tensor, backward, ops

NORM_TOL = 1e-6


class NormViolationError(ValueError):
    """Input rows are not unit-norm within tolerance."""


class MultiplyCounter:
    def __init__(self):
        self.count = 0


_counters: list[MultiplyCounter] = []


@contextmanager
def count_multiplies():
    """Count scalar multiplies spent in :func:`similarity_matrix` calls inside the block."""
    c = MultiplyCounter()
    _counters.append(c)
    try:
        yield c
    finally:
        _counters.remove(c)


@dataclass
class SimilarityMatrix:
    """Cosine similarities between rows of two embedding batches; diagonal = positive pairs."""

    sims: Tensor
    temperature: float = 0.1

    @property
    def n(self):
        return self.sims.shape[0]

    def numpy(self):
        return self.sims.data


def _check_unit_rows(z, label):
    # float32 rounding alone can exceed 1e-6 on a norm, so scale with machine epsilon
    tol = max(NORM_TOL, 100 * np.finfo(z.dtype).eps) if z.dtype.kind == "f" else NORM_TOL
    norms = np.sqrt((z.astype(np.float64) ** 2).sum(axis=1))
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        i = int(np.argmax(np.abs(norms - 1.0)))
        raise NormViolationError(f"{label} row {i} has norm {norms[i]:.9f}; rows must be unit-norm within {tol:g}")


def similarity_matrix(z_a, z_b, temperature=0.1) -> SimilarityMatrix:
    """``sims = z_a @ z_b.T`` for unit-norm rows; costs N_a * N_b * d multiplies."""
    za, zb = ops.as_tensor(z_a), ops.as_tensor(z_b)
    if za.ndim != 2 or zb.ndim != 2 or za.shape != zb.shape:
        raise ValueError(f"similarity_matrix needs equal (N, d) batches, got {za.shape} and {zb.shape}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    _check_unit_rows(za.data, "z_a")
    _check_unit_rows(zb.data, "z_b")
    for c in _counters:
        c.count += za.shape[0] * zb.shape[0] * za.shape[1]
    return SimilarityMatrix(ops.matmul(za, ops.transpose(zb)), float(temperature))


@dataclass
class ContrastiveReport:
    loss: float
    loss_csi_to_cam: float
    loss_cam_to_csi: float
    mi_lower_bound: float
    mean_pos_sim: float
    mean_neg_sim: float
    n: int
    temperature: float
    alignment: float | None = None
    uniformity: float | None = None
    loss_tensor: Tensor | None = field(default=None, repr=False, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("loss_tensor")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def infonce_terms(sims: Tensor, temperature: float):
    """Directional losses (rows = CSI anchors, columns = CAM anchors) and their mean."""
    logits = ops.mul(sims, 1.0 / temperature)
    row = ops.neg(ops.mean(ops.diagonal(ops.log_softmax(logits, axis=1))))
    col = ops.neg(ops.mean(ops.diagonal(ops.log_softmax(logits, axis=0))))
    return ops.mul(ops.add(row, col), 0.5), row, col


def infonce_symmetric(sm: SimilarityMatrix, z_csi=None, z_cam=None) -> ContrastiveReport:
    """Symmetric InfoNCE over a similarity matrix whose rows are CSI anchors.

    Log-sum-exp is stabilized inside ``log_softmax``. If the embedding
    batches are given, alignment and uniformity are filled in too.
    """
    if sm.temperature <= 0:
        raise ValueError("temperature must be positive")
    total, row, col = infonce_terms(sm.sims, sm.temperature)
    s = sm.sims.data
    n = s.shape[0]
    off = ~np.eye(n, dtype=bool)
    report = ContrastiveReport(
        loss=float(total.data),
        loss_csi_to_cam=float(row.data),
        loss_cam_to_csi=float(col.data),
        mi_lower_bound=mi_bound(float(total.data), n),
        mean_pos_sim=float(np.diagonal(s).mean()),
        mean_neg_sim=float(s[off].mean()) if n > 1 else float("nan"),
        n=n,
        temperature=sm.temperature,
        loss_tensor=total,
    )
    if z_csi is not None and z_cam is not None and n >= 2:
        report.alignment, report.uniformity = alignment_uniformity(_arr(z_csi), _arr(z_cam))
    return report


def mi_bound(loss: float, n: int) -> float:
    """Mutual-information lower bound ``ln N - loss`` in nats."""
    if n < 1:
        raise ValueError("N must be >= 1")
    return math.log(n) - loss


def _arr(z):
    return z.data if isinstance(z, Tensor) else np.asarray(z)


def alignment_uniformity(z_csi, z_cam, t=2.0):
    """``(alignment, uniformity)`` for unit-norm paired batches.

    alignment = mean_i ||z_csi_i - z_cam_i||^2; uniformity is the log of the
    mean Gaussian kernel exp(-t ||z_i - z_j||^2) over i != j, computed per
    modality and averaged.
    """
    a, b = _arr(z_csi), _arr(z_cam)
    if a.shape != b.shape:
        raise ValueError(f"paired batches must have equal shapes, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise ValueError("uniformity needs at least two samples")
    alignment = float(((a - b) ** 2).sum(axis=1).mean())

    def unif(z):
        sq = np.maximum(2.0 - 2.0 * (z @ z.T), 0.0)
        off = ~np.eye(len(z), dtype=bool)
        vals = -t * sq[off]
        m = vals.max()
        return float(m + np.log(np.exp(vals - m).mean()))

    return alignment, 0.5 * (unif(a) + unif(b))


@dataclass
class GradientIdentityReport:
    passed: bool
    signs_ok: bool
    max_rel_err: float
    worst_entry: tuple
    autodiff: np.ndarray = field(repr=False)
    closed_form: np.ndarray = field(repr=False)


def closed_form_gradient(sims, temperature):
    """d/dS of sum_i -log p_i for the CSI->CAM direction: -(1-p_i)/tau on the diagonal, p_ij/tau elsewhere."""
    s = np.asarray(sims, dtype=np.float64) / temperature
    p = np.exp(s - s.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    g = p / temperature
    n = len(s)
    g[np.arange(n), np.arange(n)] = -(1.0 - np.diagonal(p)) / temperature
    return g


def infonce_gradient_identity_check(sims, temperature, rtol=1e-8) -> GradientIdentityReport:
    """Differentiate the per-anchor CSI->CAM loss on a tape and compare with the closed forms."""
    s = Tensor(np.array(_arr(sims), dtype=np.float64), requires_grad=True, name="sims")
    with Tape() as tape:
        logits = ops.mul(s, 1.0 / temperature)
        loss = ops.neg(ops.sum(ops.diagonal(ops.log_softmax(logits, axis=1))))
    auto = backward(tape, loss, wrt=[s])[s]
    ref = closed_form_gradient(s.data, temperature)
    n = len(ref)
    diag = np.eye(n, dtype=bool)
    if n == 1:  # a lone positive has p = 1 and zero gradient
        signs_ok = bool(auto[0, 0] == 0.0)
    else:
        signs_ok = bool(np.all(auto[diag] < 0) and np.all(auto[~diag] > 0))
    rel = np.abs(auto - ref) / np.maximum(np.abs(ref), np.finfo(float).tiny)
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    ok = bool(np.all(np.abs(auto - ref) <= rtol * np.abs(ref) + np.finfo(float).tiny))
    return GradientIdentityReport(ok and signs_ok, signs_ok, float(rel.max()), tuple(int(i) for i in worst), auto, ref)
