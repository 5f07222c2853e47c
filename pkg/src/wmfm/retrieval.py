"""Cross-modal retrieval scores and embedding-space diagnostics.

Retrieval and the similarity histogram work in the shared projected space
that the contrastive loss was trained in. Correctness is judged at the base
station level: a query scores if any of its top-k neighbours from the other
modality was captured at the same BS.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CAM, CSI, WMFM, EmbeddingBatch

MODALITIES = (CSI, CAM)
DEFAULT_KS = (1, 2, 5)


@dataclass
class PairedEmbeddings:
    """Row-aligned CSI and camera embeddings for the same records."""

    csi: np.ndarray
    cam: np.ndarray
    bs_id: np.ndarray
    record_ids: np.ndarray

    def __post_init__(self):
        self.csi = np.asarray(self.csi)
        self.cam = np.asarray(self.cam)
        self.bs_id = np.asarray(self.bs_id, dtype=np.int64)
        self.record_ids = np.asarray(self.record_ids, dtype=np.int64)
        n = len(self.csi)
        if self.cam.shape != self.csi.shape or len(self.bs_id) != n or len(self.record_ids) != n:
            raise ValueError("paired embeddings need equal-length, equal-shape arrays")

    def __len__(self):
        return len(self.csi)

    def of(self, modality):
        if modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {modality!r}")
        return self.csi if modality == CSI else self.cam


def _model(checkpoint):
    return checkpoint if isinstance(checkpoint, WMFM) else WMFM.load(checkpoint)[0]


def embed_pairs(checkpoint, split, projected=True, batch_size=256) -> PairedEmbeddings:
    """Encode every record of ``split`` in both modalities.

    ``projected=False`` returns the encoder outputs instead of the shared
    projection space. Record ids are row positions within the split.
    """
    model = _model(checkpoint)
    ids = np.arange(len(split))
    zc = model.encode_channel(split.H, ids, batch_size)
    zi = model.encode_image(split.images, ids, batch_size)
    if projected:
        zc, zi = model.project_batch(zc), model.project_batch(zi)
    return PairedEmbeddings(zc.z, zi.z, split.bs_id, ids)


def _unit(z):
    z = np.asarray(z, dtype=np.float64)
    n = np.linalg.norm(z, axis=1, keepdims=True)
    return z / np.where(n > 0, n, 1.0)


def topk_retrieval(query_modality, k, embeddings: PairedEmbeddings, bs_labels=None):
    """Fraction of queries whose top-``k`` cosine neighbours in the other modality include their BS.

    ``query_modality=CAM`` is channel retrieval (an image looks up the
    closest channel embeddings); ``CSI`` is image retrieval.
    """
    q = _unit(embeddings.of(query_modality))
    g = _unit(embeddings.of(CAM if query_modality == CSI else CSI))
    labels = embeddings.bs_id if bs_labels is None else np.asarray(bs_labels, dtype=np.int64)
    k = int(k)
    if k < 1 or k > len(g):
        raise ValueError(f"k={k} must lie in [1, gallery size {len(g)}]")
    if len(labels) != len(q):
        raise ValueError("bs_labels must have one entry per record")
    sims = q @ g.T
    # stable sort keeps ties in gallery order so results are deterministic
    top = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    hit = (labels[top] == labels[:, None]).any(axis=1)
    return float(hit.mean())


def retrieval_table(embeddings: PairedEmbeddings, ks=DEFAULT_KS):
    """Per-k accuracies for both directions, keyed ``channel`` (CAM queries) and ``image`` (CSI queries)."""
    return {
        "channel": {str(k): topk_retrieval(CAM, k, embeddings) for k in ks},
        "image": {str(k): topk_retrieval(CSI, k, embeddings) for k in ks},
        "num_queries": len(embeddings),
        "num_bs": int(len(np.unique(embeddings.bs_id))),
    }


def pair_similarity_histogram(embeddings: PairedEmbeddings, num_negatives=None, bins=40, seed=0, csv_path=None):
    """Cosine similarities of matched pairs versus uniformly sampled mismatched pairs.

    Negatives are drawn without replacement from the off-diagonal (i, j)
    pairs, ``num_negatives`` of them (default: as many as positives).
    """
    a, b = _unit(embeddings.csi), _unit(embeddings.cam)
    n = len(a)
    if n < 2:
        raise ValueError("need at least two records for negative pairs")
    pos = np.einsum("ij,ij->i", a, b)
    m = n if num_negatives is None else int(num_negatives)
    m = min(m, n * (n - 1))
    flat = np.random.default_rng(seed).choice(n * (n - 1), size=m, replace=False)
    i = flat // (n - 1)
    j = flat % (n - 1)
    j = j + (j >= i)  # skip the diagonal
    neg = np.einsum("ij,ij->i", a[i], b[j])
    pos, neg = np.clip(pos, -1.0, 1.0), np.clip(neg, -1.0, 1.0)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    out = {
        "positive": pos,
        "negative": neg,
        "negative_pairs": np.stack([i, j], axis=1),
        "bin_edges": edges,
        "positive_counts": np.histogram(pos, edges)[0],
        "negative_counts": np.histogram(neg, edges)[0],
        "summary": {
            "mean_pos": float(pos.mean()),
            "mean_neg": float(neg.mean()),
            "std_pos": float(pos.std()),
            "std_neg": float(neg.std()),
            "separation": float(pos.mean() - neg.mean()),
            "num_pos": int(n),
            "num_neg": int(m),
        },
    }
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "i", "j", "similarity"])
            for k, s in enumerate(pos):
                w.writerow(["positive", k, k, f"{s:.8f}"])
            for (ii, jj), s in zip(out["negative_pairs"], neg):
                w.writerow(["negative", int(ii), int(jj), f"{s:.8f}"])
    return out


def export_embeddings(checkpoint, split, path, projected=True) -> Path:
    """CSV of ``record_id, modality, bs_id, z0..z{d-1}``; records ascending, CSI row before CAM row."""
    emb = checkpoint if isinstance(checkpoint, PairedEmbeddings) else embed_pairs(checkpoint, split, projected)
    return write_embeddings(emb, path)


def write_embeddings(emb: PairedEmbeddings, path) -> Path:
    path = Path(path)
    d = emb.csi.shape[1]
    order = np.argsort(emb.record_ids, kind="stable")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "modality", "bs_id"] + [f"z{k}" for k in range(d)])
        for r in order:
            for mod, z in ((CSI, emb.csi[r]), (CAM, emb.cam[r])):
                # 9 significant digits round-trip float32 exactly
                w.writerow([int(emb.record_ids[r]), mod, int(emb.bs_id[r])] + [f"{v:.9g}" for v in z])
    return path


def read_embeddings(path) -> PairedEmbeddings:
    rows = {CSI: {}, CAM: {}}
    bs = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["record_id", "modality", "bs_id"]:
            raise ValueError(f"{path}: unexpected header {header[:3]}")
        for row in reader:
            rid = int(row[0])
            if row[1] not in rows:
                raise ValueError(f"{path}: unknown modality {row[1]!r}")
            rows[row[1]][rid] = np.array(row[3:], dtype=np.float64)
            bs[rid] = int(row[2])
    if rows[CSI].keys() != rows[CAM].keys():
        raise ValueError(f"{path}: every record needs both a CSI and a CAM row")
    ids = np.array(sorted(bs))
    return PairedEmbeddings(
        np.stack([rows[CSI][i] for i in ids]) if len(ids) else np.zeros((0, len(header) - 3)),
        np.stack([rows[CAM][i] for i in ids]) if len(ids) else np.zeros((0, len(header) - 3)),
        np.array([bs[i] for i in ids], dtype=np.int64),
        ids,
    )


def as_batches(emb: PairedEmbeddings):
    """The pair as two :class:`EmbeddingBatch` objects."""
    return EmbeddingBatch(emb.csi, CSI, emb.record_ids), EmbeddingBatch(emb.cam, CAM, emb.record_ids)
