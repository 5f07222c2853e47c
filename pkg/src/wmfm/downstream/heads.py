"""Task heads over fused [z_CAM ; z_CSI] embeddings."""

from __future__ import annotations

import numpy as np

from ..diffcore import ops
from ..diffcore.nn import MLP, Linear, Module

NUM_LANES = 4
NUM_Z = 9


def fuse(z_cam, z_csi):
    """Concatenate camera then channel embeddings into (N, 2d)."""
    z_cam, z_csi = np.asarray(z_cam), np.asarray(z_csi)
    if z_cam.shape != z_csi.shape:
        raise ValueError(f"modality embeddings differ in shape: {z_cam.shape} vs {z_csi.shape}")
    return np.concatenate([z_cam, z_csi], axis=1)


class FusionTrunk(Module):
    """Per-modality refiners followed by attention over the two modality tokens.

    ``fusion="transformer"``: one single-head self-attention block with a
    residual feed-forward layer; output is both tokens flattened (2*hidden).
    ``fusion="gate"``: a learned score per token, softmax-weighted sum
    (hidden).
    """

    def __init__(self, embed_dim, hidden, rng, dtype=np.float64, fusion="transformer"):
        super().__init__()
        if fusion not in ("transformer", "gate"):
            raise ValueError(f"unknown fusion '{fusion}'")
        self.d = embed_dim
        self.hidden = hidden
        self.fusion = fusion
        self.refine_cam = MLP((embed_dim, hidden, hidden), rng, dtype=dtype)
        self.refine_csi = MLP((embed_dim, hidden, hidden), rng, dtype=dtype)
        if fusion == "transformer":
            self.wq = Linear(hidden, hidden, rng, dtype=dtype)
            self.wk = Linear(hidden, hidden, rng, dtype=dtype)
            self.wv = Linear(hidden, hidden, rng, dtype=dtype)
            self.wo = Linear(hidden, hidden, rng, dtype=dtype)
            self.ffn = MLP((hidden, 2 * hidden, hidden), rng, dtype=dtype)
            self.out_dim = 2 * hidden
        else:
            self.gate = Linear(hidden, 1, rng, dtype=dtype)
            self.out_dim = hidden

    def forward(self, z):
        z = ops.as_tensor(z)
        if z.ndim != 2 or z.shape[1] != 2 * self.d:
            raise ValueError(f"fused embedding must be (N, {2 * self.d}), got {z.shape}")
        cam = ops.relu(self.refine_cam(z[:, : self.d]))
        csi = ops.relu(self.refine_csi(z[:, self.d :]))
        tokens = ops.stack([cam, csi], axis=1)  # (N, 2, hidden)
        if self.fusion == "gate":
            w = ops.softmax(self.gate(tokens), axis=1)
            return ops.sum(ops.mul(w, tokens), axis=1)
        q, k, v = self.wq(tokens), self.wk(tokens), self.wv(tokens)
        att = ops.softmax(ops.mul(ops.matmul(q, ops.swap_last(k)), 1.0 / np.sqrt(self.hidden)), axis=-1)
        h = ops.add(tokens, self.wo(ops.matmul(att, v)))
        h = ops.add(h, self.ffn(h))
        return ops.flatten(h)


class LosHead(Module):
    def __init__(self, embed_dim, rng, hidden=32, dtype=np.float64, fusion="transformer"):
        super().__init__()
        self.trunk = FusionTrunk(embed_dim, hidden, rng, dtype, fusion)
        self.classifier = MLP((self.trunk.out_dim, hidden, 2), rng, dtype=dtype)

    def forward(self, z):
        return self.classifier(ops.relu(self.trunk(z)))


class LocalizationHead(Module):
    """Shared trunk feeding x regression (normalized to [0, 1]) and lane / height logits."""

    def __init__(self, embed_dim, rng, hidden=32, dtype=np.float64, fusion="transformer"):
        super().__init__()
        self.trunk = FusionTrunk(embed_dim, hidden, rng, dtype, fusion)
        o = self.trunk.out_dim
        self.x_head = MLP((o, hidden, 1), rng, dtype=dtype)
        self.y_head = MLP((o, hidden, NUM_LANES), rng, dtype=dtype)
        self.z_head = MLP((o, hidden, NUM_Z), rng, dtype=dtype)

    def forward(self, z):
        h = ops.relu(self.trunk(z))
        x = ops.reshape(self.x_head(h), (-1,))
        return x, self.y_head(h), self.z_head(h)


def make_head(task, embed_dim, seed=0, hidden=32, dtype=np.float64, fusion="transformer"):
    rng = np.random.default_rng(seed)
    if task == "los":
        return LosHead(embed_dim, rng, hidden, dtype, fusion)
    if task == "loc":
        return LocalizationHead(embed_dim, rng, hidden, dtype, fusion)
    raise ValueError(f"unknown task '{task}' (expected 'los' or 'loc')")
