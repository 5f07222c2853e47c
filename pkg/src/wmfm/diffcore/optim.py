"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update. Returns ``(new_params, new_state)``; inputs are not mutated.

    ``params`` and ``grads`` are aligned lists of arrays. A ``None`` gradient
    is treated as zero.
    """
    if not state.m:
        m_prev = [np.zeros_like(p) for p in params]
        v_prev = [np.zeros_like(p) for p in params]
    else:
        m_prev, v_prev = state.m, state.v
    if len(params) != len(grads) or len(params) != len(m_prev):
        raise ValueError("params, grads and optimizer state must have equal length")
    t = state.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, m_prev, v_prev):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(step=t, m=new_m, v=new_v)


class Adam:
    """Stateful wrapper over :func:`adam_step` for a fixed list of tensors."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def step(self, grads: dict):
        arrays = [p.data for p in self.params]
        gs = [grads.get(p) for p in self.params]
        new, self.state = adam_step(arrays, gs, self.state, self.lr, *self.betas, eps=self.eps)
        for p, a in zip(self.params, new):
            p.data = a.astype(p.dtype, copy=False)
