"""Linear separability probe on frozen embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Adam, Tape, Tensor, backward, ops
from .losses import cross_entropy


@dataclass
class ProbeReport:
    accuracy: float
    train_accuracy: float
    num_classes: int
    chance: float
    n_train: int
    n_test: int


def linear_probe_check(train_z, train_y, test_z=None, test_y=None, steps=300, lr=0.05, l2=1e-4, seed=0):
    """Fit multinomial logistic regression on ``train_z`` and score held-out data.

    Without an explicit test set, a seeded half of the training data is
    held out.
    """
    train_z = np.asarray(train_z, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    classes = np.unique(train_y)
    if len(classes) < 2:
        raise ValueError("linear probe needs at least two classes")
    if test_z is None:
        perm = np.random.default_rng(seed).permutation(len(train_z))
        half = len(perm) // 2
        test_z, test_y = train_z[perm[half:]], train_y[perm[half:]]
        train_z, train_y = train_z[perm[:half]], train_y[perm[:half]]
    test_z = np.asarray(test_z, dtype=np.float64)
    test_y = np.asarray(test_y, dtype=np.int64)
    k = int(max(train_y.max(), test_y.max())) + 1

    w = Tensor(np.zeros((k, train_z.shape[1])), requires_grad=True, name="probe.weight")
    b = Tensor(np.zeros(k), requires_grad=True, name="probe.bias")
    opt = Adam([w, b], lr=lr)
    for _ in range(steps):
        with Tape() as tape:
            loss = ops.add(cross_entropy(ops.linear(train_z, w, b), train_y), ops.mul(ops.sum(ops.square(w)), l2))
        opt.step(backward(tape, loss))

    def acc(z, y):
        return float((np.argmax(z @ w.data.T + b.data, axis=1) == y).mean())

    counts = np.bincount(test_y, minlength=k)
    return ProbeReport(
        accuracy=acc(test_z, test_y),
        train_accuracy=acc(train_z, train_y),
        num_classes=len(classes),
        chance=float(counts.max() / counts.sum()),
        n_train=len(train_z),
        n_test=len(test_z),
    )
