"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tape, backward


@dataclass
class GradcheckResult:
    passed: bool
    max_abs_err: float
    max_rel_err: float
    worst: str
    checked: int

    def __bool__(self):
        return self.passed


def gradcheck(fn, inputs, step=1e-6, rtol=1e-5, atol=1e-8, max_entries=None, rng=None):
    """Compare tape gradients of scalar ``fn(*inputs)`` against central differences.

    ``inputs`` are tensors with ``requires_grad`` set. ``max_entries`` limits
    the number of coordinates checked per input (chosen at random) for large
    parameter sets; ``None`` checks every coordinate.
    """
    with Tape() as tape:
        loss = fn(*inputs)
    grads = backward(tape, loss, wrt=inputs)

    def scalar():
        return float(fn(*inputs).data)

    worst = ("", 0.0, 0.0)
    passed = True
    checked = 0
    rng = rng or np.random.default_rng(0)
    for k, t in enumerate(inputs):
        analytic = grads[t]
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for i in idx:
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            flat[i] = orig + h
            fp = scalar()
            flat[i] = orig - h
            fm = scalar()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - num)
            rel = err / max(abs(num), 1e-300)
            checked += 1
            if err > atol + rtol * abs(num):
                passed = False
            if err > worst[1]:
                worst = (f"{t.name or f'input{k}'}[{i}]", err, rel)
    return GradcheckResult(passed, worst[1], worst[2], worst[0], checked)
