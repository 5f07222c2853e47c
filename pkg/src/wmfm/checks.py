"""Finite-difference gradient checks for every differentiable op and the full
encoder + InfoNCE composite, plus the closed-form InfoNCE gradient identity.

Each op check reduces the op output to a scalar with a fixed random weight
tensor, so every output entry contributes a distinct gradient.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .contrastive import infonce_gradient_identity_check, infonce_symmetric, similarity_matrix
from .diffcore import Tensor, gradcheck, ops
from .model import CAM, CSI, WMFM, EncoderConfig


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    max_abs_err: float
    max_rel_err: float
    checked: int
    seconds: float

    def to_dict(self):
        return dict(self.__dict__)


def _leaf(rng, shape, name, low=None):
    data = rng.standard_normal(shape)
    if low is not None:  # keep away from a kink or singularity
        data = np.abs(data) + low
    return Tensor(data, requires_grad=True, name=name)


def _away_from_zero(rng, shape, name, gap=0.1):
    data = rng.standard_normal(shape)
    data = np.where(np.abs(data) < gap, np.sign(data + 1e-12) * gap, data)
    return Tensor(data, requires_grad=True, name=name)


def _op_cases(rng):
    """name -> (fn, inputs). ``fn`` maps the input tensors to any-shaped output."""
    a = lambda: _leaf(rng, (3, 4), "a")  # noqa: E731
    b = lambda: _leaf(rng, (3, 4), "b")  # noqa: E731
    idx = np.array([1, 0, 3])
    cases = {
        "add": (ops.add, [a(), _leaf(rng, (4,), "b")]),
        "sub": (ops.sub, [a(), b()]),
        "mul": (ops.mul, [a(), _leaf(rng, (3, 1), "b")]),
        "div": (ops.div, [a(), _leaf(rng, (3, 4), "b", low=0.5)]),
        "neg": (ops.neg, [a()]),
        "square": (ops.square, [a()]),
        "power": (lambda x: ops.power(x, 3), [a()]),
        "exp": (ops.exp, [a()]),
        "log": (ops.log, [_leaf(rng, (3, 4), "a", low=0.2)]),
        "relu": (ops.relu, [_away_from_zero(rng, (3, 4), "a")]),
        "sigmoid": (ops.sigmoid, [a()]),
        "sum": (lambda x: ops.sum(x, axis=1), [a()]),
        "mean": (lambda x: ops.mean(x, axis=0, keepdims=True), [a()]),
        "logsumexp": (lambda x: ops.logsumexp(x, axis=1), [a()]),
        "softmax": (lambda x: ops.softmax(x, axis=1), [a()]),
        "log_softmax": (lambda x: ops.log_softmax(x, axis=0), [a()]),
        "l2_normalize": (ops.l2_normalize, [a()]),
        "reshape": (lambda x: ops.reshape(x, (2, 6)), [a()]),
        "flatten": (ops.flatten, [_leaf(rng, (2, 3, 2), "a")]),
        "transpose": (ops.transpose, [a()]),
        "swap_last": (ops.swap_last, [_leaf(rng, (2, 3, 4), "a")]),
        "concat": (lambda x, y: ops.concat([x, y], axis=0), [a(), b()]),
        "stack": (lambda x, y: ops.stack([x, y], axis=1), [a(), b()]),
        "getitem": (lambda x: ops.getitem(x, (slice(None), slice(1, 3))), [a()]),
        "diagonal": (ops.diagonal, [_leaf(rng, (4, 4), "a")]),
        "pick": (lambda x: ops.pick(x, idx), [a()]),
        "matmul": (ops.matmul, [a(), _leaf(rng, (4, 2), "b")]),
        "matmul_batched": (ops.matmul, [_leaf(rng, (2, 3, 4), "a"), _leaf(rng, (2, 4, 2), "b")]),
        "linear": (ops.linear, [a(), _leaf(rng, (5, 4), "w"), _leaf(rng, (5,), "bias")]),
        "conv2d": (
            lambda x, w, c: ops.conv2d(x, w, c, stride=1, padding=1),
            [_leaf(rng, (2, 2, 4, 5), "x"), _leaf(rng, (3, 2, 3, 3), "w"), _leaf(rng, (3,), "bias")],
        ),
        "conv2d_stride2": (
            lambda x, w: ops.conv2d(x, w, None, stride=2, padding=1),
            [_leaf(rng, (2, 2, 5, 6), "x"), _leaf(rng, (3, 2, 3, 3), "w")],
        ),
        "global_avg_pool": (ops.global_avg_pool, [_leaf(rng, (2, 3, 2, 3), "x")]),
    }
    rm, rv = np.zeros(3), np.ones(3)
    cases["batchnorm_train"] = (
        lambda x, g, c: ops.batchnorm(x, g, c, rm.copy(), rv.copy(), training=True),
        [_leaf(rng, (4, 3, 2, 2), "x"), _leaf(rng, (3,), "gamma"), _leaf(rng, (3,), "beta")],
    )
    cases["batchnorm_eval"] = (
        lambda x, g, c: ops.batchnorm(x, g, c, np.full(3, 0.1), np.full(3, 2.0), training=False),
        [_leaf(rng, (5, 3), "x"), _leaf(rng, (3,), "gamma"), _leaf(rng, (3,), "beta")],
    )
    return cases


def tiny_encoder_config():
    return EncoderConfig(
        embed_dim=4, antennas=4, subcarriers=4, image_dims=(8, 8, 3),
        channel_conv=(3,), channel_head=(8, 4), image_backbone=(3, 4), image_head=(8, 4),
        projection_head=(8, 4), dtype="float64",
    )


def _composite_case(seed, n=4):
    """Encoders + projections + symmetric InfoNCE on a tiny model, gradient w.r.t. every parameter."""
    cfg = tiny_encoder_config()
    model = WMFM(cfg, seed=seed)
    model.train()
    rng = np.random.default_rng(seed + 1)
    H = rng.standard_normal((n, cfg.antennas, cfg.subcarriers)) + 1j * rng.standard_normal((n, cfg.antennas, cfg.subcarriers))
    images = rng.integers(0, 256, size=(n, 8, 8, 3), dtype=np.uint8)
    params = model.parameters()
    for name, p in model.named_parameters():
        p.name = name

    def fn(*_):
        z_csi = model.project(model.channel_embed(H), CSI)
        z_cam = model.project(model.image_embed(images), CAM)
        return infonce_symmetric(similarity_matrix(z_csi, z_cam, 0.1)).loss_tensor

    return fn, params


def run_gradient_checks(seed=0, rtol=1e-5, atol=1e-8, composite_entries=None, identity_batches=100):
    """Run every check; returns a list of :class:`CheckOutcome` (float64 throughout)."""
    rng = np.random.default_rng(seed)
    outcomes = []
    for name, (fn, inputs) in _op_cases(rng).items():
        t0 = time.perf_counter()
        wrng = np.random.default_rng([seed, len(outcomes)])
        probe = fn(*inputs)
        w = wrng.standard_normal(probe.shape)
        res = gradcheck(lambda *xs, fn=fn, w=w: ops.sum(ops.mul(fn(*xs), w)), inputs, rtol=rtol, atol=atol)
        outcomes.append(CheckOutcome(name, res.passed, res.max_abs_err, res.max_rel_err, res.checked, time.perf_counter() - t0))

    t0 = time.perf_counter()
    fn, params = _composite_case(seed)
    res = gradcheck(fn, params, rtol=rtol, atol=atol, max_entries=composite_entries, rng=rng)
    outcomes.append(CheckOutcome("encoder+infonce", res.passed, res.max_abs_err, res.max_rel_err, res.checked, time.perf_counter() - t0))

    t0 = time.perf_counter()
    ok, worst, count = True, 0.0, 0
    for _ in range(identity_batches):
        n = int(rng.integers(2, 17))
        z = rng.standard_normal((n, 8))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        z2 = rng.standard_normal((n, 8))
        z2 /= np.linalg.norm(z2, axis=1, keepdims=True)
        rep = infonce_gradient_identity_check(z @ z2.T, 0.1)
        ok &= rep.passed
        worst = max(worst, rep.max_rel_err)
        count += n * n
    outcomes.append(CheckOutcome("infonce_closed_form", bool(ok), float("nan"), worst, count, time.perf_counter() - t0))
    return outcomes
