"""Training loops: contrastive pretraining, frozen-encoder adaptation, the
end-to-end baseline, and the noise / data-efficiency sweeps built on them."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .contrastive import alignment_uniformity, infonce_symmetric, similarity_matrix
from .datagen import NoiseSpec, ScenarioConfig, inject_noise
from .diffcore import Adam, NonFiniteError, Tape, Tensor, backward, load_checkpoint, no_grad, ops, save_checkpoint
from .downstream import (
    FocalConfig,
    LocalizationWeights,
    evaluate_localization,
    evaluate_los,
    focal_loss,
    fuse,
    localization_loss,
    localization_targets,
    make_head,
)
from .model import CAM, CSI, WMFM, EncoderConfig

log = logging.getLogger(__name__)

TASKS = ("los", "loc")


class TrainingError(RuntimeError):
    """A run could not continue (non-finite loss, broken frozen contract, bad inputs)."""


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.1
    batch_size: int = 64
    epochs: int = 60
    adapt_epochs: int = 30
    lr: float = 1e-3
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    seed: int = 0
    dtype: str = "float32"
    label_fraction: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    head_hidden: int = 32
    fusion: str = "transformer"
    focal_gamma: float = 2.0
    loc_weights: tuple = (1.0, 1.0, 1.0)
    restore_best: bool = True

    def __post_init__(self):
        if not isinstance(self.noise, NoiseSpec):
            object.__setattr__(self, "noise", NoiseSpec.parse(self.noise))
        object.__setattr__(self, "loc_weights", tuple(float(w) for w in self.loc_weights))
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for contrastive batches")
        if self.epochs < 0 or self.adapt_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.plateau_patience < 1:
            raise ValueError("plateau patience must be >= 1")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau factor must lie in (0, 1)")
        if not 0 < self.label_fraction <= 1:
            raise ValueError("label_fraction must lie in (0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        LocalizationWeights(*self.loc_weights)

    def to_dict(self):
        d = asdict(self)
        d["noise"] = self.noise.to_dict()
        d["loc_weights"] = list(self.loc_weights)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "noise" in d:
            d["noise"] = NoiseSpec.parse(d["noise"])
        return cls(**d)


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without strict improvement."""

    def __init__(self, lr, factor=0.1, patience=5):
        if patience < 1 or not 0 < factor < 1:
            raise ValueError("need patience >= 1 and 0 < factor < 1")
        self.lr = float(lr)
        self.factor = factor
        self.patience = patience
        self.best = math.inf
        self.counter = 0
        self.reductions = 0

    def step(self, metric) -> bool:
        """Feed one validation value; returns True if the rate was reduced."""
        if metric < self.best:
            self.best = metric
            self.counter = 0
            return False
        self.counter += 1
        if self.counter >= self.patience:
            self.lr *= self.factor
            self.counter = 0
            self.reductions += 1
            return True
        return False


PRETRAIN_FIELDS = (
    "epoch", "train_loss", "train_mi", "val_loss", "val_mi", "mean_pos_sim", "mean_neg_sim",
    "alignment", "uniformity", "lr", "lr_reduced", "best", "epoch_seconds",
)
HEAD_FIELDS = ("epoch", "train_loss", "val_loss", "val_metric", "lr", "lr_reduced", "best", "epoch_seconds")
TIMING_FIELDS = ("epoch_seconds",)


class RunLog:
    """Per-epoch records with a fixed schema; written as JSON lines."""

    def __init__(self, fields):
        self.fields = tuple(fields)
        self.records = []

    def append(self, **record):
        missing = set(self.fields) - set(record)
        extra = set(record) - set(self.fields)
        if missing or extra:
            raise ValueError(f"RunLog record mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        if self.records and record["epoch"] <= self.records[-1]["epoch"]:
            raise ValueError("RunLog epochs must increase")
        self.records.append({k: record[k] for k in self.fields})

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return [r[name] for r in self.records]

    def without_timing(self):
        return [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in self.records]

    def write(self, path):
        path = Path(path)
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path):
        lines = [json.loads(x) for x in Path(path).read_text().splitlines() if x.strip()]
        runlog = cls(lines[0].keys() if lines else ())
        for r in lines:
            runlog.append(**r)
        return runlog


def _seq(*keys):
    return np.random.SeedSequence([int(k) for k in keys])


def _maybe_noise(H, spec, seed):
    return inject_noise(H, spec, seed) if spec.enabled else H


def _write_jsonl(path, rows):
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def check_compatible(model: WMFM, scenario: ScenarioConfig):
    c = model.cfg
    want = (scenario.antennas, scenario.subcarriers, tuple(scenario.image_dims))
    have = (c.antennas, c.subcarriers, tuple(c.image_dims))
    if want != have:
        raise ValueError(f"model expects (antennas, subcarriers, image_dims) = {have} but dataset has {want}")


def _as_model(checkpoint) -> WMFM:
    if isinstance(checkpoint, WMFM):
        return checkpoint
    return WMFM.load(checkpoint)[0]


# ---------------------------------------------------------------- pretraining


def contrastive_step(model, H, images, temperature):
    """Encode, project and score one batch; returns a ContrastiveReport with its loss tensor."""
    z_csi = model.project(model.channel_embed(H), CSI)
    z_cam = model.project(model.image_embed(images), CAM)
    return infonce_symmetric(similarity_matrix(z_csi, z_cam, temperature), z_csi, z_cam)


def contrastive_eval(model, view, temperature, batch_size):
    """Validation InfoNCE over consecutive batches (the last partial batch is kept)."""
    emb_csi = model.project_batch(model.encode_channel(view.H))
    emb_cam = model.project_batch(model.encode_image(view.images))
    zc, zi = emb_csi.z.astype(np.float64), emb_cam.z.astype(np.float64)
    n = len(zc)
    losses, mis, sizes = [], [], []
    with no_grad():
        for i in range(0, n, batch_size):
            j = min(i + batch_size, n)
            if j - i < 2:
                continue
            rep = infonce_symmetric(similarity_matrix(zc[i:j], zi[i:j], temperature))
            losses.append(rep.loss)
            mis.append(rep.mi_lower_bound)
            sizes.append(j - i)
    w = np.asarray(sizes, dtype=np.float64)
    S = zc @ zi.T
    off = ~np.eye(n, dtype=bool)
    align, unif = alignment_uniformity(zc, zi) if n >= 2 else (float("nan"), float("nan"))
    return {
        "loss": float(np.dot(losses, w) / w.sum()),
        "mi": float(np.dot(mis, w) / w.sum()),
        "log_n": float(np.dot(np.log(w), w) / w.sum()),
        "mean_pos_sim": float(np.diag(S).mean()),
        "mean_neg_sim": float(S[off].mean()),
        "alignment": float(align),
        "uniformity": float(unif),
    }


@dataclass
class PretrainResult:
    model: WMFM
    runlog: RunLog
    steps: list
    initial_val_loss: float
    best_epoch: int
    best_val_loss: float
    final_path: Path | None = None
    best_path: Path | None = None


def pretrain(model: WMFM, train, val, cfg: TrainConfig, out_dir=None) -> PretrainResult:
    """Self-supervised symmetric-InfoNCE pretraining of both encoders and projection heads.

    Only channel/image pairs are read: labelled splits are wrapped in an
    unlabeled view first, so any label access raises. The last incomplete
    batch of each epoch is dropped. Noise from ``cfg.noise`` is drawn fresh
    for every training batch and once (fixed seed) for validation.
    """
    train = train.unlabeled() if hasattr(train, "unlabeled") else train
    val = val.unlabeled() if hasattr(val, "unlabeled") else val
    n, N = len(train), cfg.batch_size
    if cfg.epochs > 0 and n < N:
        raise TrainingError(f"training split has {n} records, fewer than one batch of {N}")
    if len(val) < 2:
        raise TrainingError("validation split needs at least 2 records")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    val_view = val.with_channels(_maybe_noise(val.H, cfg.noise, _seq(cfg.seed, 3)))
    order_rng = np.random.default_rng(_seq(cfg.seed, 1))
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    sched = PlateauScheduler(cfg.lr, cfg.plateau_factor, cfg.plateau_patience)
    runlog, steps = RunLog(PRETRAIN_FIELDS), []
    meta = {"train_config": cfg.to_dict()}

    initial = contrastive_eval(model, val_view, cfg.temperature, N)["loss"]
    best_state, best_epoch, best_val = model.state_dict(), 0, initial
    sched.best = initial
    if out is not None:
        model.save(out / "init.ckpt", {**meta, "epoch": 0})

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        model.train()
        perm = order_rng.permutation(n)
        losses, mis = [], []
        for b in range(n // N):
            idx = np.sort(perm[b * N : (b + 1) * N])
            H = _maybe_noise(train.H[idx], cfg.noise, _seq(cfg.seed, 2, epoch, b))
            try:
                with Tape() as tape:
                    rep = contrastive_step(model, H, train.images[idx], cfg.temperature)
                grads = backward(tape, rep.loss_tensor, params)
            except NonFiniteError as exc:
                _dump_batch(out, epoch, b, idx, train.sample_seed[idx])
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: {exc}") from exc
            opt.step(grads)
            losses.append(rep.loss)
            mis.append(rep.mi_lower_bound)
            steps.append({"epoch": epoch, "batch": b, **rep.to_dict()})
        v = contrastive_eval(model, val_view, cfg.temperature, N)
        improved = v["loss"] < best_val
        if improved:
            best_state, best_epoch, best_val = model.state_dict(), epoch, v["loss"]
            if out is not None:
                model.save(out / "best.ckpt", {**meta, "epoch": epoch, "val_loss": v["loss"]})
        reduced = sched.step(v["loss"])
        opt.lr = sched.lr
        runlog.append(
            epoch=epoch, train_loss=float(np.mean(losses)), train_mi=float(np.mean(mis)),
            val_loss=v["loss"], val_mi=v["mi"], mean_pos_sim=v["mean_pos_sim"], mean_neg_sim=v["mean_neg_sim"],
            alignment=v["alignment"], uniformity=v["uniformity"], lr=sched.lr, lr_reduced=reduced,
            best=improved, epoch_seconds=time.perf_counter() - t0,
        )
        log.info("pretrain epoch %d train %.4f val %.4f lr %.1e", epoch, np.mean(losses), v["loss"], sched.lr)

    model.eval()
    res = PretrainResult(model, runlog, steps, initial, best_epoch, best_val)
    if out is not None:
        res.final_path = model.save(out / "final.ckpt", {**meta, "epoch": cfg.epochs})
        if best_epoch == 0:
            model.save(out / "best.ckpt", {**meta, "epoch": 0, "val_loss": initial})
        res.best_path = out / "best.ckpt"
        runlog.write(out / "runlog.jsonl")
        _write_jsonl(out / "steps.jsonl", steps)
    if cfg.restore_best:
        model.load_state_dict(best_state)
    return res


def _dump_batch(out, epoch, batch, idx, sample_seeds):
    info = {"epoch": epoch, "batch": batch, "indices": idx.tolist(), "sample_seeds": [int(s) for s in sample_seeds]}
    log.error("non-finite loss; offending batch %s", json.dumps(info))
    if out is not None:
        (out / "nonfinite_batch.json").write_text(json.dumps(info, indent=2))


# ---------------------------------------------------------------- adaptation


def stratified_subsample(labels, fraction, seed):
    """Seeded per-class draw of ``round(fraction * n)`` indices (largest-remainder quotas)."""
    labels = np.asarray(labels)
    n = len(labels)
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1:
        return np.arange(n)
    classes, counts = np.unique(labels, return_counts=True)
    total = int(round(fraction * n))
    raw = counts * fraction
    quota = np.floor(raw).astype(int)
    for k in np.argsort(-(raw - quota), kind="stable")[: total - quota.sum()]:
        quota[k] += 1
    rng = np.random.default_rng(seed)
    picked = [rng.choice(np.flatnonzero(labels == c), q, replace=False) for c, q in zip(classes, quota)]
    return np.sort(np.concatenate(picked))


def embed_split(model: WMFM, split, noise=NoiseSpec(), seed=0):
    """Fused [z_CAM ; z_CSI] encoder embeddings (eval mode, no gradients)."""
    H = _maybe_noise(split.H, noise, seed)
    return fuse(model.encode_image(split.images).z, model.encode_channel(H).z)


def _task_labels(task, split):
    return split.los.astype(np.int64) if task == "los" else split.lane_y.astype(np.int64)


class _Objective:
    """Task loss and validation score for one head given the training labels."""

    def __init__(self, task, train_split, scenario, cfg):
        if task not in TASKS:
            raise ValueError(f"unknown task '{task}' (expected one of {TASKS})")
        self.task, self.scenario = task, scenario
        if task == "los":
            self.focal = FocalConfig.from_labels(train_split.los, gamma=cfg.focal_gamma)
        else:
            self.weights = LocalizationWeights(*cfg.loc_weights)

    def loss(self, out, split, idx):
        if self.task == "los":
            return focal_loss(out, split.los[idx], self.focal)
        targets = [t[idx] for t in localization_targets(split, self.scenario.street_length)]
        return localization_loss(out, targets, self.weights)[0]

    def evaluate(self, head, z, split):
        if self.task == "los":
            m = evaluate_los(head, z, split.los, self.focal)
            return m["focal_loss"], m["balanced_accuracy"], m
        m = evaluate_localization(head, z, split, self.scenario, self.weights)
        return m["loss"], m["mean_distance"], m


@dataclass
class HeadResult:
    task: str
    head: object
    runlog: RunLog
    metrics: dict
    initial_val_loss: float
    best_epoch: int
    num_train_labels: int
    num_trainable: int
    checksum_before: str | None = None
    checksum_after: str | None = None
    head_path: Path | None = None
    extras: dict = field(default_factory=dict)

    @property
    def mean_epoch_seconds(self):
        t = self.runlog.column("epoch_seconds")
        return float(np.mean(t)) if t else float("nan")

    def summary(self):
        return {
            "task": self.task, "metrics": self.metrics, "initial_val_loss": self.initial_val_loss,
            "best_epoch": self.best_epoch, "num_train_labels": self.num_train_labels,
            "num_trainable": self.num_trainable, "checksum_before": self.checksum_before,
            "checksum_after": self.checksum_after, "mean_epoch_seconds": self.mean_epoch_seconds,
        }


def _supervised_loop(step_loss, params, n_train, val_fn, cfg, snapshot, restore, seed_key):
    """Shared minibatch loop with plateau schedule and best-on-validation tracking.

    ``step_loss(idx)`` builds the loss on the tape; ``val_fn()`` returns
    (val_loss, val_metric). Batches are shuffled and the last partial batch
    is kept.
    """
    opt = Adam(params, lr=cfg.lr)
    sched = PlateauScheduler(cfg.lr, cfg.plateau_factor, cfg.plateau_patience)
    order_rng = np.random.default_rng(_seq(cfg.seed, *seed_key))
    runlog = RunLog(HEAD_FIELDS)
    initial, _ = val_fn()
    sched.best = initial
    best = (snapshot(), 0, initial)
    N = cfg.batch_size
    for epoch in range(1, cfg.adapt_epochs + 1):
        t0 = time.perf_counter()
        perm = order_rng.permutation(n_train)
        losses, sizes = [], []
        for b, i in enumerate(range(0, n_train, N)):
            idx = np.sort(perm[i : i + N])
            try:
                with Tape() as tape:
                    loss = step_loss(idx)
                grads = backward(tape, loss, params)
            except NonFiniteError as exc:
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: {exc}") from exc
            opt.step(grads)
            losses.append(float(loss.data))
            sizes.append(len(idx))
        v_loss, v_metric = val_fn()
        improved = v_loss < best[2]
        if improved:
            best = (snapshot(), epoch, v_loss)
        reduced = sched.step(v_loss)
        opt.lr = sched.lr
        runlog.append(
            epoch=epoch, train_loss=float(np.dot(losses, sizes) / sum(sizes)), val_loss=float(v_loss),
            val_metric=float(v_metric), lr=sched.lr, lr_reduced=reduced, best=improved,
            epoch_seconds=time.perf_counter() - t0,
        )
    if cfg.restore_best:
        restore(best[0])
    return runlog, initial, best[1]


def _save_head(path, task, head, cfg, embed_dim, extra=None):
    meta = {
        "kind": "head", "task": task, "embed_dim": embed_dim, "hidden": cfg.head_hidden,
        "fusion": cfg.fusion, "dtype": cfg.dtype, "train_config": cfg.to_dict(), **(extra or {}),
    }
    return save_checkpoint(path, head.state_dict(), meta)


def load_head(path):
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "head":
        raise ValueError(f"{path}: not a task-head checkpoint")
    head = make_head(meta["task"], meta["embed_dim"], hidden=meta["hidden"], dtype=np.dtype(meta["dtype"]), fusion=meta["fusion"])
    head.load_state_dict(arrays)
    head.eval()
    return head, meta


def embedding_cache(model: WMFM, dataset, noise: NoiseSpec, seed):
    """Fused embeddings for every split, computed once; noise seeds differ per split."""
    return {name: embed_split(model, dataset[name], noise, _seq(seed, 4, k)) for k, name in enumerate(("train", "val", "test"))}


def adapt(task, checkpoint, dataset, cfg: TrainConfig, out_dir=None, cache=None) -> HeadResult:
    """Train a task head on frozen encoder embeddings.

    The encoders are only ever run in inference mode to fill the embedding
    cache; their checksum is taken before and after and must not change.
    ``label_fraction`` < 1 draws a seeded, class-stratified subset of the
    training labels.
    """
    model = _as_model(checkpoint)
    check_compatible(model, dataset.cfg)
    before = model.encoder_checksum()
    if cache is None:
        cache = embedding_cache(model, dataset, cfg.noise, cfg.seed)
    dt = np.dtype(cfg.dtype)
    keep = stratified_subsample(_task_labels(task, dataset.train), cfg.label_fraction, _seq(cfg.seed, 5))
    train = dataset.train.subset(keep)
    z_train, z_val, z_test = cache["train"][keep].astype(dt), cache["val"].astype(dt), cache["test"].astype(dt)

    obj = _Objective(task, train, dataset.cfg, cfg)
    head = make_head(task, model.cfg.embed_dim, seed=int(_seq(cfg.seed, 6).generate_state(1)[0]), hidden=cfg.head_hidden, dtype=dt, fusion=cfg.fusion)
    params = head.parameters()

    def step_loss(idx):
        head.train()
        return obj.loss(head(Tensor(z_train[idx])), train, idx)

    def val_fn():
        loss, metric, _ = obj.evaluate(head, z_val, dataset.val)
        return loss, metric

    runlog, initial, best_epoch = _supervised_loop(
        step_loss, params, len(train), val_fn, cfg, head.state_dict, head.load_state_dict, (7,)
    )
    head.eval()
    _, _, metrics = obj.evaluate(head, z_test, dataset.test)
    after = model.encoder_checksum()
    if after != before:
        raise TrainingError("encoder parameters changed during frozen adaptation")
    res = HeadResult(task, head, runlog, metrics, initial, best_epoch, len(train), sum(p.data.size for p in params), before, after)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        res.head_path = _save_head(out / "head.ckpt", task, head, cfg, model.cfg.embed_dim, {"encoder_checksum": before})
        runlog.write(out / "runlog.jsonl")
        (out / "metrics.json").write_text(json.dumps(res.summary(), indent=2, sort_keys=True))
    return res


def e2e_baseline(task, dataset, cfg: TrainConfig, out_dir=None, encoder_cfg: EncoderConfig | None = None) -> HeadResult:
    """Same encoders and head trained jointly from scratch on the supervised loss only."""
    enc_cfg = encoder_cfg or EncoderConfig.for_scenario(dataset.cfg, dtype=cfg.dtype)
    model = WMFM(enc_cfg, seed=cfg.seed)
    check_compatible(model, dataset.cfg)
    dt = model.dtype
    noisy = {
        name: _maybe_noise(dataset[name].H, cfg.noise, _seq(cfg.seed, 4, k))
        for k, name in enumerate(("train", "val", "test"))
    }
    keep = stratified_subsample(_task_labels(task, dataset.train), cfg.label_fraction, _seq(cfg.seed, 5))
    train = dataset.train.subset(keep)
    H_train = noisy["train"][keep]

    obj = _Objective(task, train, dataset.cfg, cfg)
    head = make_head(task, enc_cfg.embed_dim, seed=int(_seq(cfg.seed, 6).generate_state(1)[0]), hidden=cfg.head_hidden, dtype=dt, fusion=cfg.fusion)
    params = model.encoder_parameters() + head.parameters()

    def snapshot():
        return model.state_dict(), head.state_dict()

    def restore(state):
        model.load_state_dict(state[0])
        head.load_state_dict(state[1])

    def step_loss(idx):
        model.train()
        head.train()
        z = ops.concat([model.image_embed(train.images[idx]), model.channel_embed(H_train[idx])], axis=1)
        return obj.loss(head(z), train, idx)

    def scored(name):
        split = dataset[name].with_channels(noisy[name])
        return obj.evaluate(head, embed_split(model, split).astype(dt), dataset[name])

    def val_fn():
        loss, metric, _ = scored("val")
        return loss, metric

    runlog, initial, best_epoch = _supervised_loop(step_loss, params, len(train), val_fn, cfg, snapshot, restore, (8,))
    model.eval()
    head.eval()
    _, _, metrics = scored("test")
    res = HeadResult(task, head, runlog, metrics, initial, best_epoch, len(train), sum(p.data.size for p in params))
    res.extras["model"] = model
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        model.save(out / "encoders.ckpt", {"train_config": cfg.to_dict()})
        res.head_path = _save_head(out / "head.ckpt", task, head, cfg, enc_cfg.embed_dim)
        runlog.write(out / "runlog.jsonl")
        (out / "metrics.json").write_text(json.dumps(res.summary(), indent=2, sort_keys=True))
    return res


# ---------------------------------------------------------------- sweeps


def _write_csv(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def localization_error_at_snr(model, head, dataset, snr_db, seed, split="test"):
    """Mean Euclidean error (m) of a localization head under test-time noise at a fixed SNR."""
    spec = NoiseSpec() if snr_db is None else NoiseSpec(float(snr_db), 0.0)
    s = dataset[split]
    z = embed_split(model, s, spec, _seq(seed, 9)).astype(head.parameters()[0].dtype)
    return evaluate_localization(head, z, s, dataset.cfg)["mean_distance"]


def sweep_noise(entries, dataset, test_snrs, seeds=(0, 1, 2), out_csv=None):
    """Localization error for each (name, model, head) entry across test SNRs.

    Returns {name: array (len(seeds), len(test_snrs))}; the CSV holds one row
    per (model, SNR) with per-seed columns and their mean.
    """
    test_snrs = list(test_snrs)
    result = {}
    for name, model, head in entries:
        result[name] = np.array(
            [[localization_error_at_snr(model, head, dataset, snr, seed) for snr in test_snrs] for seed in seeds]
        )
    if out_csv is not None:
        write_noise_csv(result, test_snrs, seeds, out_csv)
    return result


def write_noise_csv(result, test_snrs, seeds, path):
    """One row per (model, SNR): per-seed errors and their mean."""
    header = ["model", "snr_db"] + [f"seed{s}" for s in seeds] + ["mean_distance"]
    rows = [
        [name, "none" if snr is None else snr] + [f"{v:.6f}" for v in m[:, j]] + [f"{m[:, j].mean():.6f}"]
        for name, m in result.items()
        for j, snr in enumerate(test_snrs)
    ]
    return _write_csv(path, header, rows)


def write_rows_csv(rows, path):
    """List of equal-keyed dicts -> CSV with the keys as header."""
    if not rows:
        raise ValueError("no rows to write")
    return _write_csv(path, list(rows[0]), [list(r.values()) for r in rows])


def sweep_data_efficiency(checkpoint, dataset, fractions, cfg: TrainConfig, out_csv=None, out_dir=None):
    """LoS head quality versus the fraction of training labels, on one shared embedding cache."""
    model = _as_model(checkpoint)
    cache = embedding_cache(model, dataset, cfg.noise, cfg.seed)
    rows = []
    for frac in fractions:
        sub = None if out_dir is None else Path(out_dir) / f"fraction_{frac:g}"
        res = adapt("los", model, dataset, _replace(cfg, label_fraction=float(frac)), sub, cache)
        m = res.metrics
        rows.append({
            "label_fraction": float(frac), "num_labels": res.num_train_labels,
            "balanced_accuracy": m["balanced_accuracy"], "accuracy": m["accuracy"],
            "f1_nlos": m["f1"][0], "f1_los": m["f1"][1], "focal_loss": m["focal_loss"],
        })
    if out_csv is not None and rows:
        write_rows_csv(rows, out_csv)
    return rows


def _replace(cfg, **kw):
    d = cfg.to_dict()
    d.update(kw)
    return TrainConfig.from_dict(d)
