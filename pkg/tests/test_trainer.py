import math

import numpy as np
import pytest

import wmfm.trainer as trainer
from conftest import small_encoder
from wmfm.datagen import NoiseSpec, ScenarioConfig
from wmfm.diffcore import NonFiniteError
from wmfm.model import WMFM
from wmfm.trainer import (
    PlateauScheduler,
    RunLog,
    TrainConfig,
    TrainingError,
    adapt,
    e2e_baseline,
    load_head,
    pretrain,
    stratified_subsample,
    sweep_data_efficiency,
    sweep_noise,
)

LABEL_FIELDS = {"los", "pos_x", "lane_y", "z_class", "bs_id"}


def _cfg(**kw):
    base = dict(batch_size=16, epochs=3, adapt_epochs=3, dtype="float64", head_hidden=8)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def pretrained(small_ds, tmp_path_factory):
    out = tmp_path_factory.mktemp("pre")
    model = WMFM(small_encoder(), seed=0)
    res = pretrain(model, small_ds.train, small_ds.val, _cfg(epochs=15), out)
    return res, out


def test_plateau_reduces_once_after_patience():
    s = PlateauScheduler(1e-3, factor=0.1, patience=5)
    assert not s.step(1.0)
    fired = [s.step(1.0) for _ in range(6)]
    assert fired == [False, False, False, False, True, False]
    assert s.reductions == 1 and s.lr == pytest.approx(1e-4)


def test_plateau_counter_resets_on_strict_improvement():
    s = PlateauScheduler(1e-3, patience=3)
    s.step(1.0)
    s.step(1.0)
    s.step(1.0)
    assert s.counter == 2
    s.step(0.9)
    assert s.counter == 0
    for _ in range(2):
        s.step(0.95)
    assert s.reductions == 0 and s.lr == 1e-3


def test_train_config_validation():
    for bad in (dict(temperature=0), dict(batch_size=1), dict(lr=0), dict(label_fraction=0),
                dict(label_fraction=1.5), dict(plateau_patience=0), dict(dtype="float16"), dict(loc_weights=(0, 0, 0))):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    cfg = TrainConfig(noise={"mean_snr_db": 20, "std_snr_db": 10})
    assert cfg.noise == NoiseSpec(20.0, 10.0)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_runlog_schema_and_round_trip(tmp_path):
    log = RunLog(("epoch", "loss", "epoch_seconds"))
    log.append(epoch=1, loss=0.5, epoch_seconds=1.2)
    with pytest.raises(ValueError, match="missing"):
        log.append(epoch=2, loss=0.4)
    with pytest.raises(ValueError, match="increase"):
        log.append(epoch=1, loss=0.4, epoch_seconds=1.0)
    back = RunLog.read(log.write(tmp_path / "r.jsonl"))
    assert back.records == log.records and back.without_timing() == [{"epoch": 1, "loss": 0.5}]


def test_pretrain_learns_and_writes_checkpoints(pretrained):
    res, out = pretrained
    assert res.runlog.column("train_loss")[-1] < math.log(16)
    assert res.runlog.column("val_loss")[-1] < res.initial_val_loss
    for name in ("init.ckpt", "best.ckpt", "final.ckpt", "runlog.jsonl", "steps.jsonl"):
        assert (out / name).exists()
    for step in res.steps:
        assert abs(step["mi_lower_bound"] + step["loss"] - math.log(16)) <= 1e-12


def test_pretrain_is_reproducible(small_ds, pretrained, tmp_path):
    res, out = pretrained
    again = pretrain(WMFM(small_encoder(), seed=0), small_ds.train, small_ds.val, _cfg(epochs=15), tmp_path)
    assert again.runlog.without_timing() == res.runlog.without_timing()
    assert (tmp_path / "final.ckpt").read_bytes() == (out / "final.ckpt").read_bytes()


class _LabelSpy:
    """Pair-only view that records every attribute the trainer touches."""

    def __init__(self, split, seen):
        self._split, self._seen = split, seen

    def __len__(self):
        return len(self._split)

    def __getattr__(self, name):
        self._seen.add(name)
        if name in LABEL_FIELDS:
            raise AssertionError(f"label field '{name}' read during pretraining")
        if name == "with_channels":
            return lambda H: _LabelSpy(self._split.with_channels(H), self._seen)
        if name == "unlabeled":
            raise AttributeError(name)
        return getattr(self._split, name)


def test_pretraining_never_reads_labels(small_ds):
    seen = set()
    pretrain(WMFM(small_encoder(), seed=1), _LabelSpy(small_ds.train, seen), _LabelSpy(small_ds.val, seen), _cfg(epochs=1))
    assert {"H", "images"} <= seen and not seen & LABEL_FIELDS


def test_pretrain_rejects_tiny_split(small_ds):
    with pytest.raises(TrainingError, match="fewer than one batch"):
        pretrain(WMFM(small_encoder(), seed=0), small_ds.train.subset(np.arange(8)), small_ds.val, _cfg())


def test_non_finite_loss_dumps_batch(small_ds, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NonFiniteError("exp produced inf")

    monkeypatch.setattr(trainer, "contrastive_step", boom)
    with pytest.raises(TrainingError, match="epoch 1, batch 0"):
        pretrain(WMFM(small_encoder(), seed=0), small_ds.train, small_ds.val, _cfg(), tmp_path)
    dump = (tmp_path / "nonfinite_batch.json").read_text()
    assert '"sample_seeds"' in dump and '"indices"' in dump


def test_stratified_subsample_exact_counts():
    labels = np.array([1] * 935 + [0] * 65)
    idx = stratified_subsample(labels, 0.2, seed=0)
    assert len(idx) == 200
    assert np.sum(labels[idx] == 0) == 13 and np.sum(labels[idx] == 1) == 187
    assert np.array_equal(idx, stratified_subsample(labels, 0.2, seed=0))
    assert len(np.unique(idx)) == len(idx)
    assert np.array_equal(stratified_subsample(labels, 1.0, 0), np.arange(1000))
    with pytest.raises(ValueError):
        stratified_subsample(labels, 0.0, 0)


@pytest.mark.parametrize("task", ["los", "loc"])
def test_adapt_keeps_encoders_frozen(pretrained, small_ds, tmp_path, task):
    res, out = pretrained
    head_res = adapt(task, out / "final.ckpt", small_ds, _cfg(), tmp_path)
    assert head_res.checksum_before == head_res.checksum_after
    assert head_res.checksum_before == WMFM.load(out / "final.ckpt")[0].encoder_checksum()
    head, meta = load_head(tmp_path / "head.ckpt")
    assert meta["task"] == task and meta["encoder_checksum"] == head_res.checksum_before
    assert len(head_res.runlog) == 3


def test_adapt_label_fraction(pretrained, small_ds):
    res, out = pretrained
    r = adapt("los", out / "final.ckpt", small_ds, _cfg(label_fraction=0.2))
    assert r.num_train_labels == round(0.2 * len(small_ds.train))


def test_adapt_rejects_mismatched_checkpoint(small_ds):
    other = WMFM(small_encoder(ScenarioConfig(subcarriers=16)), seed=0)
    with pytest.raises(ValueError, match="subcarriers"):
        adapt("los", other, small_ds, _cfg())


def test_e2e_matches_frozen_setup_at_init(small_ds):
    cfg = _cfg(adapt_epochs=1)
    enc = small_encoder()
    e2e = e2e_baseline("los", small_ds, cfg, encoder_cfg=enc)
    frozen = adapt("los", WMFM(enc, seed=cfg.seed), small_ds, cfg)
    n_enc = sum(p.data.size for p in e2e.extras["model"].encoder_parameters())
    assert e2e.num_trainable == n_enc + frozen.num_trainable
    assert e2e.initial_val_loss == pytest.approx(frozen.initial_val_loss, rel=1e-12)


def test_adaptation_epochs_are_faster_than_e2e(pretrained, small_ds):
    res, out = pretrained
    cfg = _cfg(adapt_epochs=2)
    head = adapt("los", out / "final.ckpt", small_ds, cfg)
    e2e = e2e_baseline("los", small_ds, cfg, encoder_cfg=small_encoder())
    assert head.mean_epoch_seconds < e2e.mean_epoch_seconds


def test_sweeps_write_csv(pretrained, small_ds, tmp_path):
    res, out = pretrained
    model = WMFM.load(out / "final.ckpt")[0]
    head = adapt("loc", model, small_ds, _cfg()).head
    errs = sweep_noise([("clean", model, head)], small_ds, [0.0, None], seeds=(0, 1), out_csv=tmp_path / "n.csv")
    assert errs["clean"].shape == (2, 2) and np.all(np.isfinite(errs["clean"]))
    assert (tmp_path / "n.csv").read_text().splitlines()[0] == "model,snr_db,seed0,seed1,mean_distance"
    rows = sweep_data_efficiency(model, small_ds, [0.5, 1.0], _cfg(), out_csv=tmp_path / "d.csv")
    assert [r["num_labels"] for r in rows] == [60, 120]
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 3
