import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wmfm.datagen import ScenarioConfig
from wmfm.diffcore import Tape, Tensor, backward, ops
from wmfm.downstream import (
    FocalConfig,
    LocalizationWeights,
    classification_metrics,
    cross_entropy,
    evaluate_los,
    focal_loss,
    fuse,
    linear_probe_check,
    localization_loss,
    localization_metrics,
    make_head,
    metrics_from_confusion,
    write_confusion_csv,
)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 40), seed=st.integers(0, 2**31 - 1))
def test_focal_without_focusing_is_cross_entropy(n, seed):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((n, 2)) * 3
    labels = rng.integers(0, 2, n)
    a = float(focal_loss(logits, labels, FocalConfig(gamma=0.0, alpha=(1.0, 1.0))).data)
    b = float(cross_entropy(logits, labels).data)
    assert abs(a - b) <= 1e-12


def test_focal_hand_value():
    # p_true = 0.5: 0.25 * ln 2
    v = float(focal_loss(np.zeros((1, 2)), [1], FocalConfig(gamma=2.0)).data)
    assert v == pytest.approx(0.25 * math.log(2), abs=1e-15)
    assert v == pytest.approx(0.173287, abs=1e-6)


def test_focal_confident_correct_is_near_zero():
    assert float(focal_loss(np.array([[-30.0, 30.0]]), [1]).data) < 1e-20


def test_focal_rejects_bad_labels():
    with pytest.raises(ValueError):
        focal_loss(np.zeros((2, 2)), [0, 2])
    with pytest.raises(ValueError):
        focal_loss(np.zeros((2, 2)), [0.5, 1])
    with pytest.raises(ValueError):
        FocalConfig(gamma=-1.0)


def test_alpha_from_labels_is_inverse_frequency_with_mean_one():
    cfg = FocalConfig.from_labels(np.array([1] * 90 + [0] * 10))
    assert np.mean(cfg.alpha) == pytest.approx(1.0)
    assert cfg.alpha[0] / cfg.alpha[1] == pytest.approx(9.0)


def test_balanced_accuracy_from_confusion():
    m = metrics_from_confusion([[85, 15], [4, 96]])
    assert m["balanced_accuracy"] == pytest.approx(0.905, abs=1e-12)
    assert m["recall"] == pytest.approx([0.85, 0.96])


def test_predict_all_los_on_skewed_split():
    y = np.array([1] * 935 + [0] * 65)
    m = classification_metrics(y, np.ones_like(y))
    assert m["accuracy"] == pytest.approx(0.935) and m["balanced_accuracy"] == pytest.approx(0.5)


def test_all_correct_predictions():
    y = np.array([0, 1, 1, 0, 1])
    m = classification_metrics(y, y)
    assert m["accuracy"] == m["balanced_accuracy"] == 1.0
    assert m["precision"] == m["recall"] == m["f1"] == [1.0, 1.0]


@pytest.mark.parametrize("k", [2, 4, 9])
def test_constant_classifier_is_chance(k):
    y = np.repeat(np.arange(k), 10)
    assert classification_metrics(y, np.zeros_like(y), k)["balanced_accuracy"] == pytest.approx(1 / k)


def test_empty_split_rejected():
    with pytest.raises(ValueError, match="empty"):
        classification_metrics([], [])
    head = make_head("los", 4)
    with pytest.raises(ValueError, match="empty"):
        evaluate_los(head, np.zeros((0, 8)), np.zeros(0, int), FocalConfig())


def test_confusion_csv(tmp_path):
    p = write_confusion_csv(np.array([[3, 1], [2, 7]]), tmp_path / "cm.csv")
    assert p.read_text().splitlines() == ["true\\pred,nLoS,LoS", "nLoS,3,1", "LoS,2,7"]


def _loc(x_pred, y_pred, z_pred, x_true, y_true, z_true):
    cfg = ScenarioConfig()
    return localization_metrics(x_pred, y_pred, z_pred, x_true, y_true, z_true, cfg.lane_y_centers, cfg.z_centroids())


def test_localization_geometry():
    x, y, z = np.array([10.0, 50.0]), np.array([0, 2]), np.array([3, 5])
    perfect = _loc(x, y, z, x, y, z)
    assert perfect["mean_distance"] == 0.0 and perfect["y_accuracy"] == perfect["z_accuracy"] == 1.0
    off_x = _loc(x + 3.0, y, z, x, y, z)
    assert off_x["mean_distance"] == pytest.approx(3.0) and off_x["x_mae"] == pytest.approx(3.0)
    off_lane = _loc(x, np.array([1, 3]), z, x, y, z)
    assert off_lane["mean_distance"] == pytest.approx(4.0)


def _perfect_logits(labels, k):
    out = np.full((len(labels), k), -1e3)
    out[np.arange(len(labels)), labels] = 1e3
    return out


def test_localization_loss_perfect_and_masking(rng):
    lane, zc = np.array([0, 3]), np.array([1, 8])
    x = np.array([0.2, 0.7])
    total, terms = localization_loss((x, _perfect_logits(lane, 4), _perfect_logits(zc, 9)), (x, lane, zc))
    assert float(total.data) == 0.0 and terms == {"x": 0.0, "y": 0.0, "z": 0.0}
    preds = (rng.uniform(0, 1, 2), rng.standard_normal((2, 4)), rng.standard_normal((2, 9)))
    only_x, t = localization_loss(preds, (x, lane, zc), LocalizationWeights(1.0, 0.0, 0.0))
    assert float(only_x.data) == pytest.approx(t["x"], abs=1e-15)
    full, t = localization_loss(preds, (x, lane, zc), LocalizationWeights(2.0, 0.5, 3.0))
    assert float(full.data) == pytest.approx(2 * t["x"] + 0.5 * t["y"] + 3 * t["z"], abs=1e-12)


def test_localization_loss_toy_by_hand():
    x_pred, x_true = np.array([0.5, 0.1]), np.array([0.3, 0.4])
    y_logits = np.zeros((2, 4))  # uniform: ln 4 per sample
    z_logits = np.zeros((2, 9))
    z_logits[0, 2] = math.log(2.0)  # p = 2/10 for the true class 2
    total, terms = localization_loss((x_pred, y_logits, z_logits), (x_true, np.array([1, 2]), np.array([2, 0])))
    mse = (0.2**2 + 0.3**2) / 2
    ce_y = math.log(4)
    ce_z = (-math.log(2 / 10) - math.log(1 / 9)) / 2
    assert terms["x"] == pytest.approx(mse, abs=1e-15)
    assert terms["y"] == pytest.approx(ce_y, abs=1e-15)
    assert terms["z"] == pytest.approx(ce_z, abs=1e-15)
    assert float(total.data) == pytest.approx(mse + ce_y + ce_z, abs=1e-14)


def test_localization_weights_validation():
    with pytest.raises(ValueError):
        LocalizationWeights(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        LocalizationWeights(0.0, 0.0, 0.0)


@pytest.mark.parametrize("fusion", ["transformer", "gate"])
def test_los_head_shapes_and_permutation(rng, fusion):
    head = make_head("los", 8, seed=1, fusion=fusion)
    head.eval()
    z = rng.standard_normal((10, 16))
    out = head(Tensor(z)).data
    assert out.shape == (10, 2)
    perm = rng.permutation(10)
    np.testing.assert_allclose(head(Tensor(z[perm])).data, out[perm], atol=1e-12)


def test_los_head_uses_both_modalities(rng):
    head = make_head("los", 8, seed=2)
    head.eval()
    z = rng.standard_normal((5, 16))
    z0 = z.copy()
    z0[:, 8:] = 0.0
    assert not np.allclose(head(Tensor(z)).data, head(Tensor(z0)).data)
    with pytest.raises(ValueError, match="fused embedding"):
        head(Tensor(z[:, :12]))


def test_localization_head_shapes_and_determinism(rng):
    head = make_head("loc", 8, seed=0)
    head.eval()
    z = rng.standard_normal((7, 16)) * 5
    x, y, zz = head(Tensor(z))
    assert x.shape == (7,) and y.shape == (7, 4) and zz.shape == (7, 9)
    assert np.all(np.isfinite(x.data))
    assert np.array_equal(head(Tensor(z))[0].data, x.data)
    with pytest.raises(ValueError):
        make_head("segmentation", 8)


def test_fuse_orders_camera_first():
    cam, csi = np.ones((2, 3)), np.zeros((2, 3))
    np.testing.assert_array_equal(fuse(cam, csi)[:, :3], cam)
    with pytest.raises(ValueError):
        fuse(cam, csi[:, :2])


def test_probe_rejects_constant_labels(rng):
    with pytest.raises(ValueError, match="two classes"):
        linear_probe_check(rng.standard_normal((20, 4)), np.zeros(20, int))


def test_probe_on_random_embeddings_is_chance():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((4000, 16))
    y = np.tile(np.arange(4), 1000)
    rep = linear_probe_check(z, y, steps=150)
    assert abs(rep.accuracy - 0.25) <= 0.05 and rep.num_classes == 4


def test_probe_separates_linearly_separable_classes(rng):
    y = rng.integers(0, 3, 300)
    z = np.eye(3)[y] * 3 + 0.1 * rng.standard_normal((300, 3))
    assert linear_probe_check(z, y).accuracy >= 0.98


def test_head_gradients_reach_all_head_params(rng):
    head = make_head("loc", 4, seed=0, hidden=8)
    with Tape() as tape:
        x, y, z = head(Tensor(rng.standard_normal((6, 8))))
        loss = ops.add(ops.add(ops.sum(x), ops.sum(y)), ops.sum(z))
    grads = backward(tape, loss)
    assert {id(p) for p in head.parameters()} == {id(p) for p in grads}
