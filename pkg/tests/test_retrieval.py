import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_encoder
from wmfm.model import CAM, CSI, WMFM
from wmfm.retrieval import (
    PairedEmbeddings,
    embed_pairs,
    export_embeddings,
    pair_similarity_histogram,
    read_embeddings,
    retrieval_table,
    topk_retrieval,
)


def _random_pairs(n, d, seed, num_bs=4):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, n, d))
    z /= np.linalg.norm(z, axis=2, keepdims=True)
    return PairedEmbeddings(z[0], z[1], np.arange(n) % num_bs, np.arange(n))


@pytest.fixture(scope="module")
def untrained(small_ds):
    return embed_pairs(WMFM(small_encoder(), seed=0), small_ds.test)


def test_full_gallery_is_always_a_hit():
    emb = _random_pairs(30, 6, 0)
    assert topk_retrieval(CAM, 30, emb) == 1.0 and topk_retrieval(CSI, 30, emb) == 1.0


def test_random_embeddings_are_at_chance():
    emb = _random_pairs(4000, 16, 1)
    for q in (CAM, CSI):
        assert abs(topk_retrieval(q, 1, emb) - 0.25) <= 0.05


def test_k_outside_gallery_rejected():
    emb = _random_pairs(10, 4, 0)
    for k in (0, 11):
        with pytest.raises(ValueError, match="gallery"):
            topk_retrieval(CAM, k, emb)
    with pytest.raises(ValueError):
        topk_retrieval("radar", 1, emb)


def test_perfectly_aligned_pairs_retrieve_their_own_bs():
    emb = _random_pairs(40, 32, 2)
    emb = PairedEmbeddings(emb.csi, emb.csi.copy(), emb.bs_id, emb.record_ids)
    assert topk_retrieval(CAM, 1, emb) == 1.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(8, 60))
def test_accuracy_non_decreasing_in_k(seed, n):
    emb = _random_pairs(n, 5, seed)
    for q in (CAM, CSI):
        accs = [topk_retrieval(q, k, emb) for k in range(1, n + 1)]
        assert all(b >= a for a, b in zip(accs, accs[1:]))


def test_retrieval_table_layout(untrained):
    t = retrieval_table(untrained)
    assert set(t["channel"]) == set(t["image"]) == {"1", "2", "5"}
    assert t["num_queries"] == len(untrained) and t["num_bs"] == 4


def test_untrained_histogram_shows_no_separation(untrained):
    h = pair_similarity_histogram(untrained)
    assert abs(h["summary"]["separation"]) < 0.2


def test_histogram_ranges_and_disjoint_pairs(untrained, tmp_path):
    h = pair_similarity_histogram(untrained, num_negatives=500, csv_path=tmp_path / "h.csv")
    sims = np.concatenate([h["positive"], h["negative"]])
    assert np.all(sims >= -1) and np.all(sims <= 1)
    pairs = h["negative_pairs"]
    assert np.all(pairs[:, 0] != pairs[:, 1])
    assert len({tuple(p) for p in pairs}) == len(pairs) == 500
    assert h["positive_counts"].sum() == len(untrained) and h["negative_counts"].sum() == 500
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["kind", "i", "j", "similarity"] and len(rows) == 1 + len(untrained) + 500


def test_histogram_caps_negatives_at_available_pairs():
    h = pair_similarity_histogram(_random_pairs(3, 4, 0), num_negatives=100)
    assert h["summary"]["num_neg"] == 6


def test_export_round_trip(small_ds, tmp_path):
    model = WMFM(small_encoder(dtype="float32"), seed=0)
    path = export_embeddings(model, small_ds.val, tmp_path / "e.csv")
    lines = path.read_text().splitlines()
    assert len(lines) - 1 == 2 * len(small_ds.val)
    assert lines[0].split(",")[:4] == ["record_id", "modality", "bs_id", "z0"]
    assert lines[1].split(",")[:2] == ["0", CSI] and lines[2].split(",")[:2] == ["0", CAM]
    back = read_embeddings(path)
    ref = embed_pairs(model, small_ds.val)
    assert ref.csi.dtype == np.float32
    np.testing.assert_array_equal(back.csi.astype(np.float32), ref.csi)
    np.testing.assert_array_equal(back.cam.astype(np.float32), ref.cam)
    np.testing.assert_array_equal(back.bs_id, small_ds.val.bs_id)
    for z in (back.csi, back.cam):
        assert np.all(np.abs(np.linalg.norm(z, axis=1) - 1.0) <= 1e-6)


def test_read_rejects_unpaired_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("record_id,modality,bs_id,z0\n0,CSI,1,0.5\n")
    with pytest.raises(ValueError, match="both"):
        read_embeddings(p)
