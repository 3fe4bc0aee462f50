import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmtemb.debias import (
    DebiasMethod,
    all_but_the_top,
    hubness_report,
    k_nearest_neighbors,
    localized_centering,
    skewness,
)
from mmtemb.embedding_io import SPECIALS, EmbeddingTable, PretrainedEmbeddings, Vocabulary
from mmtemb.numerics import pca_top_components

from oracles import naive_all_but_the_top, naive_k_occurrence, naive_knn, naive_localized_centering


def line_points():
    return PretrainedEmbeddings(["a", "b", "c"], np.array([[0.0], [1.0], [5.0]]))


def test_knn_on_a_line():
    emb = line_points()
    assert k_nearest_neighbors(emb, 0, 1, "euclidean") == [1]
    assert k_nearest_neighbors(emb, 0, 2, "euclidean") == [1, 2]


def test_knn_k_too_large():
    with pytest.raises(ValueError):
        k_nearest_neighbors(line_points(), 0, 3, "euclidean")
    with pytest.raises(ValueError):
        k_nearest_neighbors(line_points(), 0, 0, "euclidean")


def test_knn_ties_prefer_lower_id():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert k_nearest_neighbors(x, 0, 3, "euclidean") == [1, 2, 3]


@pytest.mark.parametrize("metric", ["cosine", "euclidean"])
def test_knn_matches_exhaustive_scan(metric):
    x = np.random.default_rng(5).normal(size=(200, 10))
    for q in range(0, 200, 7):
        assert k_nearest_neighbors(x, q, 10, metric) == naive_knn(x, q, 10, metric)


def test_knn_excludes_specials_for_tables():
    vocab = Vocabulary(list(SPECIALS) + ["a", "b", "c"])
    m = np.zeros((7, 2))
    m[1:4] = [[1.0, 0.0], [1.0, 0.01], [1.0, 0.02]]  # specials right next to "a"
    m[4:] = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.1]]
    table = EmbeddingTable(vocab, m)
    assert k_nearest_neighbors(table, 4, 2) == [5, 6]


def test_localized_centering_triangle():
    a = np.array([1.0, 0.0])
    b = np.array([-0.5, np.sqrt(3) / 2])
    c = -a - b
    out = localized_centering(np.array([a, b, c]), k=2)
    assert np.allclose(out[0], 1.5 * a, atol=1e-12)


def test_localized_centering_two_clusters():
    x = np.array([[10.0, 0.0], [10.0, 1.0], [-10.0, 0.0], [-10.0, 1.0]])
    out = localized_centering(x, k=1, metric="euclidean")
    assert np.allclose(out, [[0, -1], [0, 1], [0, -1], [0, 1]])


def test_localized_centering_uses_original_table():
    x = np.random.default_rng(0).normal(size=(30, 4))
    out = localized_centering(x, k=5)
    assert np.allclose(out, naive_localized_centering(x, 5), atol=1e-12)


def test_default_hyperparameters():
    m = DebiasMethod("localized_centering")
    assert (m.k, m.d) == (10, 3)
    with pytest.raises(ValueError):
        DebiasMethod("whitening")
    with pytest.raises(ValueError):
        DebiasMethod("all_but_the_top", d=-1)


@given(st.integers(0, 10**6), st.integers(0, 6))
def test_abtt_removes_components(seed, d):
    x = np.random.default_rng(seed).normal(size=(40, 6)) * np.arange(1, 7) + 3.0
    out = all_but_the_top(x, d)
    centered = x - x.mean(axis=0)
    basis = pca_top_components(centered, d)
    if d:
        assert np.abs(out @ basis.components.T).max() < 1e-8
    assert np.allclose(out, naive_all_but_the_top(x, d), atol=1e-10)


def test_abtt_endpoints():
    x = np.random.default_rng(1).normal(size=(50, 5)) + 2.0
    assert np.abs(all_but_the_top(x, 0).mean(axis=0)).max() < 1e-10
    assert np.abs(all_but_the_top(x, 5)).max() < 1e-8
    with pytest.raises(ValueError):
        all_but_the_top(x, 6)


def test_abtt_table_keeps_pad_zero_and_excludes_specials():
    rng = np.random.default_rng(2)
    vocab = Vocabulary(list(SPECIALS) + [f"w{i}" for i in range(20)])
    m = rng.normal(size=(24, 4))
    m[1:4] = 100.0  # would dominate the mean if included
    out = all_but_the_top(EmbeddingTable(vocab, m), 1)
    assert np.all(out.matrix[0] == 0)
    assert np.allclose(out.matrix[4:], naive_all_but_the_top(m[4:], 1), atol=1e-10)
    assert isinstance(out, EmbeddingTable)


def test_debias_preserves_words():
    emb = PretrainedEmbeddings([f"w{i}" for i in range(15)], np.random.default_rng(0).normal(size=(15, 3)))
    out = DebiasMethod("all_but_the_top", d=1).apply(emb)
    assert out.words == emb.words
    assert DebiasMethod("none").apply(emb) is emb


def test_hubness_square_corners():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    rep = hubness_report(x, 2, "euclidean")
    assert list(rep.n_k) == [2, 2, 2, 2]
    assert rep.skewness == 0.0


def test_hubness_planted_hub():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(50, 8)) + 1.0
    x = np.vstack([pts, pts.mean(axis=0)])
    rep = hubness_report(x, 5, "cosine")
    assert rep.top_hubs(1)[0][0] == "50"
    assert rep.n_k[50] > np.delete(rep.n_k, 50).max()
    assert list(rep.n_k) == naive_k_occurrence(x, 5, "cosine")


@given(st.integers(0, 10**6), st.integers(4, 30), st.integers(1, 3))
def test_hubness_total_is_k_times_vocab(seed, n, k):
    x = np.random.default_rng(seed).normal(size=(n, 3))
    rep = hubness_report(x, k)
    assert rep.n_k.sum() == k * n
    assert np.all(rep.n_k >= 0)


def test_hubness_small_vocab_flag_and_json():
    rep = hubness_report(np.array([[1.0, 0.0], [0.0, 1.0]]), 1)
    assert not rep.skewness_defined and rep.skewness == 0.0
    doc = json.loads(hubness_report(line_points(), 1, "euclidean").to_json())
    assert set(doc) == {"k", "skewness", "top_hubs"}
    assert doc["top_hubs"][0] == {"word": "b", "n_k": 2}


def test_skewness_population_moment():
    v = np.array([1.0, 2.0, 3.0, 10.0])
    c = v - v.mean()
    assert skewness(v) == pytest.approx(np.mean(c ** 3) / np.mean(c ** 2) ** 1.5)
    assert skewness([4, 4, 4]) == 0.0


def test_parallel_blocks_match_serial(monkeypatch):
    x = np.random.default_rng(9).normal(size=(700, 6))
    serial = hubness_report(x, 10).n_k
    monkeypatch.setenv("MMT_THREADS", "3")
    assert np.array_equal(hubness_report(x, 10).n_k, serial)
