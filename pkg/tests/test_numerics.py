import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmtemb.errors import DimensionError, NumericalError
from mmtemb.numerics import (
    cosine_similarity,
    dense_ops,
    finite_difference_gradient,
    jacobi_eigh,
    pca_top_components,
    relative_error,
    softmax,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_dense_ops_examples():
    assert np.array_equal(dense_ops(np.zeros(2), kind="tanh").data, [0.0, 0.0])
    assert np.array_equal(dense_ops(np.array([1.0, 2.0]), np.array([3.0]), kind="concat").data, [1, 2, 3])
    assert np.array_equal(dense_ops(np.array([[1.0, 3.0], [3.0, 5.0]]), kind="mean").data, [2, 4])


def test_dense_ops_affine_and_hadamard():
    x = np.array([[1.0, 2.0]])
    W = np.array([[1.0, 0.0], [0.5, -1.0], [2.0, 2.0]])
    out = dense_ops(x, W, kind="affine", bias=np.array([0.0, 1.0, -1.0])).data
    assert np.allclose(out, [[1.0, -0.5, 5.0]])
    assert np.array_equal(dense_ops(np.array([1.0, 2.0]), np.array([3.0, 4.0]), kind="hadamard").data, [3, 8])


def test_dense_ops_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2,\).*\(3,\)"):
        dense_ops(np.zeros(2), np.zeros(3), kind="hadamard")
    with pytest.raises(DimensionError):
        dense_ops(np.zeros((1, 2)), np.zeros((3, 4)), kind="affine")


def test_softmax_examples():
    assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    out = softmax([1000.0, 0.0])
    assert np.isfinite(out).all() and out[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        softmax([])


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_softmax_sums_to_one_and_preserves_order(z):
    p = softmax(z)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p >= 0)
    for i in range(len(z)):
        for j in range(len(z)):
            if z[i] > z[j]:
                assert p[i] >= p[j]


def test_cosine_examples():
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1], [2, 2]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [-3, 0]) == pytest.approx(-1.0)
    with pytest.raises(NumericalError):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(DimensionError):
        cosine_similarity([1, 0], [1, 0, 0])


@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_cosine_bounded_and_symmetric(a, b):
    if np.linalg.norm(a) == 0 or np.linalg.norm(b) == 0:
        return
    c = cosine_similarity(a, b)
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(cosine_similarity(b, a), abs=1e-12)


@given(st.integers(1, 9), st.integers(0, 2**31))
def test_jacobi_matches_numpy_eigh(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    a = m + m.T
    vals, vecs = jacobi_eigh(a)
    ref = np.linalg.eigh(a)[0]
    assert np.allclose(np.sort(vals), ref, atol=1e-9)
    assert np.allclose(a @ vecs, vecs * vals, atol=1e-8)
    assert np.allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)


def test_jacobi_rejects_non_symmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_pca_axis_aligned():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(400, 3)) * np.array([5.0, 1.0, 0.1])
    basis = pca_top_components(x, 2)
    assert abs(basis.components[0] @ [1, 0, 0]) > 0.999
    assert abs(basis.components[1] @ [0, 1, 0]) > 0.99


@given(st.integers(2, 8), st.integers(0, 2**31))
def test_pca_basis_invariants(dim, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, dim)) @ rng.normal(size=(dim, dim))
    basis = pca_top_components(x, dim)
    u = basis.components
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-10)
    off = u @ u.T - np.eye(dim)
    assert np.abs(off).max() < 1e-8
    assert np.all(np.diff(basis.eigenvalues) <= 1e-12)
    assert np.all(basis.eigenvalues >= 0)
    # deterministic sign: first non-negligible coordinate positive
    for row in u:
        nz = row[np.abs(row) > 1e-12]
        assert nz[0] > 0


def test_pca_component_count_checks():
    x = np.ones((5, 3))
    assert len(pca_top_components(x, 0)) == 0
    with pytest.raises(ValueError):
        pca_top_components(x, 4)


def test_pca_matches_numpy_eigh_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(60, 6)) @ rng.normal(size=(6, 6))
    x -= x.mean(axis=0)
    vals, vecs = np.linalg.eigh(x.T @ x / (len(x) - 1))
    basis = pca_top_components(x, 3)
    for i in range(3):
        assert abs(basis.components[i] @ vecs[:, -1 - i]) == pytest.approx(1.0, abs=1e-9)
        assert basis.eigenvalues[i] == pytest.approx(vals[-1 - i], rel=1e-9)


def test_finite_differences_on_known_functions():
    g = finite_difference_gradient(lambda x: float(np.sum(x ** 3)), np.array([1.0, -2.0]))
    assert np.allclose(g, [3.0, 12.0], atol=1e-6)
    assert finite_difference_gradient(lambda x: np.sin(x), 0.3) == pytest.approx(np.cos(0.3), abs=1e-9)
    params = {"a": np.array([2.0]), "b": np.array([[1.0, 3.0]])}
    g = finite_difference_gradient(lambda p: float(p["a"][0] * p["b"].sum()), params)
    assert np.allclose(g["a"], [4.0]) and np.allclose(g["b"], [[2.0, 2.0]])
    assert np.array_equal(params["b"], [[1.0, 3.0]])


def test_relative_error():
    assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert relative_error([0.0], [1e-12]) < 1e-4
    assert relative_error([1.0], [2.0]) == pytest.approx(0.5)
