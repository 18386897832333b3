import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from foldkit.errors import DomainError, ShapeError
from foldkit.linalg import cosine_similarity, matmul, row_l2_norms, softmax_rows, svd

from oracles import jacobi_eigenvalues, matmul_loops, softmax_mp


def test_matmul_identity_and_hand_case():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(matmul(m, [[1.0], [1.0]]), [[3.0], [7.0]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(11)
    a, b = rng.standard_normal((5, 4)), rng.standard_normal((4, 3))
    np.testing.assert_allclose(matmul(a, b), matmul_loops(a.tolist(), b.tolist()), rtol=0, atol=1e-12)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_svd_diagonal():
    np.testing.assert_array_equal(svd(np.diag([2.0, 1.0])).sigma, [2.0, 1.0])
    np.testing.assert_allclose(svd(np.diag([1.0, -3.0])).sigma, [3.0, 1.0], atol=1e-12)


def test_svd_rank_one():
    u = np.array([1.0, -2.0, 2.0])
    v = np.array([3.0, 0.0, 4.0, 0.0])
    sigma = svd(np.outer(u, v)).sigma
    assert sigma[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), abs=1e-12)
    np.testing.assert_allclose(sigma[1:], 0.0, atol=1e-12)


def test_svd_matches_gram_eigenvalues():
    x = np.random.default_rng(3).standard_normal((8, 4))
    eig = jacobi_eigenvalues(x.T @ x)
    np.testing.assert_allclose(svd(x).sigma ** 2, eig, rtol=0, atol=1e-8)


def test_svd_rejects_non_finite():
    with pytest.raises(DomainError):
        svd(np.array([[1.0, np.nan]]))


def test_svd_is_deterministic():
    x = np.random.default_rng(5).standard_normal((9, 6))
    a, b = svd(x), svd(x)
    assert a.u.tobytes() == b.u.tobytes() and a.sigma.tobytes() == b.sigma.tobytes()


def _check_svd(x):
    u, s, vt = svd(x)
    assert len(s) == min(x.shape)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    rel = np.linalg.norm(x - (u * s) @ vt) / max(np.linalg.norm(x), 1e-30)
    assert rel <= 1e-9
    assert np.abs(u.T @ u - np.eye(u.shape[1])).max() <= 1e-9
    assert np.abs(vt @ vt.T - np.eye(vt.shape[0])).max() <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_svd_reconstruction_and_orthonormality(rows, cols, seed):
    _check_svd(np.random.default_rng(seed).standard_normal((rows, cols)))


def test_svd_rank_deficient_keeps_orthonormal_factors():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10, 3)) @ rng.standard_normal((3, 7))
    _check_svd(x)
    _check_svd(np.zeros((4, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_singular_values_invariant_under_permutation_and_rotation(rows, cols, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((rows, cols))
    q, _ = np.linalg.qr(rng.standard_normal((cols, cols)))
    base = svd(x).sigma
    np.testing.assert_allclose(svd(x[rng.permutation(rows)]).sigma, base, atol=1e-9)
    np.testing.assert_allclose(svd(x @ q).sigma, base, atol=1e-9)


def test_row_norms():
    np.testing.assert_array_equal(row_l2_norms([[3.0, 4.0]]), [5.0])
    np.testing.assert_array_equal(row_l2_norms(np.zeros((3, 2))), [0.0, 0.0, 0.0])
    x = np.random.default_rng(2).standard_normal((6, 3))
    expected = [sum(v * v for v in row) ** 0.5 for row in x.tolist()]
    np.testing.assert_allclose(row_l2_norms(x), expected, rtol=0, atol=1e-12)


def test_cosine_similarity_cases():
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(0.70710678, abs=1e-8)
    assert cosine_similarity([1, 0], [0, 0]) == 0.0
    with pytest.raises(ShapeError):
        cosine_similarity([1, 0], [1, 0, 0])


def test_softmax_cases():
    np.testing.assert_array_equal(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    out = softmax_rows(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(1.0) and out[0, 1] == pytest.approx(0.0)


def test_softmax_matches_high_precision_oracle():
    row = np.random.default_rng(4).standard_normal(9) * 3
    np.testing.assert_allclose(softmax_rows(row[None, :])[0], softmax_mp(row.tolist()), rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=8),
                  elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    out = softmax_rows(x)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert np.all(out >= 0)
