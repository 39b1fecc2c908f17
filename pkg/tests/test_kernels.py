import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semrec import kernels

pytestmark = pytest.mark.skipif("numba" not in kernels.available_backends(),
                                reason="numba not installed")


def both(fn):
    with kernels.backend("numpy"):
        a = fn()
    with kernels.backend("numba"):
        b = fn()
    return a, b


def test_env_flag_selects_numpy(monkeypatch):
    monkeypatch.setenv("SEMREC_DISABLE_NUMBA", "1")
    assert kernels._default_backend() == "numpy"
    monkeypatch.setenv("SEMREC_DISABLE_NUMBA", "0")
    assert kernels._default_backend() == "numba"


def test_backend_context_restores():
    before = kernels.BACKEND
    with kernels.backend("numpy"):
        assert kernels.BACKEND == "numpy"
    assert kernels.BACKEND == before
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


@given(st.integers(1, 40), st.integers(1, 12), st.integers(0, 2**31))
def test_dots_agree(n, d, seed):
    rng = np.random.default_rng(seed)
    M, R = rng.standard_normal((n, d)), rng.standard_normal((3, d))
    a, b = both(lambda: kernels.batch_row_dots(M, R))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    a, b = both(lambda: kernels.row_dots(M, R[0]))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@given(st.integers(1, 30), st.integers(1, 35), st.integers(0, 2**31))
def test_topk_agree_with_ties_and_masks(n, k, seed):
    rng = np.random.default_rng(seed)
    # coarse scores force many exact ties
    scores = rng.integers(0, 4, size=(4, n)).astype(float)
    tie_rank = rng.permutation(n)
    masks = [rng.choice(n, size=rng.integers(0, n + 1), replace=False) for _ in range(4)]
    indptr = np.concatenate([[0], np.cumsum([m.size for m in masks])])
    indices = np.concatenate(masks).astype(np.int64)
    a, b = both(lambda: kernels.batch_topk(scores, indptr, indices, tie_rank, k))
    np.testing.assert_array_equal(a, b)
    for u in range(4):
        row = a[u][a[u] >= 0]
        assert row.size == min(k, n - masks[u].size)
        assert not set(row) & set(masks[u])
        keys = [(-scores[u, j], tie_rank[j]) for j in row]
        assert keys == sorted(keys)


@given(st.integers(3, 25), st.integers(1, 2), st.integers(0, 2**31))
def test_knn_agree(n, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(-1, 2, size=(n, 3)).astype(float)
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-12)
    tie_rank = np.arange(n)
    a, b = both(lambda: kernels.knn(X, k, tie_rank))
    np.testing.assert_array_equal(a, b)
    assert all(i not in a[i] for i in range(n))


def test_identical_rows_score_identically():
    # BLAS-backed matmul can split exact ties between equal rows; the kernels must not
    rng = np.random.default_rng(0)
    v = rng.standard_normal(384)
    M = np.tile(v, (9, 1))
    for name in kernels.available_backends():
        with kernels.backend(name):
            s = kernels.batch_row_dots(M, rng.standard_normal((5, 384)))
            assert (s == s[:, :1]).all()
