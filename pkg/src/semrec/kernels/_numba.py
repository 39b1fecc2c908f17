"""numba-compiled kernels mirroring ``_numpy`` one for one."""

import os

import numpy as np
from numba import config, njit, prange

# skip the TBB probe (and its version warning) unless the user picked a layer
if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER = "workqueue"


@njit(cache=True, nogil=True)
def _dot(a, b):
    acc = 0.0
    for t in range(a.shape[0]):
        acc += a[t] * b[t]
    return acc


@njit(cache=True, nogil=True)
def row_dots(M, r):
    n = M.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _dot(M[i], r)
    return out


@njit(cache=True, parallel=True)
def batch_row_dots(M, R):
    n_users = R.shape[0]
    n = M.shape[0]
    out = np.empty((n_users, n))
    for u in prange(n_users):
        for i in range(n):
            out[u, i] = _dot(M[i], R[u])
    return out


@njit(cache=True, nogil=True)
def _select(scores, excluded, tie_rank, k, out_idx):
    # bounded insertion sort; order is (score desc, tie_rank asc)
    buf_s = np.empty(k)
    buf_r = np.empty(k, dtype=np.int64)
    m = 0
    for j in range(scores.shape[0]):
        if excluded[j]:
            continue
        s = scores[j]
        rk = tie_rank[j]
        if m == k:
            if s < buf_s[m - 1] or (s == buf_s[m - 1] and rk > buf_r[m - 1]):
                continue
            pos = m - 1
        else:
            pos = m
            m += 1
        while pos > 0 and (buf_s[pos - 1] < s or (buf_s[pos - 1] == s and buf_r[pos - 1] > rk)):
            buf_s[pos] = buf_s[pos - 1]
            buf_r[pos] = buf_r[pos - 1]
            out_idx[pos] = out_idx[pos - 1]
            pos -= 1
        buf_s[pos] = s
        buf_r[pos] = rk
        out_idx[pos] = j
    return m


@njit(cache=True, nogil=True)
def topk_masked(scores, excluded, tie_rank, k):
    out = np.empty(k, dtype=np.int64)
    m = _select(scores, excluded, tie_rank, k, out)
    return out[:m].copy()


@njit(cache=True, parallel=True)
def batch_topk(scores, mask_indptr, mask_indices, tie_rank, k):
    n_users, n = scores.shape
    out = np.full((n_users, k), -1, dtype=np.int64)
    for u in prange(n_users):
        excluded = np.zeros(n, dtype=np.bool_)
        for p in range(mask_indptr[u], mask_indptr[u + 1]):
            excluded[mask_indices[p]] = True
        _select(scores[u], excluded, tie_rank, k, out[u])
    return out


@njit(cache=True, parallel=True)
def knn(Xn, k, tie_rank):
    n = Xn.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in prange(n):
        s = np.empty(n)
        excluded = np.zeros(n, dtype=np.bool_)
        excluded[i] = True
        for j in range(n):
            s[j] = _dot(Xn[j], Xn[i])
        _select(s, excluded, tie_rank, k, out[i])
    return out
