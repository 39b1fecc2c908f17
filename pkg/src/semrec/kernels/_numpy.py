"""Pure-numpy reference kernels.

Row dot products use an elementwise multiply and a per-row reduction rather
than BLAS so that identical rows always produce bit-identical scores, which
the ascending-id tie rule depends on.
"""

import numpy as np


def row_dots(M, r):
    return (M * r).sum(axis=1)


def batch_row_dots(M, R):
    out = np.empty((R.shape[0], M.shape[0]))
    for u in range(R.shape[0]):
        out[u] = (M * R[u]).sum(axis=1)
    return out


def topk_masked(scores, excluded, tie_rank, k):
    cand = np.flatnonzero(~excluded)
    order = np.lexsort((tie_rank[cand], -scores[cand]))
    return cand[order[:k]].astype(np.int64)


def batch_topk(scores, mask_indptr, mask_indices, tie_rank, k):
    n_users, n = scores.shape
    out = np.full((n_users, k), -1, dtype=np.int64)
    excluded = np.zeros(n, dtype=np.bool_)
    for u in range(n_users):
        excluded[:] = False
        excluded[mask_indices[mask_indptr[u]:mask_indptr[u + 1]]] = True
        top = topk_masked(scores[u], excluded, tie_rank, k)
        out[u, : top.size] = top
    return out


def knn(Xn, k, tie_rank):
    n = Xn.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    excluded = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        s = (Xn * Xn[i]).sum(axis=1)
        excluded[i] = True
        out[i] = topk_masked(s, excluded, tie_rank, k)
        excluded[i] = False
    return out
