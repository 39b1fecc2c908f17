"""Hot retrieval kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``SEMREC_DISABLE_NUMBA`` is set to a non-empty value other than
``0``. ``set_backend`` switches at runtime (tests and benchmarks use it).

All kernels take float64 C-contiguous arrays and int64 index arrays; ordering
is score descending with ``tie_rank`` ascending as the tie-break.
"""

import os
from contextlib import contextmanager

import numpy as np

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # numba missing or broken
    numba_impl = None

_IMPLS = {"numpy": numpy_impl, "numba": numba_impl}


def _default_backend() -> str:
    flag = os.environ.get("SEMREC_DISABLE_NUMBA", "")
    if flag not in ("", "0") or numba_impl is None:
        return "numpy"
    return "numba"


BACKEND = _default_backend()


def available_backends() -> list[str]:
    return [name for name, impl in _IMPLS.items() if impl is not None]


def set_backend(name: str) -> None:
    global BACKEND
    if _IMPLS.get(name) is None:
        raise ValueError(f"backend {name!r} is not available")
    BACKEND = name


@contextmanager
def backend(name: str):
    prev = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def row_dots(M, r):
    return _IMPLS[BACKEND].row_dots(_f64(M), _f64(r))


def batch_row_dots(M, R):
    return _IMPLS[BACKEND].batch_row_dots(_f64(M), _f64(R))


def topk_masked(scores, excluded, tie_rank, k: int):
    excluded = np.ascontiguousarray(excluded, dtype=np.bool_)
    return _IMPLS[BACKEND].topk_masked(_f64(scores), excluded, _i64(tie_rank), int(k))


def batch_topk(scores, mask_indptr, mask_indices, tie_rank, k: int):
    """Top-k per row of ``scores``; rows are padded with -1 when short of k."""
    return _IMPLS[BACKEND].batch_topk(
        _f64(scores), _i64(mask_indptr), _i64(mask_indices), _i64(tie_rank), int(k)
    )


def knn(Xn, k: int, tie_rank):
    return _IMPLS[BACKEND].knn(_f64(Xn), int(k), _i64(tie_rank))
