"""Time the numba kernels against the numpy fallback on a retrieval-sized workload.

    python benchmarks/bench_kernels.py [--items 20000] [--dim 384] [--users 512] [--k 20]

Each kernel is warmed up once (numba compiles on first call), then timed as
the best of --repeat runs. Outputs are cross-checked between backends.
"""

import argparse
import time

import numpy as np

from semrec import kernels


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def workload(n_items, dim, n_users, mask_size, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n_items, dim))
    M /= np.linalg.norm(M, axis=1, keepdims=True)
    R = rng.standard_normal((n_users, dim))
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    masks = [rng.choice(n_items, size=mask_size, replace=False) for _ in range(n_users)]
    indptr = np.concatenate([[0], np.cumsum([m.size for m in masks])])
    indices = np.concatenate(masks)
    tie_rank = np.arange(n_items)
    return M, R, indptr, indices, tie_rank


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--items", type=int, default=20000)
    ap.add_argument("--dim", type=int, default=384)
    ap.add_argument("--users", type=int, default=512)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--knn-items", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    M, R, indptr, indices, tie_rank = workload(args.items, args.dim, args.users, 10, args.seed)
    Xk = M[: args.knn_items]
    cases = {
        "batch_row_dots": lambda: kernels.batch_row_dots(M, R),
        "batch_topk": lambda: kernels.batch_topk(S, indptr, indices, tie_rank, args.k),
        "knn(k=10)": lambda: kernels.knn(Xk, 10, tie_rank[: args.knn_items]),
    }
    S = kernels.batch_row_dots(M, R)

    backends = kernels.available_backends()
    print(f"items={args.items} dim={args.dim} users={args.users} k={args.k} "
          f"knn_items={args.knn_items} backends={','.join(backends)}")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases.items():
        times, outs = {}, {}
        for b in backends:
            with kernels.backend(b):
                fn()  # warm-up / compile
                times[b], outs[b] = best_of(fn, args.repeat)
        if len(outs) == 2:
            a, b = outs["numpy"], outs["numba"]
            same = np.allclose(a, b, atol=1e-12) if a.dtype.kind == "f" else np.array_equal(a, b)
            if not same:
                print(f"  warning: {name} outputs differ between backends")
        row = f"{name:<16}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
        if "numba" in times:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
