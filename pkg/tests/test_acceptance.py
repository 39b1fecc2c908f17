"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see only these lines.
"""

import hashlib
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from semrec import kernels
from semrec.bench import (
    STANDARD_VARIANTS,
    SyntheticSpec,
    brute_force_oracle,
    degrade_representation,
    generate_synthetic,
    synthetic_view,
)
from semrec.corpus import user_history
from semrec.encoding import EmbeddingTable, ModalityBundle, normalize
from semrec.fusion import BPRBatch, InfoNCEBatch, fuse_table, gradient_check, init_model
from semrec.fusion.graph import build_knn_graph, spectral_radius
from semrec.grounding import GroundingPrompt, SemanticCache, StubGroundingService, build_semantic_cache
from semrec.metrics import evaluate_run, hit_at_k, ndcg_at_k, recall_at_k
from semrec.retrieval import build_profile, mask_for, recommend_users

CLOCK = lambda: "2024-01-01T00:00:00+00:00"  # noqa: E731


@pytest.fixture
def verdict(capsys):
    def report(n: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title} ({detail})")
        assert ok, detail
    return report


def recall10(log, table, truth) -> float:
    run = recommend_users(log, table, log.users_in("train"), 10)
    return evaluate_run(run.recommendations, truth, (10,)).means["Recall@10"]


def small_spec(seed: int) -> SyntheticSpec:
    # isotropic noise keeps exact score ties out of the picture
    return SyntheticSpec(n_users=50, n_items=200, dim=16, latent_dim=16, sigma=0.3, seed=seed)


def test_c01_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    checked = mismatches = 0
    for backend in kernels.available_backends():
        with kernels.backend(backend):
            for seed in range(5):
                data = generate_synthetic(small_spec(seed))
                users = data.log.users_in("train")
                hists = {u: user_history(data.log, u) for u in users}
                profiles = {u: build_profile(h, data.table) for u, h in hists.items()}
                masks = {u: mask_for(data.log, h) for u, h in hists.items()}
                for K in (1, 5, 10, 20):
                    engine = recommend_users(data.log, data.table, users, K).recommendations
                    oracle = brute_force_oracle(profiles, data.table, masks, K)
                    for u in users:
                        checked += 1
                        mismatches += engine[u].items != oracle[u].items
    elapsed = time.perf_counter() - t0
    verdict(1, "engine top-K equals brute-force oracle", mismatches == 0 and elapsed < 10.0,
            f"{checked} lists over {kernels.available_backends()}, {mismatches} mismatches, {elapsed:.2f}s")


def test_c02_normalization_invariants(verdict):
    rng = np.random.default_rng(2)
    worst_idem = worst_scale = 0.0
    for _ in range(10_000):
        d = int(rng.integers(1, 65))
        v = rng.standard_normal(d) * 10.0 ** rng.uniform(-5, 5)
        c = 10.0 ** rng.uniform(-6, 6)
        n = normalize(v)
        worst_idem = max(worst_idem, np.max(np.abs(normalize(n) - n)))
        worst_scale = max(worst_scale, np.max(np.abs(normalize(c * v) - n)))
    zero_ok = all(np.array_equal(normalize(np.zeros(d)), np.zeros(d)) for d in (1, 16, 384))
    ok = worst_idem <= 1e-6 and worst_scale <= 1e-6 and zero_ok
    verdict(2, "normalize idempotent, scale invariant, zero to zero", ok,
            f"idempotence {worst_idem:.1e}, scale {worst_scale:.1e}, zero ok={zero_ok}")


def test_c03_ranking_scale_invariance(verdict):
    rng = np.random.default_rng(3)
    lists = changed = 0
    for seed in range(5):
        data = generate_synthetic(small_spec(seed))
        scales = 10.0 ** rng.uniform(-3, 3, size=len(data.table))
        scaled = EmbeddingTable(data.table.ids, data.table.matrix * scales[:, None])
        users = data.log.users_in("train")
        K = len(data.table)  # full ranking
        a = recommend_users(data.log, data.table, users, K).recommendations
        b = recommend_users(data.log, scaled, users, K).recommendations
        for u in users:
            lists += 1
            changed += a[u].items != b[u].items
    verdict(3, "ranked lists unchanged by per-row positive scaling", changed == 0,
            f"{lists} full rankings compared, {changed} changed")


def test_c04_metric_hand_cases(verdict):
    exact = [
        recall_at_k(["a", "b"], {"a", "b"}, 2) == 1.0,
        recall_at_k(["x", "y"], {"a", "b"}, 2) == 0.0,
        recall_at_k(["a", "x", "y"], {"a", "b"}, 3) == 0.5,
        hit_at_k(["x", "a"], {"a"}, 1) == 0.0,
        hit_at_k(["x", "a"], {"a"}, 2) == 1.0,
        ndcg_at_k(["a", "b"], {"a", "b"}, 2) == 1.0,
    ]
    nd = ndcg_at_k(["a", "x", "b"], {"a", "b"}, 3)

    rng = np.random.default_rng(4)
    pool = [f"i{k}" for k in range(30)]
    violations = 0
    for _ in range(1000):
        ranked = list(rng.choice(pool, size=int(rng.integers(1, 21)), replace=False))
        truth = set(rng.choice(pool, size=int(rng.integers(1, 8)), replace=False))
        for f, start in ((recall_at_k, 1), (hit_at_k, 1), (ndcg_at_k, len(truth))):
            vals = [f(ranked, truth, K) for K in range(max(start, 1), 26)]
            violations += any(b < a - 1e-12 for a, b in zip(vals, vals[1:]))
    ok = all(exact) and abs(nd - 0.91973) <= 1e-5 and violations == 0
    verdict(4, "metric hand cases and monotonicity in K", ok,
            f"{sum(exact)}/{len(exact)} exact cases, NDCG@3={nd:.6f}, "
            f"{violations} violations on 1000 pairs (NDCG checked for K >= |truth|)")


def test_c05_gradient_check(verdict):
    rng = np.random.default_rng(5)
    worst_nce = 0.0
    for b in range(20):
        kind = ("gating", "attention")[b % 2]
        d_t, d_v, B = int(rng.integers(3, 9)), int(rng.integers(3, 9)), int(rng.integers(2, 9))
        model = init_model(kind, d_t, d_v, seed=b)
        model = model.with_params(model.params + 0.1 * rng.standard_normal(model.params.size))
        batch = InfoNCEBatch(model, rng.standard_normal((B, d_t)), rng.standard_normal((B, d_v)),
                             rng.standard_normal((B, d_t)), rng.standard_normal((B, d_v)), 0.07)
        worst_nce = max(worst_nce, gradient_check("infonce", model.params, batch, 1e-5))
    worst_bpr = 0.0
    for b in range(20):
        n, d, B = int(rng.integers(8, 20)), int(rng.integers(2, 8)), int(rng.integers(2, 10))
        lens = rng.integers(1, 6, size=B)
        indptr = np.concatenate([[0], np.cumsum(lens)])
        batch = BPRBatch(rng.standard_normal((n, d)), indptr, rng.integers(0, n, size=indptr[-1]),
                         rng.integers(0, n, size=B), rng.integers(0, n, size=B), 0.01)
        worst_bpr = max(worst_bpr, gradient_check("bpr", 0.1 * rng.standard_normal(n * d), batch, 1e-5))
    verdict(5, "analytic gradients match central differences", max(worst_nce, worst_bpr) < 1e-4,
            f"max rel err InfoNCE {worst_nce:.1e}, BPR {worst_bpr:.1e} over 20 batches each")


def test_c06_training_determinism(verdict, tmp_path):
    digests = {}
    for variant in ("gating-title", "attention-grounded"):
        for run in ("a", "b"):
            out = tmp_path / f"{variant}-{run}"
            subprocess.run([sys.executable, "-m", "semrec.cli", "fuse-train", "--variant", variant,
                            "--seed", "7", "--out", str(out)], check=True, capture_output=True)
            digests[variant, run] = hashlib.sha256((out / "params.semv").read_bytes()).hexdigest()
    same = [digests[v, "a"] == digests[v, "b"] for v in ("gating-title", "attention-grounded")]
    verdict(6, "two fuse-train runs give bit-identical parameters", all(same),
            f"gating {same[0]}, attention {same[1]} (separate processes, seed 7)")


def test_c07_synthetic_recovery(verdict):
    t0 = time.perf_counter()
    scores = []
    for seed in range(5):
        data = generate_synthetic(SyntheticSpec(seed=seed))
        scores.append(recall10(data.log, data.table, data.truth))
    elapsed = time.perf_counter() - t0
    spec = SyntheticSpec()
    chance = 10 / (spec.n_items - spec.interactions_per_user)
    mean = float(np.mean(scores))
    verdict(7, "synthetic Recall@10 >= 0.9 over 5 seeds", mean >= 0.9 and elapsed < 30.0,
            f"mean {mean:.4f} vs chance {chance:.4f}, {elapsed:.2f}s")


def test_c08_degradation_dominates(verdict):
    # low-rank taste axes so that truncation removes real signal; the second
    # modality is a faithful but noisy view, fixed across degradation levels
    d = 64
    levels = (d, d // 4, d // 16)
    plain = {lv: [] for lv in levels}
    concat = {lv: [] for lv in levels}
    for seed in range(5):
        data = generate_synthetic(SyntheticSpec(dim=d, latent_dim=3, seed=seed))
        vision = synthetic_view(data.table, 32, 0.003, seed=seed)
        for lv in levels:
            text = degrade_representation(data.table, "truncate_dims", lv)
            plain[lv].append(recall10(data.log, text, data.truth))
            fused = fuse_table(init_model("concat", lv, vision.dim), ModalityBundle(text, vision)).table
            concat[lv].append(recall10(data.log, fused, data.truth))
    p = [float(np.mean(plain[lv])) for lv in levels]
    c = [float(np.mean(concat[lv])) for lv in levels]
    ok = p[0] >= p[1] >= p[2] and c[0] >= c[1] >= c[2]
    fmt = lambda xs: " > ".join(f"{x:.3f}" for x in xs)  # noqa: E731
    verdict(8, "Recall@10 non-increasing over d, d/4, d/16", ok,
            f"plain {fmt(p)}; concat {fmt(c)}")


def test_c09_knn_graph_contract(verdict):
    rng = np.random.default_rng(9)
    bad_rows = asym = 0
    rho_max = 0.0
    for seed in range(10):
        table = EmbeddingTable([f"i{k:03d}" for k in range(100)], rng.standard_normal((100, 16)))
        g = build_knn_graph(table, k=10)
        for r, nb in enumerate(g.neighbors):
            bad_rows += len(set(nb.tolist())) != 10 or r in nb
        asym += (g.adjacency != g.adjacency.T).nnz
        rho_max = max(rho_max, spectral_radius(g.weights))
    ok = bad_rows == 0 and asym == 0 and rho_max <= 1 + 1e-6
    verdict(9, "kNN graph k=10, symmetric, spectral radius <= 1", ok,
            f"10 graphs of 100 items, {bad_rows} bad rows, {asym} asymmetric entries, "
            f"max radius {rho_max:.9f}")


def _tree_digest(root: Path) -> dict[str, str]:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_c10_end_to_end_cli(verdict, tmp_path):
    # an unroutable proxy makes any accidental network access fail loudly
    env = {**os.environ, "HTTP_PROXY": "http://127.0.0.1:9", "HTTPS_PROXY": "http://127.0.0.1:9"}
    timings, trees = [], []
    for run in ("first", "second"):
        out = tmp_path / run
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-m", "semrec.cli", "run-all", "--out", str(out)],
                       check=True, capture_output=True, env=env)
        timings.append(time.perf_counter() - t0)
        trees.append(_tree_digest(out))
    out = tmp_path / "first"
    reports = sorted(p.stem for p in (out / "reports").glob("*.json"))
    plots = sorted(p.name for p in (out / "plots").glob("*.csv"))
    table_rows = (out / "table1.csv").read_text().splitlines()
    ok = (reports == sorted(STANDARD_VARIANTS) and len(table_rows) == len(STANDARD_VARIANTS) + 1
          and plots == ["fullset_bars.csv", "heatmap.csv", "metric_profile.csv"]
          and max(timings) < 60.0 and trees[0] == trees[1])
    verdict(10, "run-all on the fixture, byte-identical rerun", ok,
            f"{len(reports)} reports, {len(plots)} plot CSVs, {len(trees[0])} files, "
            f"identical={trees[0] == trees[1]}, {timings[0]:.1f}s / {timings[1]:.1f}s")


def test_c11_grounding_cache(verdict, tmp_path):
    items = [(f"i{k}", f"http://img/{k}.jpg") for k in range(20)]
    prompt = GroundingPrompt()

    svc = StubGroundingService()
    build_semantic_cache(items, prompt, svc, SemanticCache.open(tmp_path / "ok"), clock=CLOCK)
    first_calls = svc.calls
    svc.calls = 0
    again = build_semantic_cache(items, prompt, svc, SemanticCache.open(tmp_path / "ok"), clock=CLOCK)
    second_calls = svc.calls
    second_ok = second_calls == 0 and len(again.skipped) == len(items)

    failing = {"http://img/3.jpg": 503, "http://img/11.jpg": 415}
    svc = StubGroundingService(failures=failing)
    res = build_semantic_cache(items, prompt, svc, SemanticCache.open(tmp_path / "mixed"),
                               sleep=lambda s: None, clock=CLOCK)
    reopened = SemanticCache.open(tmp_path / "mixed")
    clean = SemanticCache.open(tmp_path / "ok")
    ph = prompt.hash(svc.model_id)
    survivors = [i for i, _ in items if i not in {"i3", "i11"}]
    intact = (reopened.coverage() == set(survivors) and len(res.failures) == 2
              and all(reopened.get(i, ph).description == clean.get(i, ph).description for i in survivors))
    verdict(11, "second cache pass is free, failures leave successes intact",
            second_ok and intact,
            f"{first_calls} calls then {second_calls} on rerun, "
            f"{len(res.failures)} failures, {len(survivors)} successes kept")
