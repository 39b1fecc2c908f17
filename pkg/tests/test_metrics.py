import itertools
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from semrec.errors import ConfigError, EmptyTruth
from semrec.metrics import (
    MetricReport,
    evaluate_run,
    hit_at_k,
    improvement_pct,
    ndcg_at_k,
    recall_at_k,
    table_csv,
)


def exhaustive_ndcg(ranked, truth, K):
    """DCG over the ideal ranking found by trying every arrangement of a small pool."""
    dcg = lambda lst: sum(1 / math.log2(r + 2) for r, i in enumerate(lst[:K]) if i in truth)  # noqa
    pool = list(truth) + [f"_pad{j}" for j in range(K)]
    best = max(dcg(list(p)) for p in itertools.permutations(pool, min(K, len(pool))))
    return dcg(ranked) / best


def test_recall_cases():
    assert recall_at_k(["a", "z"], {"a", "b", "c"}, 2) == pytest.approx(1 / 3)
    assert recall_at_k(["a", "b", "c"], {"a", "b"}, 3) == 1.0
    assert recall_at_k(["x", "y"], {"a"}, 2) == 0.0


def test_recall_denominator_is_truth_size():
    assert recall_at_k(["a"], {"a", "b", "c", "d"}, 1) == 0.25


def test_ndcg_hand_case():
    assert ndcg_at_k(["a", "x", "b"], {"a", "b"}, 3) == pytest.approx(0.91973, abs=1e-5)
    assert ndcg_at_k(["a", "x", "b"], {"a", "b"}, 3) == pytest.approx(
        exhaustive_ndcg(["a", "x", "b"], {"a", "b"}, 3), abs=1e-12)


def test_ndcg_ideal_and_zero():
    assert ndcg_at_k(["a", "b"], {"a", "b", "c"}, 2) == 1.0
    assert ndcg_at_k(["x", "y"], {"a"}, 2) == 0.0


def test_hit_boundaries():
    assert hit_at_k(["x", "y", "a"], {"a"}, 3) == 1.0
    assert hit_at_k(["x", "y", "a"], {"a"}, 2) == 0.0


def test_errors():
    for fn in (recall_at_k, ndcg_at_k, hit_at_k):
        with pytest.raises(EmptyTruth):
            fn(["a"], set(), 1)
        with pytest.raises(ConfigError):
            fn(["a"], {"a"}, 0)


def test_ndcg_truncated_idcg_is_not_monotone_in_k():
    # with IDCG cut at min(K, |truth|), a short prefix can score higher than a longer one
    assert ndcg_at_k(["a", "x"], {"a", "b"}, 1) == 1.0
    assert ndcg_at_k(["a", "x"], {"a", "b"}, 2) < 1.0


items = st.sampled_from(list("abcdefghij"))
ranked_lists = st.lists(items, min_size=1, max_size=10, unique=True)
truths = st.sets(items, min_size=1, max_size=5)


@given(ranked_lists, truths, st.integers(1, 9))
def test_monotone_in_k(ranked, truth, K):
    assert recall_at_k(ranked, truth, K) <= recall_at_k(ranked, truth, K + 1)
    assert hit_at_k(ranked, truth, K) <= hit_at_k(ranked, truth, K + 1)
    if K >= len(truth):
        assert ndcg_at_k(ranked, truth, K) <= ndcg_at_k(ranked, truth, K + 1) + 1e-12


@given(ranked_lists, truths, st.integers(1, 10))
def test_bounds_and_recall_le_hit(ranked, truth, K):
    r, n, h = recall_at_k(ranked, truth, K), ndcg_at_k(ranked, truth, K), hit_at_k(ranked, truth, K)
    assert 0 <= r <= h <= 1 and 0 <= n <= 1 + 1e-12
    if r > 0:
        assert h == 1.0


@given(ranked_lists, truths, st.integers(1, 4))
def test_matches_exhaustive_oracle(ranked, truth, K):
    assert ndcg_at_k(ranked, truth, K) == pytest.approx(exhaustive_ndcg(ranked, truth, K), abs=1e-12)


@given(truths, st.integers(1, 6), st.randoms())
def test_ndcg_one_when_prefix_relevant(truth, K, rnd):
    m = min(K, len(truth))
    rel = sorted(truth)
    rnd.shuffle(rel)
    ranked = rel[:m] + [f"z{j}" for j in range(3)]
    assert ndcg_at_k(ranked, truth, K) == pytest.approx(1.0)


@given(ranked_lists, truths, st.integers(1, 5), st.randoms())
def test_invariant_below_rank_k(ranked, truth, K, rnd):
    tail = ranked[K:]
    rnd.shuffle(tail)
    other = ranked[:K] + tail
    for fn in (recall_at_k, ndcg_at_k, hit_at_k):
        assert fn(ranked, truth, K) == fn(other, truth, K)


def test_evaluate_single_user():
    rep = evaluate_run({"u": ["a", "x", "y", "z", "w"]}, {"u": {"a", "b"}}, (5, 10))
    assert rep.mean("recall", 5) == 0.5 and rep.mean("recall", 10) == 0.5
    assert rep.n_evaluated == 1


def test_evaluate_population_std():
    rep = evaluate_run({"u1": ["a"], "u2": ["x"]}, {"u1": {"a"}, "u2": {"a"}}, (1,))
    assert rep.means["Recall@1"] == 0.5 and rep.stds["Recall@1"] == 0.5


def test_evaluate_exclusions():
    rep = evaluate_run({"u1": ["a"], "u3": ["a"]}, {"u1": {"a"}, "u2": {"a"}, "u3": set()}, (1,),
                       excluded={"cold_profile": ["u9"]})
    assert rep.n_evaluated == 1
    assert rep.excluded == {"cold_profile": ["u9"], "no_recommendation": ["u2"], "no_truth": ["u3"]}
    assert rep.n_excluded == 3


def test_report_json_roundtrip():
    rep = evaluate_run({"u1": ["a", "b"]}, {"u1": {"b"}}, (1, 2), "v")
    again = MetricReport.from_dict(json.loads(rep.to_json()))
    assert again.to_json() == rep.to_json()


def test_table_csv_carries_headline_row():
    base = MetricReport("text-title", (5, 10, 20), {}, {"Recall@10": 0.228}, {}, 1)
    best = MetricReport("text-grounded", (5, 10, 20), {}, {"Recall@10": 0.354}, {}, 1)
    lines = table_csv([best, base], "text-title").splitlines()
    assert lines[0].startswith("Model,Recall@5,Recall@10,Recall@20,NDCG@10,NDCG@20,Hit@10")
    assert lines[1].split(",")[2] == "0.354"
    # computed from rounded inputs: 55.3%, not the 54.9% printed alongside the published row
    assert lines[1].endswith("+55.3%")
    assert lines[2].endswith("baseline")
    assert improvement_pct(0.354, 0.228) == pytest.approx(55.263, abs=1e-3)
