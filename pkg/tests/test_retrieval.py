import math
from fractions import Fraction

import pytest

from tempo_score import (
    RankedEntry,
    RetrievalQuery,
    balanced_accuracy,
    ir_metrics,
    logstop,
    parse_formula,
    retrieve,
    stl_retrieve,
)

from conftest import prob_trace

NEG_INF = float("-inf")


def brute_force_best(trace, query: RetrievalQuery) -> float:
    """Exhaustive max over all grid-aligned admissible spans."""
    best = NEG_INF
    for t_end in range(query.t_lo, trace.length + 1):
        t_start = max(1, t_end - query.t_hi + 1)
        for t in range(t_start, t_end + 1, query.window):
            if query.t_lo <= t_end - t + 1 <= query.t_hi:
                best = max(best, logstop(trace, query.phi, t, t_end, query.window))
    return best


def test_planted_certain_event_ranks_first():
    db = {
        "a": prob_trace({"p": [0.1, 0.1, 0.1]}, "a"),
        "b": prob_trace({"p": [0.1, 1.0, 0.1]}, "b"),
        "c": prob_trace({"p": [0.1, 0.1, 0.1]}, "c"),
    }
    ranking = retrieve(db, RetrievalQuery(parse_formula("F p"), 2, 2, 3, 1))
    assert ranking[0].trace_id == "b"
    assert ranking[0].score == 0.0


def test_best_span_is_reported():
    tr = prob_trace({"p": [0.9, 0.9, 0.5, 0.9]}, "t")
    (entry,) = retrieve({"t": tr}, RetrievalQuery(parse_formula("G p"), 2, 2, 1, 1))
    assert entry.span == (1, 2)
    assert entry.score == pytest.approx(2 * math.log(0.9), abs=1e-12)


def test_matches_brute_force(rng):
    zoo = [parse_formula(t) for t in ("G a", "F a", "a U b", "(a & b) U (F a)")]
    for _ in range(100):
        T = int(rng.integers(3, 16))
        tr = prob_trace({"a": rng.random(T), "b": rng.random(T)}, "x")
        w = int(rng.integers(1, 3))
        t_lo = int(rng.integers(w, T + 1))
        t_hi = int(rng.integers(t_lo, T + 1))
        query = RetrievalQuery(zoo[int(rng.integers(len(zoo)))], t_lo, t_hi, 1, w)
        (entry,) = retrieve({"x": tr}, query)
        want = brute_force_best(tr, query)
        if want == NEG_INF:
            assert entry.score == NEG_INF
        else:
            assert entry.score == pytest.approx(want, abs=1e-12)
        if entry.span:
            t, t_end = entry.span
            assert query.t_lo <= t_end - t + 1 <= query.t_hi
            assert entry.score == logstop(tr, query.phi, t, t_end, w)


def test_top_k_is_a_prefix_of_the_full_ranking(rng):
    db = {f"t{i}": prob_trace({"p": rng.random(8)}, f"t{i}") for i in range(6)}
    phi = parse_formula("F p")
    full = retrieve(db, RetrievalQuery(phi, 2, 4, 6, 1))
    for k in (1, 2, 5):
        assert retrieve(db, RetrievalQuery(phi, 2, 4, k, 1)) == full[:k]


def test_appending_timesteps_never_lowers_relevance(rng):
    phi = parse_formula("a U b")
    for _ in range(50):
        T = int(rng.integers(4, 10))
        a, b = rng.random(T + 3), rng.random(T + 3)
        short = prob_trace({"a": a[:T], "b": b[:T]}, "s")
        long = prob_trace({"a": a, "b": b}, "s")
        query = RetrievalQuery(phi, 2, 5, 1, 1)
        (entry_short,) = retrieve({"s": short}, query)
        (entry_long,) = retrieve({"s": long}, query)
        assert entry_long.score >= entry_short.score - 1e-12


def test_threaded_mapper_gives_identical_ranking(rng):
    from concurrent.futures import ThreadPoolExecutor

    db = {f"t{i}": prob_trace({"p": rng.random(12), "q": rng.random(12)}, f"t{i}") for i in range(7)}
    query = RetrievalQuery(parse_formula("p U q"), 3, 8, 7, 1)
    serial = retrieve(db, query)
    with ThreadPoolExecutor(max_workers=4) as pool:
        threaded = retrieve(db, query, mapper=pool.map)
    assert serial == threaded


def test_ties_break_by_ascending_id():
    probs = {"p": [0.5, 0.5, 0.5]}
    db = {name: prob_trace(probs, name) for name in ("zeta", "alpha", "mid")}
    ranking = retrieve(db, RetrievalQuery(parse_formula("F p"), 2, 2, 3, 1))
    assert [e.trace_id for e in ranking] == ["alpha", "mid", "zeta"]


def test_short_traces_rank_last_with_no_span():
    db = {
        "long": prob_trace({"p": [0.9] * 5}, "long"),
        "tiny": prob_trace({"p": [0.9]}, "tiny"),
    }
    ranking = retrieve(db, RetrievalQuery(parse_formula("F p"), 3, 4, 2, 1))
    assert ranking[0].trace_id == "long"
    assert ranking[1] == RankedEntry("tiny", NEG_INF, None)


def test_retrieval_validation():
    db = {"t": prob_trace({"p": [0.5, 0.5]}, "t")}
    phi = parse_formula("F p")
    with pytest.raises(ValueError):
        retrieve({}, RetrievalQuery(phi, 1, 2, 1, 1))
    with pytest.raises(ValueError):
        retrieve(db, RetrievalQuery(phi, 3, 4, 1, 1))  # every trace too short
    with pytest.raises(ValueError):
        RetrievalQuery(phi, 3, 2, 1, 1)
    with pytest.raises(ValueError):
        RetrievalQuery(phi, 2, 4, 0, 1)
    with pytest.raises(ValueError):
        RetrievalQuery(phi, 2, 4, 1, 3)  # window longer than shortest span


def test_stl_variant_ranks_planted_event_first():
    db = {
        "hit": prob_trace({"p": [0.1, 0.9, 0.9, 0.1]}, "hit"),
        "miss": prob_trace({"p": [0.1, 0.1, 0.1, 0.1]}, "miss"),
    }
    ranking = stl_retrieve(db, RetrievalQuery(parse_formula("G p"), 2, 2, 2, 1))
    assert [e.trace_id for e in ranking] == ["hit", "miss"]
    assert ranking[0].span == (2, 3)


# --- metrics ---------------------------------------------------------------

def fraction_metrics(ranked: list, relevant: set):
    """Definitional metric oracle in exact rational arithmetic."""
    r = len(relevant)
    hits = 0
    precisions = []
    first = None
    for rank, rid in enumerate(ranked, start=1):
        if rid in relevant:
            hits += 1
            precisions.append(Fraction(hits, rank))
            if first is None:
                first = rank
    ap = sum(precisions, Fraction(0)) / r
    r_at_r = Fraction(sum(1 for rid in ranked[:r] if rid in relevant), r)
    return ap, r_at_r, first


def test_interleaved_ranking_metrics():
    report = ir_metrics({"q": ["a", "x", "b", "y"]}, {"q": {"a", "b"}})
    q = report["per_query"]["q"]
    ap, r_at_r, first = fraction_metrics(["a", "x", "b", "y"], {"a", "b"})
    assert (ap, r_at_r, first) == (Fraction(5, 6), Fraction(1, 2), 1)
    assert q["AP"] == pytest.approx(float(ap), abs=1e-15)
    assert q["R@r"] == 0.5
    assert q["first_rank"] == 1
    assert q["P@1"] == 1.0


def test_perfect_ranking():
    report = ir_metrics({"q": ["a", "b", "c", "d"]}, {"q": {"a", "b"}})
    q = report["per_query"]["q"]
    assert q["AP"] == 1.0
    assert q["R@r"] == 1.0
    assert q["first_rank"] == 1
    assert report["mAP"] == 1.0


def test_rank_aggregation_uses_lower_median():
    rankings = {
        "q1": [f"t{i}" for i in range(10)],
        "q2": [f"t{i}" for i in range(10)],
    }
    relevance = {"q1": {"t6"}, "q2": {"t8"}}  # first ranks 7 and 9
    report = ir_metrics(rankings, relevance)
    assert report["MnR"] == 8.0
    assert report["MdR"] == 7


def test_metrics_match_rational_oracle(rng):
    ids = [f"d{i}" for i in range(12)]
    for _ in range(50):
        perm = [ids[i] for i in rng.permutation(12)]
        relevant = {ids[int(i)] for i in rng.choice(12, size=int(rng.integers(1, 6)), replace=False)}
        report = ir_metrics({"q": perm}, {"q": relevant})
        ap, r_at_r, first = fraction_metrics(perm, relevant)
        q = report["per_query"]["q"]
        assert q["AP"] == pytest.approx(float(ap), abs=1e-12)
        assert q["R@r"] == pytest.approx(float(r_at_r), abs=1e-12)
        assert q["first_rank"] == first


def test_metrics_validation():
    with pytest.raises(ValueError, match="empty relevant"):
        ir_metrics({"q": ["a", "b"]}, {"q": set()})
    with pytest.raises(ValueError, match="cover the database"):
        ir_metrics({"q": ["a"]}, {"q": {"a"}}, db_size=3)
    with pytest.raises(ValueError, match="missing from the ranking"):
        ir_metrics({"q": ["a", "b"]}, {"q": {"zz"}})
    with pytest.raises(ValueError, match="no relevance"):
        ir_metrics({"q": ["a", "b"]}, {})


def test_balanced_accuracy_all_correct():
    labels = {"a": True, "b": False}
    assert balanced_accuracy(labels, labels) == 1.0


def test_balanced_accuracy_constant_predictor_is_chance():
    labels = {f"t{i}": i < 5 for i in range(10)}
    predictions = {k: True for k in labels}
    assert balanced_accuracy(predictions, labels) == 0.5


def test_balanced_accuracy_formula():
    # TP=8, FN=2, TN=6, FP=4 -> (0.8 + 0.6) / 2
    labels = {}
    predictions = {}
    idx = 0
    for pred, truth, count in ((True, True, 8), (False, True, 2), (False, False, 6), (True, False, 4)):
        for _ in range(count):
            labels[f"s{idx}"] = truth
            predictions[f"s{idx}"] = pred
            idx += 1
    assert balanced_accuracy(predictions, labels) == pytest.approx(0.7, abs=1e-12)


def test_balanced_accuracy_requires_both_classes():
    with pytest.raises(ValueError):
        balanced_accuracy({"a": True, "b": False}, {"a": True, "b": True})
    with pytest.raises(ValueError):
        balanced_accuracy({"a": True}, {"a": True, "b": False})
