import math
from itertools import product

import numpy as np
import pytest

from tempo_score import (
    EvalContext,
    eval_boolean,
    log_complement,
    logstop,
    logstop_all_starts,
    parse_formula,
)
from tempo_score.formula import Formula

from conftest import CRISP_EPS, crisp_trace, label_trace, prob_trace

NEG_INF = float("-inf")
LOG_HALF = math.log(0.5)


# --- independent reference: top-down scalar recursion, no caching ---------

def _ref_complement(s: float) -> float:
    if s == 0.0:
        return NEG_INF
    if s == NEG_INF:
        return 0.0
    if s > math.log(0.5):
        return math.log(-math.expm1(s))
    return math.log1p(-math.exp(s))


def _ref_or(x: float, y: float) -> float:
    if x == NEG_INF:
        return y
    if y == NEG_INF:
        return x
    return _ref_complement(_ref_complement(x) + _ref_complement(y))


def ref_score(probs: dict, phi: Formula, t_s: int, t_e: int, w: int) -> float:
    def smooth(name: str, t: int) -> float:
        row = probs.get(name)
        if row is None:
            return NEG_INF
        vals = row[t - 1 : min(t + w - 1, t_e)]
        mean = math.fsum(vals) / len(vals)
        return math.log(mean) if mean > 0 else NEG_INF

    def go(node: Formula, t: int) -> float:
        kind = type(node).__name__
        if kind == "TrueConst":
            return 0.0
        if kind == "FalseConst":
            return NEG_INF
        if kind == "Atom":
            return smooth(node.name, t)
        if kind == "Not":
            return _ref_complement(go(node.child, t))
        if kind == "And":
            return go(node.left, t) + go(node.right, t)
        if kind == "Or":
            return _ref_or(go(node.left, t), go(node.right, t))
        if kind == "Next":
            return go(node.child, t + w) if t + w <= t_e else NEG_INF
        if kind == "Always":
            rest = go(node, t + w) if t + w <= t_e else 0.0
            return go(node.child, t) + rest
        if kind == "Eventually":
            rest = go(node, t + w) if t + w <= t_e else NEG_INF
            return _ref_or(go(node.child, t), rest)
        if kind == "Until":
            b = go(node.right, t)
            rest = go(node, t + w) if t + w <= t_e else NEG_INF
            return _ref_or(b, go(node.left, t) + _ref_complement(b) + rest)
        raise TypeError(kind)

    return go(phi, t_s)


# --- log_complement -------------------------------------------------------

def test_complement_of_point_nine():
    assert log_complement(math.log(0.9)) == pytest.approx(math.log(0.1), abs=1e-12)


def test_complement_endpoints():
    assert log_complement(0.0) == NEG_INF
    assert log_complement(NEG_INF) == 0.0


def test_complement_near_certainty_keeps_precision():
    # extended-precision value of log(1 - e^(-1e-18)), frozen
    assert log_complement(-1e-18) == pytest.approx(-41.44653167389282, abs=1e-9)
    assert log_complement(-1e-18) != NEG_INF


def test_complement_rejects_positive_scores():
    with pytest.raises(ValueError):
        log_complement(0.1)
    with pytest.raises(ValueError):
        log_complement(float("nan"))


def test_complement_is_involution_on_certainty():
    for s in (0.0, NEG_INF):
        assert log_complement(log_complement(s)) == s


# --- golden scores --------------------------------------------------------

def test_always_is_a_sum_of_logs():
    tr = prob_trace({"car": [0.9] * 6})
    score = logstop(tr, parse_formula("G car"), 1, 6, 1)
    assert score == pytest.approx(math.log(0.9**6), abs=1e-12)
    assert score > LOG_HALF


def test_conjunction_multiplies_probabilities():
    tr = prob_trace({"car": [0.9], "person": [0.9]})
    score = logstop(tr, parse_formula("car & person"), 1, 1, 1)
    assert score == pytest.approx(math.log(0.81), abs=1e-12)


def test_eventually_single_window_is_exact_identity():
    for p in (0.7, 0.25, 1e-9, 1.0):
        tr = prob_trace({"p": [p]})
        assert logstop(tr, parse_formula("F p")) == tr.score(1, "p")


def test_always_orders_degraded_traces():
    good = prob_trace({"car": [0.9, 0.9, 0.1]})
    bad = prob_trace({"car": [0.1, 0.1, 0.1]})
    phi = parse_formula("G car")
    s_good, s_bad = logstop(good, phi), logstop(bad, phi)
    assert s_good == pytest.approx(math.log(0.081), abs=1e-12)
    assert s_bad == pytest.approx(math.log(0.001), abs=1e-12)
    assert s_good > s_bad


def test_until_orders_witness_strength():
    high = prob_trace({"car": [0.6] * 3, "ped": [0.4, 0.4, 0.9]})
    low = prob_trace({"car": [0.6] * 3, "ped": [0.4, 0.4, 0.6]})
    phi = parse_formula("car U ped")
    assert logstop(high, phi) > logstop(low, phi)


def test_unknown_atom_scores_neg_inf():
    tr = prob_trace({"p": [0.5, 0.5]})
    assert logstop(tr, parse_formula("G ghost")) == NEG_INF
    assert logstop(tr, parse_formula("F ghost")) == NEG_INF


def test_de_morgan_identity_for_eventually(rng):
    f_phi = parse_formula("F p")
    dual = parse_formula("! G ! p")
    for _ in range(200):
        T = int(rng.integers(1, 20))
        probs = rng.random(T)
        probs[rng.random(T) < 0.1] = 0.0
        probs[rng.random(T) < 0.1] = 1.0
        tr = prob_trace({"p": probs})
        assert logstop(tr, f_phi) == pytest.approx(logstop(tr, dual), abs=1e-12)


# --- all-starts evaluation ------------------------------------------------

def test_all_starts_certain_eventual_hit():
    tr = prob_trace({"p": [0.0, 0.0, 1.0]})
    got = logstop_all_starts(tr, parse_formula("F p"), 1, 3, 1)
    assert got == [(1, 0.0), (2, 0.0), (3, 0.0)]


def test_all_starts_always_closed_form():
    tr = prob_trace({"p": [0.9] * 3})
    got = logstop_all_starts(tr, parse_formula("G p"), 1, 3, 1)
    l = math.log(0.9)
    assert [t for t, _ in got] == [1, 2, 3]
    for (t, score), expect in zip(got, (3 * l, 2 * l, l)):
        assert score == pytest.approx(expect, abs=1e-12)


def test_all_starts_single_window():
    tr = prob_trace({"p": [0.3, 0.8]})
    phi = parse_formula("p U p")
    got = logstop_all_starts(tr, phi, 2, 2, 1)
    assert got == [(2, logstop(tr, phi, 2, 2, 1))]


def test_all_starts_matches_per_start_scores(rng):
    zoo = [parse_formula(t) for t in ("G a", "F a", "a U b", "(a & b) U (F a)", "X (a | b)")]
    for _ in range(50):
        T = int(rng.integers(2, 16))
        probs = {"a": rng.random(T), "b": rng.random(T)}
        tr = prob_trace(probs, trace_id="r")
        w = int(rng.integers(1, T + 1))
        anchor = int(rng.integers(1, T - w + 2))
        phi = zoo[int(rng.integers(len(zoo)))]
        listed = {k: v.tolist() for k, v in probs.items()}
        for t, score in logstop_all_starts(tr, phi, anchor, T, w):
            if T - t + 1 >= w:
                # a start with room for a full window is directly callable
                assert score == logstop(tr, phi, t, T, w), (T, w, anchor, t)
            want = ref_score(listed, phi, t, T, w)
            if want == NEG_INF:
                assert score == NEG_INF
            else:
                assert score == pytest.approx(want, abs=1e-12), (T, w, anchor, t)


# --- differential and structural properties -------------------------------

def test_memoized_scores_match_reference_recursion(rng):
    zoo = [
        parse_formula(t)
        for t in (
            "G a", "F a", "a U b", "! a", "a & b", "a | b", "X a",
            "(! a) U (F b)", "G (a & b)", "(a & b) U b", "F (G a)", "G (F a)",
            "(G a) | (F b)", "a U (! b)", "X (a U b)",
        )
    ]
    for _ in range(300):
        T = int(rng.integers(1, 24))
        probs = {"a": rng.random(T), "b": rng.random(T)}
        tr = prob_trace(probs)
        w = int(rng.integers(1, T + 1))
        phi = zoo[int(rng.integers(len(zoo)))]
        got = logstop(tr, phi, 1, T, w)
        want = ref_score({k: v.tolist() for k, v in probs.items()}, phi, 1, T, w)
        if want == NEG_INF:
            assert got == NEG_INF
        else:
            assert got == pytest.approx(want, abs=1e-12)


def test_crisp_scores_agree_with_boolean_semantics_exhaustive_small():
    zoo = [parse_formula(t) for t in (
        "a", "! a", "a & b", "a | b", "X a", "G a", "F a", "a U b",
        "(! a) U b", "G (a & b)", "F (G a)", "G (F a)", "(a & b) U (F b)",
    )]
    for phi in zoo:
        for T in (1, 2, 3):
            for a_bits in product((0, 1), repeat=T):
                for b_bits in product((0, 1), repeat=T):
                    bits = {"a": list(a_bits), "b": list(b_bits)}
                    tr = crisp_trace(bits)
                    lt = label_trace(bits)
                    score = logstop(tr, phi, 1, T, 1)
                    assert (score > LOG_HALF) == bool(eval_boolean(lt, phi, 1)), (phi, bits)


def test_crisp_scores_agree_with_boolean_semantics_sampled(rng):
    zoo = [parse_formula(t) for t in (
        "G a", "F a", "a U b", "(! a) U (G b)", "(a & b) U (F a)", "X (a U b)", "G (F a)",
    )]
    for _ in range(2000):
        T = int(rng.integers(1, 11))
        bits = {"a": rng.integers(0, 2, T).tolist(), "b": rng.integers(0, 2, T).tolist()}
        tr = crisp_trace(bits)
        lt = label_trace(bits)
        phi = zoo[int(rng.integers(len(zoo)))]
        assert (logstop(tr, phi, 1, T, 1) > LOG_HALF) == bool(eval_boolean(lt, phi, 1))


def test_monotone_fragment_never_decreases(rng):
    # no negation, no Until: raising any atom score cannot lower the result
    zoo = [parse_formula(t) for t in ("G a", "F a", "a & b", "a | b", "G (a | b)", "F (a & b)", "(G a) | (F b)")]
    for _ in range(200):
        T = int(rng.integers(1, 12))
        base = {"a": rng.random(T), "b": rng.random(T)}
        bumped = {k: np.clip(v + rng.random(T) * (1.0 - v), 0.0, 1.0) for k, v in base.items()}
        w = int(rng.integers(1, T + 1))
        phi = zoo[int(rng.integers(len(zoo)))]
        lo = logstop(prob_trace(base), phi, 1, T, w)
        hi = logstop(prob_trace(bumped), phi, 1, T, w)
        assert hi >= lo - 1e-12


def test_conjunction_commutes_and_reassociates(rng):
    for _ in range(100):
        T = int(rng.integers(1, 10))
        tr = prob_trace({"a": rng.random(T), "b": rng.random(T), "c": rng.random(T)})
        ab = logstop(tr, parse_formula("a & b"), 1, T, 1)
        ba = logstop(tr, parse_formula("b & a"), 1, T, 1)
        assert ab == ba
        left = logstop(tr, parse_formula("(a & b) & c"), 1, T, 1)
        right = logstop(tr, parse_formula("a & (b & c)"), 1, T, 1)
        assert left == pytest.approx(right, abs=1e-12)


def test_scores_never_positive(rng):
    zoo = [parse_formula(t) for t in ("G a", "F a", "a U b", "! (a & b)", "true", "false")]
    for _ in range(200):
        T = int(rng.integers(1, 15))
        tr = prob_trace({"a": rng.random(T), "b": rng.random(T)})
        w = int(rng.integers(1, T + 1))
        phi = zoo[int(rng.integers(len(zoo)))]
        assert logstop(tr, phi, 1, T, w) <= 0.0


def test_repeated_evaluation_is_bit_identical(rng):
    T = 17
    tr = prob_trace({"a": rng.random(T), "b": rng.random(T)})
    phi = parse_formula("(a & b) U (F a)")
    first = logstop(tr, phi, 1, T, 2)
    assert all(logstop(tr, phi, 1, T, 2) == first for _ in range(5))


def test_context_validation():
    tr = prob_trace({"p": [0.5, 0.5, 0.5]})
    phi = parse_formula("G p")
    with pytest.raises(ValueError):
        logstop(tr, phi, 2, 1, 1)  # start past end
    with pytest.raises(ValueError):
        logstop(tr, phi, 0, 3, 1)  # start below 1
    with pytest.raises(ValueError):
        logstop(tr, phi, 1, 4, 1)  # end past trace
    with pytest.raises(ValueError):
        logstop(tr, phi, 1, 3, 4)  # window longer than span
    with pytest.raises(ValueError):
        EvalContext(1, 3, 0)


def test_true_and_false_constants():
    tr = prob_trace({"p": [0.5]})
    assert logstop(tr, parse_formula("true")) == 0.0
    assert logstop(tr, parse_formula("false")) == NEG_INF


def test_crisp_epsilon_matches_fixture():
    tr = crisp_trace({"a": [1, 0]})
    assert tr.score(1, "a") == math.log(1 - CRISP_EPS)
    assert tr.score(2, "a") == math.log(CRISP_EPS)
