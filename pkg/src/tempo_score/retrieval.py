"""Ranked subsequence retrieval over a trace database, plus the metrics
used to judge rankings.

Relevance of a trace to a query is the best score of any subsequence whose
inclusive length lies in ``[t_lo, t_hi]``, with candidate starts on the
stride-``window`` grid (window 1 recovers every start).  One suffix
evaluation per end timestep prices all its admissible starts, so a trace
costs O(T^2 * size(phi) / window).
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import logstop_all_starts
from .formula import Formula
from .robustness import RobustnessParams, stl_robustness
from .trace import ScoreTrace, downsample

__all__ = [
    "RetrievalQuery",
    "RankedEntry",
    "retrieve",
    "stl_retrieve",
    "ir_metrics",
    "balanced_accuracy",
]

NEG_INF = float("-inf")


@dataclass(frozen=True)
class RetrievalQuery:
    phi: Formula
    t_lo: int
    t_hi: int
    k: int
    window: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.t_lo <= self.t_hi:
            raise ValueError(f"need 1 <= t_lo <= t_hi, got [{self.t_lo}, {self.t_hi}]")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 1 <= self.window <= self.t_lo:
            # the shortest admissible span must still fit one whole window
            raise ValueError(f"window must be in [1, t_lo={self.t_lo}], got {self.window}")


@dataclass(frozen=True)
class RankedEntry:
    trace_id: str
    score: float
    span: "tuple[int, int] | None"  # (start, end) inclusive; None if no admissible span


def _best_span(trace: ScoreTrace, query: RetrievalQuery) -> RankedEntry:
    best = NEG_INF
    best_span: "tuple[int, int] | None" = None
    for t_end in range(query.t_lo, trace.length + 1):
        t_start = max(1, t_end - query.t_hi + 1)
        for t, score in logstop_all_starts(trace, query.phi, t_start, t_end, query.window):
            if t_end - t + 1 < query.t_lo:
                continue
            if best_span is None or score > best:
                best = score
                best_span = (t, t_end)
    return RankedEntry(trace.id, best, best_span)


def retrieve(
    db: "dict[str, ScoreTrace] | list[ScoreTrace]",
    query: RetrievalQuery,
    mapper=map,
) -> list[RankedEntry]:
    """Top-k traces by subsequence relevance, descending score, ties broken
    by ascending trace id.  Traces shorter than ``t_lo`` rank with score
    -inf and no span.

    Per-trace scoring is independent; pass a pool's ``map`` as ``mapper``
    to fan it out.  The ranking is the same either way.
    """
    traces = sorted(db.values() if isinstance(db, dict) else db, key=lambda tr: tr.id)
    if not traces:
        raise ValueError("empty trace database")
    if all(tr.length < query.t_lo for tr in traces):
        raise ValueError(f"no trace is at least t_lo={query.t_lo} timesteps long")
    entries = list(
        mapper(
            lambda tr: _best_span(tr, query) if tr.length >= query.t_lo else RankedEntry(tr.id, NEG_INF, None),
            traces,
        )
    )
    entries.sort(key=lambda e: (-e.score, e.trace_id))
    return entries[: query.k]


def stl_retrieve(
    db: "dict[str, ScoreTrace] | list[ScoreTrace]",
    query: RetrievalQuery,
    params: "RobustnessParams | None" = None,
    smooth: bool = True,
) -> list[RankedEntry]:
    """Ablation variant of :func:`retrieve` that scores spans with min/max
    robustness instead.  Each candidate span is cut out and, when ``smooth``
    is set, downsampled by the query window before scoring.  Considerably
    slower; meant for baseline comparisons on small databases."""
    if params is None:
        params = RobustnessParams()
    traces = sorted(db.values() if isinstance(db, dict) else db, key=lambda tr: tr.id)
    if not traces:
        raise ValueError("empty trace database")
    if all(tr.length < query.t_lo for tr in traces):
        raise ValueError(f"no trace is at least t_lo={query.t_lo} timesteps long")
    entries = []
    for tr in traces:
        best = NEG_INF
        best_span = None
        for t_end in range(query.t_lo, tr.length + 1):
            t_start = max(1, t_end - query.t_hi + 1)
            for t in range(t_start, t_end + 1, query.window):
                if t_end - t + 1 < query.t_lo:
                    continue
                span = tr.restrict(t, t_end)
                if smooth and query.window > 1:
                    span = downsample(span, query.window)
                rho = stl_robustness(span, query.phi, 1, params)
                if best_span is None or rho > best:
                    best, best_span = rho, (t, t_end)
        entries.append(RankedEntry(tr.id, best, best_span))
    entries.sort(key=lambda e: (-e.score, e.trace_id))
    return entries[: query.k]


def _ranked_ids(ranking) -> list[str]:
    return [e.trace_id if isinstance(e, RankedEntry) else str(e) for e in ranking]


def _precision_at(ranked: list[str], relevant: set[str], k: int) -> float:
    return sum(1 for rid in ranked[:k] if rid in relevant) / k


def _lower_median(values: list[float]) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def ir_metrics(
    rankings: dict[str, "list[RankedEntry] | list[str]"],
    relevance: dict[str, set[str]],
    db_size: "int | None" = None,
) -> dict:
    """Per-query and aggregate ranking metrics.

    Each ranking must cover the whole database (run retrieval with k = N).
    Per query: precision at 1/5/10/r, average precision, recall at r, and
    the rank of the first relevant result.  Aggregates: mAP, mean first
    rank (MnR), lower-median first rank (MdR), and mean precisions.
    """
    if not rankings:
        raise ValueError("no rankings given")
    per_query: dict[str, dict] = {}
    for key in sorted(rankings):
        ranked = _ranked_ids(rankings[key])
        if key not in relevance:
            raise ValueError(f"query {key!r} has no relevance set")
        relevant = set(relevance[key])
        if not relevant:
            raise ValueError(f"query {key!r} has an empty relevant set")
        expected = db_size if db_size is not None else len(ranked)
        if len(ranked) < expected or len(set(ranked)) != len(ranked):
            raise ValueError(f"query {key!r}: ranking does not cover the database")
        if not relevant <= set(ranked):
            raise ValueError(f"query {key!r}: relevant ids missing from the ranking")
        r = len(relevant)
        hits = 0
        ap = 0.0
        first_rank = None
        for rank, rid in enumerate(ranked, start=1):
            if rid in relevant:
                hits += 1
                ap += hits / rank
                if first_rank is None:
                    first_rank = rank
        per_query[key] = {
            "r": r,
            "AP": ap / r,
            "P@1": _precision_at(ranked, relevant, 1),
            "P@5": _precision_at(ranked, relevant, 5),
            "P@10": _precision_at(ranked, relevant, 10),
            "P@r": _precision_at(ranked, relevant, r),
            "R@r": sum(1 for rid in ranked[:r] if rid in relevant) / r,
            "first_rank": first_rank,
        }
    n = len(per_query)
    first_ranks = [q["first_rank"] for q in per_query.values()]
    return {
        "queries": n,
        "P@1": sum(q["P@1"] for q in per_query.values()) / n,
        "P@5": sum(q["P@5"] for q in per_query.values()) / n,
        "P@10": sum(q["P@10"] for q in per_query.values()) / n,
        "P@r": sum(q["P@r"] for q in per_query.values()) / n,
        "mAP": sum(q["AP"] for q in per_query.values()) / n,
        "R@r": sum(q["R@r"] for q in per_query.values()) / n,
        "MnR": sum(first_ranks) / n,
        "MdR": _lower_median(first_ranks),
        "per_query": per_query,
    }


def balanced_accuracy(predictions: dict[str, bool], labels: dict[str, bool]) -> float:
    """(TPR + TNR) / 2 over matching id sets; needs both classes present."""
    if set(predictions) != set(labels):
        raise ValueError("predictions and labels must cover the same ids")
    tp = fn = tn = fp = 0
    for key, truth in labels.items():
        pred = predictions[key]
        if truth:
            tp, fn = (tp + 1, fn) if pred else (tp, fn + 1)
        else:
            tn, fp = (tn + 1, fp) if not pred else (tn, fp + 1)
    if tp + fn == 0 or tn + fp == 0:
        raise ValueError("balanced accuracy undefined: a class is absent from the labels")
    return (tp / (tp + fn) + tn / (tn + fp)) / 2
