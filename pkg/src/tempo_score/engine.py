"""Log-domain scoring of temporal properties over score traces.

A score is the log probability of the property holding, under an
independence reading of the per-window detector probabilities.  Evaluation
walks the syntax tree bottom-up and fills one array per node with the
node's score at every window of the grid ``t_start, t_start + w, ...``;
temporal operators consume the next window's entry, so a single pass prices
the property at every grid start for free.  Runtime is
O((t_end - t_start + 1) * size(phi)).

Operator handling, with p = e^score per window:

* ``a & b``     -> score(a) + score(b)                (independent events)
* ``! a``       -> log(1 - p_a), computed stably
* ``a | b``     -> complement of ``!a & !b``; when one side is -inf the
  other side's score is returned unchanged, avoiding a double-complement
  round trip
* ``X a``       -> a at the next window, -inf past the end (strong next)
* ``G a``       -> sum of a over the remaining windows (an empty remainder
  contributes 0, i.e. vacuous truth, so the score never collapses to -inf
  merely because the grid ran out)
* ``a U b``     -> b here, or (a and not-b here, and U at the next window);
  at the final window the recursive branch is -inf and the b score is
  returned exactly
* ``F a``       -> dual of G via De Morgan, evaluated as the backward chain
  or(a here, F at next window) so the final window returns a's score
  exactly

Note that scoring treats sub-property scores as independent even when they
share atoms: ``phi & phi`` prices as twice ``phi``.  That is inherent to
the independence reading, not a defect to patch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    FalseConst,
    Formula,
    Next,
    Not,
    Or,
    TrueConst,
    Until,
    index_formula,
    subformulas,
)
from .trace import ScoreTrace, window_log_means

__all__ = [
    "EvalContext",
    "log_complement",
    "logstop",
    "logstop_all_starts",
]

NEG_INF = float("-inf")
_LN_HALF = math.log(0.5)


def log_complement(s: float) -> float:
    """log(1 - e^s) for a log score s <= 0.

    Two stable branches: near 0 the complement 1 - e^s is tiny, so compute
    it with expm1 before taking the log; far from 0, e^s is tiny, so log1p
    of it is exact.  The crossover at log(1/2) is where the two arguments
    are equally sized.
    """
    if s > 0.0 or math.isnan(s):
        raise ValueError(f"log score must be <= 0, got {s}")
    if s == 0.0:
        return NEG_INF
    if s == NEG_INF:
        return 0.0
    if s > _LN_HALF:
        return math.log(-math.expm1(s))
    return math.log1p(-math.exp(s))


def _log_complement_arr(scores: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        near_zero = np.log(-np.expm1(scores))
        far = np.log1p(-np.exp(scores))
    return np.where(scores > _LN_HALF, near_zero, far)


def _or_scalar(x: float, y: float, cx: float) -> float:
    """Score of (x or y) given cx = log_complement(x)."""
    if x == NEG_INF:
        return y
    if y == NEG_INF:
        return x
    if x == 0.0 or y == 0.0:
        return 0.0
    return log_complement(cx + log_complement(y))


@dataclass(frozen=True)
class EvalContext:
    """Evaluation span and smoothing window.

    The window grid is the arithmetic progression
    ``t_start, t_start + window, ...`` up to ``t_end``; grid index j maps to
    timestep ``t_start + j * window``.
    """

    t_start: int
    t_end: int
    window: int

    def __post_init__(self) -> None:
        if not 1 <= self.t_start <= self.t_end:
            raise ValueError(f"need 1 <= t_start <= t_end, got [{self.t_start}, {self.t_end}]")
        if not 1 <= self.window <= self.t_end - self.t_start + 1:
            raise ValueError(
                f"window must be in [1, {self.t_end - self.t_start + 1}] for span "
                f"[{self.t_start}, {self.t_end}], got {self.window}"
            )

    @property
    def n_windows(self) -> int:
        return (self.t_end - self.t_start) // self.window + 1

    def grid(self) -> list[int]:
        return list(range(self.t_start, self.t_end + 1, self.window))


def _context(trace: ScoreTrace, t_start: int, t_end: "int | None", window: int) -> EvalContext:
    if t_end is None:
        t_end = trace.length
    if t_end > trace.length:
        raise ValueError(f"t_end {t_end} beyond trace length {trace.length}")
    return EvalContext(t_start, t_end, window)


def _score_rows(trace: ScoreTrace, phi: Formula, ctx: EvalContext) -> dict[int, np.ndarray]:
    """The score cache: node id -> log score at every grid index.

    Each entry is written once, bottom-up; the cache belongs to this single
    evaluation (grids with different anchors must not share one).
    """
    if phi.nid < 0:
        index_formula(phi)
    m = ctx.n_windows
    rows: dict[int, np.ndarray] = {}
    for node in subformulas(phi):
        if isinstance(node, TrueConst):
            row = np.zeros(m)
        elif isinstance(node, FalseConst):
            row = np.full(m, NEG_INF)
        elif isinstance(node, Atom):
            row = window_log_means(trace, node.name, ctx.t_start, ctx.t_end, ctx.window)
        elif isinstance(node, Not):
            row = _log_complement_arr(rows[node.child.nid])
        elif isinstance(node, And):
            row = rows[node.left.nid] + rows[node.right.nid]
        elif isinstance(node, Or):
            left, right = rows[node.left.nid], rows[node.right.nid]
            both = _log_complement_arr(_log_complement_arr(left) + _log_complement_arr(right))
            row = np.where(left == NEG_INF, right, np.where(right == NEG_INF, left, both))
        elif isinstance(node, Next):
            child = rows[node.child.nid]
            row = np.full(m, NEG_INF)
            row[:-1] = child[1:]
        elif isinstance(node, Always):
            row = np.cumsum(rows[node.child.nid][::-1])[::-1]
        elif isinstance(node, Eventually):
            child = rows[node.child.nid]
            comp = _log_complement_arr(child)
            row = np.empty(m)
            acc = NEG_INF
            for j in range(m - 1, -1, -1):
                acc = _or_scalar(child[j], acc, comp[j])
                row[j] = acc
        elif isinstance(node, Until):
            left, right = rows[node.left.nid], rows[node.right.nid]
            not_right = _log_complement_arr(right)
            row = np.empty(m)
            acc = NEG_INF
            for j in range(m - 1, -1, -1):
                branch = left[j] + not_right[j] + acc
                acc = _or_scalar(right[j], branch, not_right[j])
                row[j] = acc
        else:
            raise TypeError(f"not a formula node: {node!r}")
        rows[node.nid] = row
    return rows


def logstop(
    trace: ScoreTrace,
    phi: Formula,
    t_start: int = 1,
    t_end: "int | None" = None,
    window: int = 1,
) -> float:
    """Log score of ``phi`` over ``trace[t_start : t_end]`` with smoothing
    window ``window``.  Deterministic: identical inputs give bit-identical
    scores."""
    ctx = _context(trace, t_start, t_end, window)
    return float(_score_rows(trace, phi, ctx)[phi.nid][0])


def logstop_all_starts(
    trace: ScoreTrace,
    phi: Formula,
    t_start: int,
    t_end: "int | None" = None,
    window: int = 1,
) -> list[tuple[int, float]]:
    """Scores of ``phi`` at every grid start, from one evaluation.

    Returns ``(t, score)`` for each grid timestep ``t``; entry j equals
    ``logstop(trace, phi, t, t_end, window)`` for ``t = t_start + j*window``
    (same grid alignment), at no extra asymptotic cost.
    """
    ctx = _context(trace, t_start, t_end, window)
    root = _score_rows(trace, phi, ctx)[phi.nid]
    return [(t, float(root[j])) for j, t in enumerate(ctx.grid())]
