"""Min/max robustness baseline: signed margin to the detection threshold.

Margins are probability-domain (e^score - tau), which keeps the maximum
robustness finite at 1 - tau.  This semantics reflects only the single most
violating or most satisfying timestep, so traces that differ elsewhere can
score identically; it is kept as the comparison baseline for exactly that
reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

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
from .trace import ScoreTrace

__all__ = ["RobustnessParams", "stl_robustness"]


@dataclass(frozen=True)
class RobustnessParams:
    """Detection threshold tau and the derived maximum robustness 1 - tau."""

    tau: float = 0.5
    rho_top: float = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        object.__setattr__(self, "rho_top", 1.0 - self.tau)


def _rho_rows(trace: ScoreTrace, phi: Formula, params: RobustnessParams) -> dict[int, np.ndarray]:
    if phi.nid < 0:
        index_formula(phi)
    length = trace.length
    rho_top = params.rho_top
    rows: dict[int, np.ndarray] = {}
    for node in subformulas(phi):
        if isinstance(node, TrueConst):
            row = np.full(length, rho_top)
        elif isinstance(node, FalseConst):
            row = np.full(length, -rho_top)
        elif isinstance(node, Atom):
            row = trace.probabilities(node.name) - params.tau
        elif isinstance(node, Not):
            row = -rows[node.child.nid]
        elif isinstance(node, And):
            row = np.minimum(rows[node.left.nid], rows[node.right.nid])
        elif isinstance(node, Or):
            row = np.maximum(rows[node.left.nid], rows[node.right.nid])
        elif isinstance(node, Next):
            child = rows[node.child.nid]
            row = np.full(length, -rho_top)
            row[:-1] = child[1:]
        elif isinstance(node, Always):
            row = np.minimum.accumulate(rows[node.child.nid][::-1])[::-1]
        elif isinstance(node, Eventually):
            row = np.maximum.accumulate(rows[node.child.nid][::-1])[::-1]
        elif isinstance(node, Until):
            # max over t' >= t of min(right[t'], min of left over [t, t'));
            # the empty inner range at t' = t counts as rho_top
            left, right = rows[node.left.nid], rows[node.right.nid]
            row = np.empty(length)
            for t in range(length):
                best = -math.inf
                running_left = rho_top
                for tp in range(t, length):
                    best = max(best, min(right[tp], running_left))
                    running_left = min(running_left, left[tp])
                row[t] = best
        else:
            raise TypeError(f"not a formula node: {node!r}")
        rows[node.nid] = row
    return rows


def stl_robustness(
    trace: ScoreTrace,
    phi: Formula,
    t: int = 1,
    params: "RobustnessParams | None" = None,
) -> float:
    """Robustness of ``phi`` over ``trace`` starting at timestep ``t``.

    Positive means the thresholded labels would satisfy the property,
    negative that they would violate it.  O(T^2 * size) worst case (Until),
    O(T * size) otherwise.
    """
    if params is None:
        params = RobustnessParams()
    if not 1 <= t <= trace.length:
        raise ValueError(f"timestep {t} outside 1..{trace.length}")
    return float(_rho_rows(trace, phi, params)[phi.nid][t - 1])
