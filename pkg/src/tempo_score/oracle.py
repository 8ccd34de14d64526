"""Exact boolean semantics over finite label traces.

The reference truth for dataset generation and for differential testing of
the quantitative engine.  Next is strong (false at the final timestep),
Always quantifies over the whole suffix, Until is the half-open variant:
some t' in [t, T] satisfies the right side with the left side holding at
every t'' in [t, t').  Eventually is the dual of Always.
"""

from __future__ import annotations

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
from .trace import LabelTrace

__all__ = ["eval_boolean", "eval_boolean_suffixes"]


def _truth_rows(labels: LabelTrace, phi: Formula) -> dict[int, np.ndarray]:
    """Memo table: node id -> truth value at every start timestep 1..T."""
    if phi.nid < 0:
        index_formula(phi)
    length = labels.length
    rows: dict[int, np.ndarray] = {}
    for node in subformulas(phi):
        if isinstance(node, TrueConst):
            row = np.ones(length, dtype=bool)
        elif isinstance(node, FalseConst):
            row = np.zeros(length, dtype=bool)
        elif isinstance(node, Atom):
            row = labels.row(node.name).copy()
        elif isinstance(node, Not):
            row = ~rows[node.child.nid]
        elif isinstance(node, And):
            row = rows[node.left.nid] & rows[node.right.nid]
        elif isinstance(node, Or):
            row = rows[node.left.nid] | rows[node.right.nid]
        elif isinstance(node, Next):
            child = rows[node.child.nid]
            row = np.zeros(length, dtype=bool)
            row[:-1] = child[1:]
        elif isinstance(node, Always):
            child = rows[node.child.nid]
            row = np.empty(length, dtype=bool)
            acc = True
            for t in range(length - 1, -1, -1):
                acc = acc and child[t]
                row[t] = acc
        elif isinstance(node, Eventually):
            child = rows[node.child.nid]
            row = np.empty(length, dtype=bool)
            acc = False
            for t in range(length - 1, -1, -1):
                acc = acc or child[t]
                row[t] = acc
        elif isinstance(node, Until):
            left, right = rows[node.left.nid], rows[node.right.nid]
            row = np.empty(length, dtype=bool)
            acc = False
            for t in range(length - 1, -1, -1):
                acc = right[t] or (left[t] and acc)
                row[t] = acc
        else:
            raise TypeError(f"not a formula node: {node!r}")
        rows[node.nid] = row
    return rows


def eval_boolean(labels: LabelTrace, phi: Formula, t: int = 1) -> int:
    """Truth (0/1) of ``phi`` over ``labels`` starting at timestep ``t``."""
    if not 1 <= t <= labels.length:
        raise ValueError(f"timestep {t} outside 1..{labels.length}")
    return int(_truth_rows(labels, phi)[phi.nid][t - 1])


def eval_boolean_suffixes(labels: LabelTrace, phi: Formula) -> np.ndarray:
    """Truth of ``phi`` at every start timestep, as a bool array of length T."""
    return _truth_rows(labels, phi)[phi.nid]
