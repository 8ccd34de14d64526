"""Query matching: score a whole trace and compare against a threshold.

The adaptive threshold is the score the query would get from
coin-flip detectors (every atom at probability 0.5 everywhere), capped at
log 0.5.  It never exceeds log 0.5, so everything the constant threshold
accepts, the adaptive one accepts too; for properties whose score shrinks
with sequence length (Always-heavy queries) it keeps long sequences
matchable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import logstop
from .formula import Formula, atom_names
from .robustness import RobustnessParams, stl_robustness
from .trace import ScoreTrace, downsample

__all__ = ["MatchResult", "LOG_HALF", "auto_window", "adaptive_threshold", "query_match"]

LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class MatchResult:
    score: float
    threshold: float
    matched: bool
    window: int
    semantics: str  # "logstop" or "stl"


def auto_window(length: int) -> int:
    """Window heuristic: 2 for short sequences (< 20 steps), else 5,
    clamped so a window never exceeds the sequence itself."""
    return min(2 if length < 20 else 5, length)


def _constant_half_trace(phi: Formula, length: int) -> ScoreTrace:
    scores = {name: np.full(length, LOG_HALF) for name in atom_names(phi)}
    return ScoreTrace("constant-0.5", length, scores)


def adaptive_threshold(phi: Formula, length: int, window: int) -> float:
    """min(log 0.5, score of ``phi`` on a length-T trace of constant 0.5).

    Depends only on the query, the length, and the window, never on the
    scored trace.  Smoothing a constant is the identity, so the virtual
    trace needs no special handling.  O(T * size(phi)).
    """
    baseline = logstop(_constant_half_trace(phi, length), phi, 1, length, window)
    return min(LOG_HALF, baseline)


def query_match(
    trace: ScoreTrace,
    phi: Formula,
    window: "int | str" = "auto",
    threshold: str = "adaptive",
    semantics: str = "logstop",
    tau: float = 0.5,
    smoothing: bool = True,
) -> MatchResult:
    """Match ``trace`` against ``phi`` over its full length.

    ``window="auto"`` applies :func:`auto_window`.  ``threshold`` is
    ``"adaptive"`` or ``"fixed"`` (constant log 0.5).  With
    ``semantics="stl"`` the decision is the robustness sign test (rho > 0)
    and ``window`` only controls the optional pre-smoothing downsample.
    The match is strict: a score exactly at the threshold does not match.
    """
    if semantics not in ("logstop", "stl"):
        raise ValueError(f"semantics must be 'logstop' or 'stl', got {semantics!r}")
    if threshold not in ("adaptive", "fixed"):
        raise ValueError(f"threshold must be 'adaptive' or 'fixed', got {threshold!r}")
    w = auto_window(trace.length) if window == "auto" else int(window)
    if not 1 <= w <= trace.length:
        raise ValueError(f"window {w} outside 1..{trace.length}")
    if not smoothing:
        w = 1

    if semantics == "stl":
        smoothed = downsample(trace, w) if w > 1 else trace
        rho = stl_robustness(smoothed, phi, 1, RobustnessParams(tau))
        return MatchResult(score=rho, threshold=0.0, matched=rho > 0.0, window=w, semantics="stl")

    score = logstop(trace, phi, 1, trace.length, w)
    cutoff = LOG_HALF if threshold == "fixed" else adaptive_threshold(phi, trace.length, w)
    return MatchResult(score=score, threshold=cutoff, matched=score > cutoff, window=w, semantics="logstop")
