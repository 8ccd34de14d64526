"""Benchmark tooling: the query template catalog, matching/retrieval
ground-truth generation from label traces, and seeded synthetic corpora.

Ground truth always comes from the exact boolean semantics, so every
generated label can be independently re-derived.  Generation is a pure
function of its inputs and the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .formula import Formula, atom_names, format_formula, parse_formula, substitute_atoms
from .oracle import eval_boolean
from .trace import LabelTrace, ScoreTrace

__all__ = [
    "QueryTemplate",
    "TEMPLATES",
    "template_by_name",
    "QMSample",
    "generate_qm_samples",
    "generate_retrieval_ground_truth",
    "Segment",
    "TraceSpec",
    "synth_trace",
]

_PLACEHOLDERS = ("p1", "p2", "p3")


@dataclass(frozen=True)
class QueryTemplate:
    """A query skeleton over placeholders p1..p3."""

    name: str
    skeleton: str
    category: str

    @property
    def arity(self) -> int:
        return len(atom_names(parse_formula(self.skeleton)) & set(_PLACEHOLDERS))

    def instantiate(self, *classes: str) -> Formula:
        if len(classes) != self.arity:
            raise ValueError(f"template {self.name!r} takes {self.arity} classes, got {len(classes)}")
        if len(set(classes)) != len(classes):
            raise ValueError(f"template {self.name!r}: placeholder classes must be distinct")
        mapping = dict(zip(_PLACEHOLDERS, classes))
        return substitute_atoms(parse_formula(self.skeleton), mapping)


TEMPLATES: tuple[QueryTemplate, ...] = (
    QueryTemplate("eventually", "F p1", "simple"),
    QueryTemplate("always", "G p1", "simple"),
    QueryTemplate("until", "p1 U p2", "simple"),
    QueryTemplate("always-and-eventually", "G p1 & F p2", "bool-over-temporal"),
    QueryTemplate("always-or-eventually", "G p1 | F p2", "bool-over-temporal"),
    QueryTemplate("not-until", "! p1 U p2", "temporal-over-bool"),
    QueryTemplate("until-not", "p1 U ! p2", "temporal-over-bool"),
    QueryTemplate("always-conjunction", "G (p1 & p2)", "temporal-over-bool"),
    QueryTemplate("conjunction-until", "(p1 & p2) U p3", "temporal-over-bool"),
    QueryTemplate("until-always", "p1 U G p2", "temporal-over-temporal"),
    QueryTemplate("eventually-always", "F G p1", "temporal-over-temporal"),
    QueryTemplate("always-eventually", "G F p1", "temporal-over-temporal"),
    QueryTemplate("not-until-eventually", "! p1 U F p2", "mixed"),
    QueryTemplate("not-until-always", "! p1 U G p2", "mixed"),
    QueryTemplate("conjunction-until-eventually", "(p1 & p2) U F p3", "mixed"),
)


def template_by_name(name: str) -> QueryTemplate:
    for template in TEMPLATES:
        if template.name == name:
            return template
    raise KeyError(f"unknown template {name!r}; known: {', '.join(t.name for t in TEMPLATES)}")


@dataclass(frozen=True)
class QMSample:
    """One query-matching sample: a fixed-length span of a source trace,
    an instantiated query, and its exact boolean label."""

    trace_id: str
    start: int
    end: int
    phi: Formula
    label: int  # 1 matching, 0 non-matching


def _span_label(trace: LabelTrace, phi: Formula, start: int, length: int, classes: tuple[str, ...]) -> int:
    rows = {name: trace.row(name)[start - 1 : start - 1 + length] for name in classes}
    return eval_boolean(LabelTrace(trace.id, length, rows), phi, 1)


def generate_qm_samples(
    labels: "dict[str, LabelTrace] | list[LabelTrace]",
    template: QueryTemplate,
    length: int,
    cap: int,
    seed: int,
) -> list[QMSample]:
    """Matching / non-matching spans for one template over a label corpus.

    Placeholders range over the distinct classes actually present in each
    trace; every fixed-length span of every instantiation is labelled with
    the boolean semantics.  Up to ``cap`` samples are drawn without
    replacement, stratified across traces and balanced across the two label
    sides as far as the pools allow.
    """
    if length < 1:
        raise ValueError(f"span length must be >= 1, got {length}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    traces = sorted(labels.values() if isinstance(labels, dict) else labels, key=lambda tr: tr.id)
    rng = np.random.default_rng(seed)

    # candidate pools per label side, one bucket per trace, then interleaved
    buckets: dict[int, list[list[QMSample]]] = {0: [], 1: []}
    usable = 0
    for trace in traces:
        if trace.length < length:
            continue
        classes = trace.present_classes()
        if len(classes) < template.arity:
            continue
        usable += 1
        per_trace: dict[int, list[QMSample]] = {0: [], 1: []}
        for assignment in permutations(classes, template.arity):
            phi = template.instantiate(*assignment)
            for start in range(1, trace.length - length + 2):
                label = _span_label(trace, phi, start, length, assignment)
                per_trace[label].append(QMSample(trace.id, start, start + length - 1, phi, label))
        for side in (0, 1):
            if per_trace[side]:
                rng.shuffle(per_trace[side])
                buckets[side].append(per_trace[side])
    if usable == 0:
        raise ValueError(
            f"no candidate spans: no trace is both >= {length} timesteps long and "
            f"has >= {template.arity} present classes for template {template.name!r}"
        )

    pools: dict[int, list[QMSample]] = {}
    for side in (0, 1):
        interleaved: list[QMSample] = []
        round_idx = 0
        while any(round_idx < len(b) for b in buckets[side]):
            for bucket in buckets[side]:
                if round_idx < len(bucket):
                    interleaved.append(bucket[round_idx])
            round_idx += 1
        pools[side] = interleaved

    n_match = min(len(pools[1]), (cap + 1) // 2)
    n_other = min(len(pools[0]), cap - n_match)
    n_match = min(len(pools[1]), cap - n_other)
    chosen = pools[1][:n_match] + pools[0][:n_other]
    chosen.sort(key=lambda s: (s.trace_id, s.start, format_formula(s.phi)))
    return chosen


def generate_retrieval_ground_truth(
    labels: "dict[str, LabelTrace] | list[LabelTrace]",
    formulas: list[Formula],
    t_lo: int,
    t_hi: int,
    max_relevant: int,
) -> tuple[list[tuple[Formula, frozenset[str]]], list[tuple[Formula, str]]]:
    """Relevant-id sets for retrieval queries, from the boolean semantics.

    A trace is relevant to a query iff some span with inclusive length in
    ``[t_lo, t_hi]`` satisfies it at the span start.  Queries relevant to
    nothing, or to more than ``max_relevant`` traces, are dropped; returns
    ``(kept, dropped)`` where each drop carries its reason.
    """
    if not 1 <= t_lo <= t_hi:
        raise ValueError(f"need 1 <= t_lo <= t_hi, got [{t_lo}, {t_hi}]")
    if max_relevant < 1:
        raise ValueError(f"max_relevant must be >= 1, got {max_relevant}")
    traces = sorted(labels.values() if isinstance(labels, dict) else labels, key=lambda tr: tr.id)
    kept: list[tuple[Formula, frozenset[str]]] = []
    dropped: list[tuple[Formula, str]] = []
    for phi in formulas:
        relevant = frozenset(tr.id for tr in traces if _has_satisfying_span(tr, phi, t_lo, t_hi))
        if not relevant:
            dropped.append((phi, "no relevant traces"))
        elif len(relevant) > max_relevant:
            dropped.append((phi, f"{len(relevant)} relevant traces exceeds cap {max_relevant}"))
        else:
            kept.append((phi, relevant))
    return kept, dropped


def _has_satisfying_span(trace: LabelTrace, phi: Formula, t_lo: int, t_hi: int) -> bool:
    for length in range(t_lo, min(t_hi, trace.length) + 1):
        for start in range(1, trace.length - length + 2):
            sub = trace.restrict(start, start + length - 1)
            if eval_boolean(sub, phi, 1):
                return True
    return False


HIGH_PROB = 0.9
LOW_PROB = 0.1


@dataclass(frozen=True)
class Segment:
    class_name: str
    start: int
    end: int
    level: str = "high"  # "high" sets labels to 1 on the span, "low" to 0

    def __post_init__(self) -> None:
        if self.level not in ("high", "low"):
            raise ValueError(f"segment level must be 'high' or 'low', got {self.level!r}")
        if self.start > self.end:
            raise ValueError(f"segment span [{self.start}, {self.end}] is empty")


@dataclass(frozen=True)
class TraceSpec:
    trace_id: str
    length: int
    classes: tuple[str, ...]
    segments: tuple[Segment, ...] = ()
    sigma: float = 0.0
    flip: float = 0.0

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.flip <= 1.0:
            raise ValueError(f"flip probability must be in [0, 1], got {self.flip}")
        for seg in self.segments:
            if seg.class_name not in self.classes:
                raise ValueError(f"segment class {seg.class_name!r} not declared in classes")
            if not 1 <= seg.start <= seg.end <= self.length:
                raise ValueError(f"segment span [{seg.start}, {seg.end}] outside 1..{self.length}")


def synth_trace(spec: TraceSpec, seed: "int | list[int]") -> tuple[ScoreTrace, LabelTrace]:
    """Score/label pair for one synthetic trace.

    Labels follow the segments.  Scores start at the label-consistent base
    probability (0.9 / 0.1), get flipped to the other base with the given
    per-timestep probability (mimicking momentary detector dropouts such as
    occlusion), then perturbed with clipped Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    label_rows: dict[str, np.ndarray] = {}
    prob_rows: dict[str, np.ndarray] = {}
    for name in spec.classes:
        row = np.zeros(spec.length, dtype=bool)
        for seg in spec.segments:
            if seg.class_name == name:
                row[seg.start - 1 : seg.end] = seg.level == "high"
        label_rows[name] = row
        probs = np.where(row, HIGH_PROB, LOW_PROB)
        flips = rng.random(spec.length) < spec.flip
        probs = np.where(flips, np.where(row, LOW_PROB, HIGH_PROB), probs)
        probs = np.clip(probs + rng.normal(0.0, spec.sigma, spec.length), 0.0, 1.0)
        prob_rows[name] = probs
    score = ScoreTrace.from_probabilities(spec.trace_id, prob_rows)
    labels = LabelTrace(spec.trace_id, spec.length, label_rows)
    return score, labels
