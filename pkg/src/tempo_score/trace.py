"""Score and label sequences: ingestion, validation, window smoothing.

Scores live in the log domain: a stored value ``s`` is the log of a
detector probability, so ``s <= 0`` with ``-inf`` meaning probability zero.
Classes missing from a trace read as ``-inf`` (a confident negative, which
is how detector exports treat classes they never fired on).  Timesteps are
1-based, ``1..T``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = [
    "ScoreTrace",
    "LabelTrace",
    "TraceFormatError",
    "load_score_trace",
    "load_label_trace",
    "load_score_db",
    "load_label_db",
    "write_score_csv",
    "write_label_csv",
    "smooth_atom",
    "window_log_means",
    "downsample",
]

NEG_INF = float("-inf")


class TraceFormatError(ValueError):
    """Malformed trace file or inconsistent trace data."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class ScoreTrace:
    """Per-timestep, per-class log scores for one sequence.

    Immutable after construction; safe to share across concurrent
    evaluations.
    """

    def __init__(self, trace_id: str, length: int, scores: dict[str, np.ndarray]):
        if length < 1:
            raise TraceFormatError(f"trace {trace_id!r}: length must be >= 1, got {length}")
        self.id = trace_id
        self.length = int(length)
        checked: dict[str, np.ndarray] = {}
        for name, arr in scores.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (length,):
                raise TraceFormatError(
                    f"trace {trace_id!r}: class {name!r} has {arr.shape[0]} scores, expected {length}"
                )
            if np.any(np.isnan(arr)) or np.any(arr > 0.0):
                raise TraceFormatError(
                    f"trace {trace_id!r}: class {name!r} has a log score > 0 or NaN"
                )
            checked[name] = _freeze(arr.copy())
        self._scores = checked
        self._missing = _freeze(np.full(length, NEG_INF))

    @classmethod
    def from_probabilities(cls, trace_id: str, probs: dict[str, "np.ndarray | list[float]"]) -> "ScoreTrace":
        lengths = {len(v) for v in probs.values()}
        if len(lengths) != 1:
            raise TraceFormatError(f"trace {trace_id!r}: classes disagree on length")
        (length,) = lengths
        scores = {}
        for name, p in probs.items():
            p = np.asarray(p, dtype=np.float64)
            if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
                raise TraceFormatError(f"trace {trace_id!r}: class {name!r} probability outside [0, 1]")
            with np.errstate(divide="ignore"):
                scores[name] = np.log(p)
        return cls(trace_id, length, scores)

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(self._scores)

    def log_scores(self, name: str) -> np.ndarray:
        """Full score row for one class; all ``-inf`` for unknown classes."""
        return self._scores.get(name, self._missing)

    def score(self, t: int, name: str) -> float:
        if not 1 <= t <= self.length:
            raise IndexError(f"timestep {t} outside 1..{self.length}")
        return float(self.log_scores(name)[t - 1])

    def probabilities(self, name: str) -> np.ndarray:
        return np.exp(self.log_scores(name))

    def restrict(self, t_start: int, t_end: int) -> "ScoreTrace":
        """Sub-trace over ``[t_start, t_end]``, re-indexed to start at 1."""
        if not 1 <= t_start <= t_end <= self.length:
            raise ValueError(f"span [{t_start}, {t_end}] outside 1..{self.length}")
        sliced = {n: arr[t_start - 1 : t_end] for n, arr in self._scores.items()}
        return ScoreTrace(self.id, t_end - t_start + 1, sliced)

    def __repr__(self) -> str:
        return f"ScoreTrace(id={self.id!r}, T={self.length}, classes={sorted(self._scores)})"


class LabelTrace:
    """Per-timestep, per-class binary ground truth.  Missing reads as 0.

    ``origin`` is a free-form provenance note, e.g. "scores > 0.5" when the
    labels were thresholded from detector output rather than annotated.
    """

    def __init__(self, trace_id: str, length: int, labels: dict[str, np.ndarray], origin: "str | None" = None):
        if length < 1:
            raise TraceFormatError(f"trace {trace_id!r}: length must be >= 1, got {length}")
        self.id = trace_id
        self.origin = origin
        self.length = int(length)
        checked: dict[str, np.ndarray] = {}
        for name, arr in labels.items():
            arr = np.asarray(arr)
            if arr.shape != (length,):
                raise TraceFormatError(
                    f"trace {trace_id!r}: class {name!r} has {arr.shape[0]} labels, expected {length}"
                )
            if not np.all((arr == 0) | (arr == 1)):
                raise TraceFormatError(f"trace {trace_id!r}: class {name!r} labels must be 0 or 1")
            checked[name] = _freeze(arr.astype(bool))
        self._labels = checked
        self._missing = _freeze(np.zeros(length, dtype=bool))

    @classmethod
    def from_scores(cls, trace: ScoreTrace, tau: float = 0.5) -> "LabelTrace":
        """Estimate labels by thresholding probabilities strictly above tau."""
        rows = {name: trace.probabilities(name) > tau for name in trace.classes}
        return cls(trace.id, trace.length, rows, origin=f"scores > {tau}")

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(self._labels)

    def row(self, name: str) -> np.ndarray:
        return self._labels.get(name, self._missing)

    def label(self, t: int, name: str) -> int:
        if not 1 <= t <= self.length:
            raise IndexError(f"timestep {t} outside 1..{self.length}")
        return int(self.row(name)[t - 1])

    def present_classes(self) -> list[str]:
        """Classes with at least one positive label, sorted."""
        return sorted(n for n, row in self._labels.items() if row.any())

    def restrict(self, t_start: int, t_end: int) -> "LabelTrace":
        """Sub-trace over ``[t_start, t_end]``, re-indexed to start at 1."""
        if not 1 <= t_start <= t_end <= self.length:
            raise ValueError(f"span [{t_start}, {t_end}] outside 1..{self.length}")
        sliced = {n: row[t_start - 1 : t_end] for n, row in self._labels.items()}
        return LabelTrace(self.id, t_end - t_start + 1, sliced, origin=self.origin)

    def __repr__(self) -> str:
        return f"LabelTrace(id={self.id!r}, T={self.length}, classes={sorted(self._labels)})"


def _read_rows(path: Path, value_column: str) -> tuple[dict[str, dict[int, float]], int]:
    by_class: dict[str, dict[int, float]] = {}
    max_t = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "class", value_column]:
            raise TraceFormatError(
                f"{path}: expected header 't,class,{value_column}', got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                t = int(row["t"])
                name = row["class"]
                value = float(row[value_column])
            except (TypeError, ValueError, KeyError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: malformed row {row!r}") from exc
            if t < 1:
                raise TraceFormatError(f"{path}:{lineno}: non-positive timestep {t}")
            if not name:
                raise TraceFormatError(f"{path}:{lineno}: empty class name")
            cells = by_class.setdefault(name, {})
            if t in cells:
                raise TraceFormatError(f"{path}:{lineno}: duplicate entry for (t={t}, class={name!r})")
            cells[t] = value
            max_t = max(max_t, t)
    if max_t == 0:
        raise TraceFormatError(f"{path}: no data rows")
    return by_class, max_t


def load_score_trace(path: "str | Path", input_domain: str = "prob") -> ScoreTrace:
    """Load a score CSV (header ``t,class,score``).

    ``input_domain="prob"`` expects probabilities in [0, 1] and stores their
    logs (log 0 = -inf); ``"log"`` expects log scores <= 0 and stores them
    as-is.  T is the maximum timestep seen; missing (t, class) cells read
    as probability zero.
    """
    if input_domain not in ("prob", "log"):
        raise ValueError(f"input_domain must be 'prob' or 'log', got {input_domain!r}")
    path = Path(path)
    by_class, length = _read_rows(path, "score")
    scores: dict[str, np.ndarray] = {}
    for name, cells in by_class.items():
        arr = np.full(length, NEG_INF)
        for t, value in cells.items():
            if input_domain == "prob":
                if math.isnan(value) or not 0.0 <= value <= 1.0:
                    raise TraceFormatError(
                        f"{path}: probability outside [0, 1] for (t={t}, class={name!r}): {value}"
                    )
                arr[t - 1] = math.log(value) if value > 0.0 else NEG_INF
            else:
                if math.isnan(value) or value > 0.0:
                    raise TraceFormatError(
                        f"{path}: log score > 0 for (t={t}, class={name!r}): {value}"
                    )
                arr[t - 1] = value
        scores[name] = arr
    return ScoreTrace(path.stem, length, scores)


def load_label_trace(path: "str | Path") -> LabelTrace:
    """Load a label CSV (header ``t,class,label``, label in {0, 1})."""
    path = Path(path)
    by_class, length = _read_rows(path, "label")
    labels: dict[str, np.ndarray] = {}
    for name, cells in by_class.items():
        arr = np.zeros(length, dtype=bool)
        for t, value in cells.items():
            if value not in (0.0, 1.0):
                raise TraceFormatError(f"{path}: label not in {{0, 1}} for (t={t}, class={name!r}): {value}")
            arr[t - 1] = bool(value)
        labels[name] = arr
    return LabelTrace(path.stem, length, labels)


def _db_paths(directory: "str | Path") -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise TraceFormatError(f"trace database {directory} is not a directory")
    manifest = directory / "manifest.json"
    if manifest.exists():
        ids = json.loads(manifest.read_text())
        if not isinstance(ids, list):
            raise TraceFormatError(f"{manifest}: expected a JSON list of trace ids")
        paths = [directory / f"{trace_id}.csv" for trace_id in ids]
        for p in paths:
            if not p.exists():
                raise TraceFormatError(f"{manifest} lists {p.stem!r} but {p} does not exist")
    else:
        paths = sorted(directory.glob("*.csv"))
    if not paths:
        raise TraceFormatError(f"trace database {directory} contains no traces")
    return sorted(paths)


def load_score_db(directory: "str | Path", input_domain: str = "prob") -> dict[str, ScoreTrace]:
    return {p.stem: load_score_trace(p, input_domain) for p in _db_paths(directory)}


def load_label_db(directory: "str | Path") -> dict[str, LabelTrace]:
    return {p.stem: load_label_trace(p) for p in _db_paths(directory)}


def write_score_csv(trace: ScoreTrace, path: "str | Path") -> None:
    """Write a probability-domain score CSV; loads back to the same trace."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "class", "score"])
        for name in sorted(trace.classes):
            probs = trace.probabilities(name)
            for t in range(1, trace.length + 1):
                writer.writerow([t, name, repr(float(probs[t - 1]))])


def write_label_csv(labels: LabelTrace, path: "str | Path") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "class", "label"])
        for name in sorted(labels.classes):
            row = labels.row(name)
            for t in range(1, labels.length + 1):
                writer.writerow([t, name, int(row[t - 1])])


def _log_mean(probs: np.ndarray) -> float:
    # compensated summation keeps block means exact enough for 1e-12 goldens
    total = math.fsum(probs.tolist())
    if total <= 0.0:
        return NEG_INF
    return math.log(total / len(probs))


def smooth_atom(trace: ScoreTrace, name: str, t_start: int, t_end: int, window: int) -> float:
    """Log of the probability-domain mean over ``[t_start, min(t_start+window-1, t_end)]``.

    The window holds exactly ``window`` timesteps unless truncated by
    ``t_end``.  Unknown classes smooth to ``-inf`` (a query over a class the
    detector never reported), not an error.
    """
    if not 1 <= t_start <= t_end <= trace.length:
        raise ValueError(f"window start/end [{t_start}, {t_end}] outside 1..{trace.length}")
    if window < 1:
        raise ValueError(f"window length must be >= 1, got {window}")
    scores = trace.log_scores(name)
    hi = min(t_start + window - 1, t_end)
    if window == 1:
        return float(scores[t_start - 1])
    return _log_mean(np.exp(scores[t_start - 1 : hi]))


def window_log_means(trace: ScoreTrace, name: str, t_start: int, t_end: int, window: int) -> np.ndarray:
    """``smooth_atom`` at every grid start ``t_start, t_start+window, ... <= t_end``."""
    scores = trace.log_scores(name)[t_start - 1 : t_end]
    if window == 1:
        return scores.copy()
    probs = np.exp(scores)
    starts = range(0, len(scores), window)
    return np.array([_log_mean(probs[s : s + window]) for s in starts])


def downsample(trace: ScoreTrace, window: int) -> ScoreTrace:
    """Collapse a trace to its block-smoothed grid: one timestep per window.

    Lets window smoothing be applied independently of the scoring semantics
    (e.g. ahead of min/max robustness, which has no smoothing of its own).
    """
    if window < 1:
        raise ValueError(f"window length must be >= 1, got {window}")
    if window == 1:
        return trace
    smoothed = {
        name: window_log_means(trace, name, 1, trace.length, window)
        for name in sorted(trace.classes)
    }
    length = (trace.length + window - 1) // window
    return ScoreTrace(trace.id, length, smoothed)
