import numpy as np
import pytest

from tempo_score import LabelTrace, ScoreTrace

CRISP_EPS = 1e-9


def prob_trace(probs: dict, trace_id: str = "t") -> ScoreTrace:
    return ScoreTrace.from_probabilities(trace_id, {k: np.asarray(v, dtype=float) for k, v in probs.items()})


def crisp_trace(bits: dict, trace_id: str = "t", eps: float = CRISP_EPS) -> ScoreTrace:
    """Near-boolean score trace: 1 -> probability 1-eps, 0 -> eps."""
    probs = {k: np.where(np.asarray(v, dtype=bool), 1.0 - eps, eps) for k, v in bits.items()}
    return ScoreTrace.from_probabilities(trace_id, probs)


def label_trace(bits: dict, trace_id: str = "t") -> LabelTrace:
    rows = {k: np.asarray(v, dtype=bool) for k, v in bits.items()}
    lengths = {len(v) for v in rows.values()}
    assert len(lengths) == 1
    return LabelTrace(trace_id, lengths.pop(), rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
