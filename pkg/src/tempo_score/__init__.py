"""tempo-score: log-domain scoring, matching, and ranked retrieval of
temporal properties over per-timestep detection scores."""

__version__ = "0.1.0"

from .bench import (
    QMSample,
    QueryTemplate,
    Segment,
    TEMPLATES,
    TraceSpec,
    generate_qm_samples,
    generate_retrieval_ground_truth,
    synth_trace,
    template_by_name,
)
from .engine import EvalContext, log_complement, logstop, logstop_all_starts
from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    FalseConst,
    Formula,
    FormulaSyntaxError,
    Next,
    Not,
    Or,
    TrueConst,
    Until,
    format_formula,
    parse_formula,
)
from .matching import MatchResult, adaptive_threshold, auto_window, query_match
from .oracle import eval_boolean, eval_boolean_suffixes
from .retrieval import (
    RankedEntry,
    RetrievalQuery,
    balanced_accuracy,
    ir_metrics,
    retrieve,
    stl_retrieve,
)
from .robustness import RobustnessParams, stl_robustness
from .trace import (
    LabelTrace,
    ScoreTrace,
    TraceFormatError,
    downsample,
    load_label_db,
    load_label_trace,
    load_score_db,
    load_score_trace,
    smooth_atom,
    write_label_csv,
    write_score_csv,
)

__all__ = [
    "__version__",
    "Formula", "TrueConst", "FalseConst", "Atom", "Not", "And", "Or",
    "Next", "Always", "Eventually", "Until",
    "FormulaSyntaxError", "parse_formula", "format_formula",
    "ScoreTrace", "LabelTrace", "TraceFormatError",
    "load_score_trace", "load_label_trace", "load_score_db", "load_label_db",
    "write_score_csv", "write_label_csv", "smooth_atom", "downsample",
    "eval_boolean", "eval_boolean_suffixes",
    "EvalContext", "log_complement", "logstop", "logstop_all_starts",
    "RobustnessParams", "stl_robustness",
    "MatchResult", "auto_window", "adaptive_threshold", "query_match",
    "RetrievalQuery", "RankedEntry", "retrieve", "stl_retrieve",
    "ir_metrics", "balanced_accuracy",
    "QueryTemplate", "TEMPLATES", "template_by_name", "QMSample",
    "generate_qm_samples", "generate_retrieval_ground_truth",
    "Segment", "TraceSpec", "synth_trace",
]
