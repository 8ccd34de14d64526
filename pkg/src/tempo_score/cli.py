"""Command-line entry point.

Every subcommand writes result records as JSON lines on stdout and
diagnostics on stderr.  Exit codes: 0 success, 1 usage error, 2 data error.
Non-finite floats are serialized as the strings "-inf" / "inf" / "nan" so
the output stays strictly valid JSON.  Batch subcommands fan out per trace
(capped by the TEMPO_SCORE_THREADS environment variable, 0 = one worker
per CPU) and buffer output in sorted-id order, so parallelism never
changes the emitted bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from itertools import permutations
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    QueryTemplate,
    Segment,
    TEMPLATES,
    TraceSpec,
    generate_qm_samples,
    generate_retrieval_ground_truth,
    synth_trace,
    template_by_name,
)
from .engine import logstop, logstop_all_starts
from .formula import Formula, FormulaSyntaxError, format_formula, parse_formula
from .matching import adaptive_threshold, auto_window, query_match
from .oracle import eval_boolean
from .retrieval import RetrievalQuery, balanced_accuracy, ir_metrics, retrieve, stl_retrieve
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
    write_label_csv,
    write_score_csv,
)

__all__ = ["run", "main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1 here
        raise UsageError(message)


def _sanitize(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "-inf" if obj == float("-inf") else ("inf" if obj == float("inf") else "nan")
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def _emit(record: dict, stream=None) -> None:
    print(json.dumps(_sanitize(record), sort_keys=True), file=stream or sys.stdout)


def _thread_count() -> int:
    raw = os.environ.get("TEMPO_SCORE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"TEMPO_SCORE_THREADS must be an integer, got {raw!r}") from exc
    return n if n > 0 else (os.cpu_count() or 1)


def _map_items(fn, items: list):
    workers = min(_thread_count(), max(len(items), 1))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _parse_window(text: str):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError as exc:
        raise UsageError(f"--window must be 'auto' or a positive integer, got {text!r}") from exc
    if value < 1:
        raise UsageError(f"--window must be >= 1, got {value}")
    return value


def _build_parser() -> _Parser:
    parser = _Parser(prog="tempo-score", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score one trace against a query")
    p.add_argument("--trace", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--window", default="1")
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--end", type=int, default=None)
    p.add_argument("--input-domain", choices=("prob", "log"), default="prob")
    p.add_argument("--all-starts", action="store_true")
    p.add_argument("--semantics", choices=("logstop", "stl"), default="logstop")
    p.add_argument("--tau", type=float, default=0.5)

    p = sub.add_parser("match", help="match traces against a query with a threshold")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace")
    src.add_argument("--db")
    p.add_argument("--query", required=True)
    p.add_argument("--window", default="auto")
    p.add_argument("--threshold", choices=("adaptive", "fixed"), default="adaptive")
    p.add_argument("--input-domain", choices=("prob", "log"), default="prob")
    p.add_argument("--semantics", choices=("logstop", "stl"), default="logstop")
    p.add_argument("--tau", type=float, default=0.5)

    p = sub.add_parser("retrieve", help="rank database traces by best-span relevance")
    p.add_argument("--db", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--tlo", type=int, required=True)
    p.add_argument("--thi", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--input-domain", choices=("prob", "log"), default="prob")
    p.add_argument("--semantics", choices=("logstop", "stl"), default="logstop")
    p.add_argument("--tau", type=float, default=0.5)

    p = sub.add_parser("oracle", help="exact boolean truth of a query on a label trace")
    p.add_argument("--labels", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--at", type=int, default=1)

    p = sub.add_parser("eval-qm", help="evaluate query matching on generated samples")
    p.add_argument("--db", required=True, help="score-trace database directory")
    p.add_argument("--samples", required=True, help="samples JSONL from gen-qm")
    p.add_argument("--window", default="auto")
    p.add_argument("--threshold", choices=("adaptive", "fixed"), default="adaptive")
    p.add_argument("--ablate", choices=("stl", "no-smoothing", "fixed-threshold"), default=None)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--input-domain", choices=("prob", "log"), default="prob")

    p = sub.add_parser("eval-retrieval", help="evaluate ranked retrieval against relevance sets")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True, help="JSONL with query (and optional tlo/thi) per line")
    p.add_argument("--relevance", required=True, help="JSONL with query and relevant ids per line")
    p.add_argument("--tlo", type=int, default=None, help="fallback when a query line has no tlo")
    p.add_argument("--thi", type=int, default=None, help="fallback when a query line has no thi")
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--ablate", choices=("stl", "no-smoothing"), default=None)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--input-domain", choices=("prob", "log"), default="prob")

    p = sub.add_parser("gen-qm", help="generate query-matching samples from label traces")
    p.add_argument("--labels", required=True, help="label-trace database directory")
    p.add_argument("--template", required=True, help="template name or query text with p1..p3")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--cap", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-retrieval", help="generate retrieval queries and relevance sets")
    p.add_argument("--labels", required=True)
    p.add_argument("--tlo", type=int, required=True)
    p.add_argument("--thi", type=int, required=True)
    p.add_argument("--max-relevant", type=int, required=True)
    p.add_argument("--per-template-cap", type=int, default=None)
    p.add_argument("--template", default=None, help="restrict to one template name")
    p.add_argument("--seed", type=int, default=None, help="shuffle candidate instantiations")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic score/label corpus")
    p.add_argument("--spec", required=True, help="corpus description JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)

    return parser


def _cmd_score(args) -> None:
    phi = parse_formula(args.query)
    window = _parse_window(args.window)
    if args.semantics == "stl" and (args.all_starts or args.start != 1 or args.end is not None):
        raise UsageError("--all-starts/--start/--end are not supported with --semantics stl")
    trace = load_score_trace(args.trace, args.input_domain)
    if window == "auto":
        window = auto_window(trace.length)
    base = {"id": trace.id, "query": format_formula(phi), "window": window, "semantics": args.semantics}
    if args.semantics == "stl":
        smoothed = downsample(trace, window) if window > 1 else trace
        rho = stl_robustness(smoothed, phi, 1, RobustnessParams(args.tau))
        _emit({**base, "score": rho, "tau": args.tau})
        return
    end = args.end if args.end is not None else trace.length
    if args.all_starts:
        for t, score in logstop_all_starts(trace, phi, args.start, end, window):
            _emit({**base, "start": t, "end": end, "score": score})
    else:
        score = logstop(trace, phi, args.start, end, window)
        _emit({**base, "start": args.start, "end": end, "score": score})


def _match_record(trace: ScoreTrace, phi: Formula, window, args) -> dict:
    result = query_match(
        trace,
        phi,
        window=window,
        threshold=args.threshold,
        semantics=args.semantics,
        tau=args.tau,
    )
    return {
        "id": trace.id,
        "query": format_formula(phi),
        "score": result.score,
        "threshold": result.threshold,
        "matched": result.matched,
        "window": result.window,
        "semantics": result.semantics,
    }


def _cmd_match(args) -> None:
    phi = parse_formula(args.query)
    window = _parse_window(args.window)
    if args.trace:
        traces = [load_score_trace(args.trace, args.input_domain)]
    else:
        traces = [t for _, t in sorted(load_score_db(args.db, args.input_domain).items())]
    for record in _map_items(lambda tr: _match_record(tr, phi, window, args), traces):
        _emit(record)


def _cmd_retrieve(args) -> None:
    phi = parse_formula(args.query)
    query = RetrievalQuery(phi, args.tlo, args.thi, args.k, args.window)
    db = load_score_db(args.db, args.input_domain)
    if args.semantics == "stl":
        ranking = stl_retrieve(db, query, RobustnessParams(args.tau))
    else:
        workers = min(_thread_count(), len(db))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                ranking = retrieve(db, query, mapper=pool.map)
        else:
            ranking = retrieve(db, query)
    for rank, entry in enumerate(ranking, start=1):
        _emit({
            "rank": rank,
            "id": entry.trace_id,
            "score": entry.score,
            "span": list(entry.span) if entry.span else None,
        })


def _cmd_oracle(args) -> None:
    phi = parse_formula(args.query)
    labels = load_label_trace(args.labels)
    value = eval_boolean(labels, phi, args.at)
    _emit({"id": labels.id, "query": format_formula(phi), "t": args.at, "value": value})


def _read_jsonl(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{path}:{lineno}: invalid JSON line") from exc
    if not records:
        raise TraceFormatError(f"{path}: no records")
    return records


def _cmd_eval_qm(args) -> None:
    window = _parse_window(args.window)
    db = load_score_db(args.db, args.input_domain)
    samples = _read_jsonl(args.samples)
    threshold = args.threshold
    semantics = "logstop"
    smoothing = True
    if args.ablate == "stl":
        semantics = "stl"
    elif args.ablate == "no-smoothing":
        smoothing = False
    elif args.ablate == "fixed-threshold":
        threshold = "fixed"

    def judge(sample: dict) -> dict:
        for field in ("trace", "start", "end", "query", "label"):
            if field not in sample:
                raise TraceFormatError(f"sample missing field {field!r}: {sample}")
        if sample["trace"] not in db:
            raise TraceFormatError(f"sample references unknown trace {sample['trace']!r}")
        trace = db[sample["trace"]]
        phi = parse_formula(sample["query"])
        span = trace.restrict(int(sample["start"]), int(sample["end"]))
        result = query_match(
            span,
            phi,
            window=window,
            threshold=threshold,
            semantics=semantics,
            tau=args.tau,
            smoothing=smoothing,
        )
        label = int(sample["label"])
        return {
            "trace": trace.id,
            "start": int(sample["start"]),
            "end": int(sample["end"]),
            "query": sample["query"],
            "label": label,
            "score": result.score,
            "threshold": result.threshold,
            "window": result.window,
            "matched": result.matched,
            "correct": result.matched == bool(label),
        }

    records = _map_items(judge, samples)
    records.sort(key=lambda r: (r["trace"], r["start"], r["query"]))
    for record in records:
        _emit(record)
    predictions = {i: r["matched"] for i, r in enumerate(records)}
    truths = {i: bool(r["label"]) for i, r in enumerate(records)}
    summary = {
        "summary": True,
        "samples": len(records),
        "matching": sum(r["label"] for r in records),
        "non_matching": sum(1 - r["label"] for r in records),
        "accuracy": sum(r["correct"] for r in records) / len(records),
    }
    try:
        summary["balanced_accuracy"] = balanced_accuracy(predictions, truths)
    except ValueError:
        summary["balanced_accuracy"] = None
        print("warning: balanced accuracy undefined (one label class absent)", file=sys.stderr)
    per_query: dict[str, dict] = {}
    for query_text in sorted({r["query"] for r in records}):
        group = [r for r in records if r["query"] == query_text]
        preds = {i: r["matched"] for i, r in enumerate(group)}
        labs = {i: bool(r["label"]) for i, r in enumerate(group)}
        try:
            per_query[query_text] = {"balanced_accuracy": balanced_accuracy(preds, labs), "samples": len(group)}
        except ValueError:
            per_query[query_text] = {"balanced_accuracy": None, "samples": len(group)}
    summary["per_query"] = per_query
    _emit(summary)


def _cmd_eval_retrieval(args) -> None:
    db = load_score_db(args.db, args.input_domain)
    query_rows = _read_jsonl(args.queries)
    relevance_rows = _read_jsonl(args.relevance)
    relevance: dict[str, set[str]] = {}
    for row in relevance_rows:
        if "query" not in row or "relevant" not in row:
            raise TraceFormatError(f"relevance line missing 'query'/'relevant': {row}")
        relevance[row["query"]] = set(row["relevant"])

    window = 1 if args.ablate == "no-smoothing" else args.window

    def rank(row: dict) -> tuple[str, list]:
        if "query" not in row:
            raise TraceFormatError(f"query line missing 'query': {row}")
        t_lo = row.get("tlo", args.tlo)
        t_hi = row.get("thi", args.thi)
        if t_lo is None or t_hi is None:
            raise TraceFormatError(f"query {row['query']!r} has no tlo/thi and no fallback given")
        query = RetrievalQuery(parse_formula(row["query"]), int(t_lo), int(t_hi), len(db), window)
        if args.ablate == "stl":
            return row["query"], stl_retrieve(db, query, RobustnessParams(args.tau))
        return row["query"], retrieve(db, query)

    rankings = dict(_map_items(rank, query_rows))
    report = ir_metrics(rankings, relevance, db_size=len(db))
    for query_text in sorted(report["per_query"]):
        _emit({"query": query_text, **report["per_query"][query_text]})
    summary = {k: v for k, v in report.items() if k != "per_query"}
    _emit({"summary": True, **summary})


def _resolve_template(text: str) -> QueryTemplate:
    try:
        return template_by_name(text)
    except KeyError:
        parse_formula(text)  # validate the grammar before accepting it as a skeleton
        return QueryTemplate("custom", text, "custom")


def _cmd_gen_qm(args) -> None:
    template = _resolve_template(args.template)
    labels = load_label_db(args.labels)
    samples = generate_qm_samples(labels, template, args.length, args.cap, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for s in samples:
            line = {
                "trace": s.trace_id,
                "start": s.start,
                "end": s.end,
                "query": format_formula(s.phi),
                "label": s.label,
            }
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    matching = sum(s.label for s in samples)
    if abs(2 * matching - len(samples)) > 1:
        print(
            f"warning: label imbalance ({matching} matching vs {len(samples) - matching} non-matching)",
            file=sys.stderr,
        )
    _emit({
        "template": template.name,
        "written": len(samples),
        "matching": matching,
        "non_matching": len(samples) - matching,
        "out": args.out,
    })


def _cmd_gen_retrieval(args) -> None:
    labels = load_label_db(args.labels)
    corpus_classes = sorted({c for tr in labels.values() for c in tr.present_classes()})
    templates = [template_by_name(args.template)] if args.template else list(TEMPLATES)
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    kept_total = 0
    dropped_total = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for template in templates:
            candidates = [template.instantiate(*combo) for combo in permutations(corpus_classes, template.arity)]
            if rng is not None:
                rng.shuffle(candidates)
            kept_for_template = 0
            for phi in candidates:
                if args.per_template_cap is not None and kept_for_template >= args.per_template_cap:
                    break
                kept, dropped = generate_retrieval_ground_truth(
                    labels, [phi], args.tlo, args.thi, args.max_relevant
                )
                if dropped:
                    dropped_total += 1
                    continue
                ((phi, relevant),) = kept
                line = {
                    "query": format_formula(phi),
                    "template": template.name,
                    "tlo": args.tlo,
                    "thi": args.thi,
                    "relevant": sorted(relevant),
                }
                fh.write(json.dumps(line, sort_keys=True) + "\n")
                kept_for_template += 1
                kept_total += 1
    _emit({"kept": kept_total, "dropped": dropped_total, "out": args.out})


def _trace_spec_from_json(obj: dict, defaults: dict) -> TraceSpec:
    try:
        segments = tuple(
            Segment(seg["class"], int(seg["start"]), int(seg["end"]), seg.get("level", "high"))
            for seg in obj.get("segments", ())
        )
        return TraceSpec(
            trace_id=obj["id"],
            length=int(obj["length"]),
            classes=tuple(obj["classes"]),
            segments=segments,
            sigma=float(obj.get("sigma", defaults.get("sigma", 0.0))),
            flip=float(obj.get("flip", defaults.get("flip", 0.0))),
        )
    except (KeyError, TypeError) as exc:
        raise TraceFormatError(f"invalid trace spec {obj!r}: {exc}") from exc


def _cmd_synth(args) -> None:
    spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    defaults = spec.get("defaults", {})
    trace_objs = spec.get("traces")
    if not trace_objs:
        raise TraceFormatError(f"{args.spec}: no 'traces' list")
    out_dir = Path(args.out_dir)
    scores_dir = out_dir / "scores"
    labels_dir = out_dir / "labels"
    scores_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for index, obj in enumerate(trace_objs):
        trace_spec = _trace_spec_from_json(obj, defaults)
        score, labels = synth_trace(trace_spec, seed=[args.seed, index])
        write_score_csv(score, scores_dir / f"{score.id}.csv")
        write_label_csv(labels, labels_dir / f"{labels.id}.csv")
        ids.append(score.id)
    for directory in (scores_dir, labels_dir):
        (directory / "manifest.json").write_text(json.dumps(sorted(ids)) + "\n", encoding="utf-8")
    _emit({"traces": len(ids), "out_dir": str(out_dir)})


_COMMANDS = {
    "score": _cmd_score,
    "match": _cmd_match,
    "retrieve": _cmd_retrieve,
    "oracle": _cmd_oracle,
    "eval-qm": _cmd_eval_qm,
    "eval-retrieval": _cmd_eval_retrieval,
    "gen-qm": _cmd_gen_qm,
    "gen-retrieval": _cmd_gen_retrieval,
    "synth": _cmd_synth,
}


def run(argv: "list[str] | None" = None) -> int:
    """Parse argv, execute a subcommand, and return the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FormulaSyntaxError, TraceFormatError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
