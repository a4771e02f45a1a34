"""Command-line entry point: ``logkg run|evaluate|sample|tactics|export``.

Exit codes: 0 success, 1 data error (alignment, diversity), 2 configuration
error, 3 I/O or storage error. Commands only write below ``--out``; without
it, results go to standard output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import RunConfig, load_config, load_vocabulary
from .errors import (
    AlignmentError,
    ConfigError,
    DescriptorParseError,
    DiversityExhausted,
    EmptyInput,
    SchemaInconsistency,
    StorageError,
)
from .eval.metrics import GoldPair, read_gold, run_metrics, tactics_report
from .eval.sampler import sample_dataset
from .events import LogEvent, read_events
from .exemplars import bootstrap_index, load_starters
from .kg import KnowledgeGraph
from .llm.backend import make_backend
from .ontology import OntologySchema, descriptor_hash, load_ontology
from .pipeline import MODES, Pipeline, Session, predict_tactics
from .retrieval.embedding import embedder_from_config
from .retrieval.index import ExemplarIndex
from .store import MANIFEST_FILE, GraphStore, atomic_write_text
from .validation import ValidationReport

log = logging.getLogger("logkg")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
INDEX_DIR = "index"
REPORTS_FILE = "validation.jsonl"


class _Fail(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _config(path: str | None) -> RunConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from exc


def _schema(path: str | None) -> OntologySchema:
    try:
        return load_ontology(path)
    except (DescriptorParseError, SchemaInconsistency) as exc:
        raise _Fail(EXIT_CONFIG, f"ontology: {exc}") from exc


def _store(path: str) -> GraphStore:
    try:
        return GraphStore(path)
    except StorageError as exc:
        raise _Fail(EXIT_IO, str(exc)) from exc


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out, text)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write {out}: {exc}") from exc


def _read_lines(path: str) -> list[str]:
    try:
        if path == "-":
            return sys.stdin.read().splitlines()
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read {path}: {exc}") from exc


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _load_reports(out: Path) -> dict[str, dict]:
    path = out / REPORTS_FILE
    if not path.exists():
        return {}
    docs = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            doc = json.loads(line)
            docs[doc["graph_id"]] = doc
    return docs


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args.config)
    schema = _schema(args.ontology)
    mode = args.mode or cfg.mode
    try:
        pcfg = cfg.pipeline_config(mode)
        embedder = embedder_from_config(cfg.embedder)
        backend = make_backend(cfg.backend)
    except (ConfigError, ValueError) as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from exc
    try:
        events = list(read_events(_read_lines(args.input)))
    except ValueError as exc:
        raise _Fail(EXIT_CONFIG, f"bad event in {args.input}: {exc}") from exc

    out = Path(args.out)
    store = _store(args.out)
    index = ExemplarIndex()
    starters_added = 0
    if pcfg.retrieval_enabled:
        try:
            if ExemplarIndex.exists(out / INDEX_DIR):
                index = ExemplarIndex.load(out / INDEX_DIR)
            if cfg.starter_exemplars:
                path = cfg.starter_exemplars if isinstance(cfg.starter_exemplars, str) else None
                starters_added = bootstrap_index(index, embedder, load_starters(path))
        except StorageError as exc:
            raise _Fail(EXIT_IO, str(exc)) from exc
        except (OSError, ValueError, KeyError) as exc:
            raise _Fail(EXIT_CONFIG, f"starter exemplars: {exc}") from exc

    # the stub clock makes a run a pure function of its inputs
    clock = (lambda e: e.received_at) if cfg.backend.kind == "stub" else None
    pipeline = Pipeline(schema, backend, store, index, embedder, pcfg, clock=clock)
    started = _now()
    try:
        pipeline.run(events)
        if pcfg.retrieval_enabled:
            index.save(out / INDEX_DIR)
        reports = _load_reports(out)
        for gid, rep in pipeline.final_reports:
            reports.setdefault(gid, {"graph_id": gid, **rep.to_dict()})
        atomic_write_text(
            out / REPORTS_FILE,
            "".join(json.dumps(reports[g], sort_keys=True, ensure_ascii=False) + "\n" for g in sorted(reports)),
        )
    except (StorageError, OSError) as exc:
        raise _Fail(EXIT_IO, str(exc)) from exc

    manifest: dict[str, Any] = {
        "version": __version__,
        "mode": pcfg.mode,
        "config": cfg.snapshot(),
        "descriptor_hash": descriptor_hash(schema),
        "backend": {"generation": backend.model_id, "embedder": embedder.describe()},
        "seed": cfg.seed,
        "timestamps": {"started_at": started, "finished_at": _now()},
        "counts": {
            **pipeline.stats.as_dict(),
            "starter_exemplars": starters_added,
            "index_size": len(index),
            "store_size": len(store),
            "sessions": len(store.session_keys()),
        },
    }
    try:
        atomic_write_text(out / MANIFEST_FILE, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise _Fail(EXIT_IO, str(exc)) from exc
    s = pipeline.stats
    print(f"{s.events} events: {s.graphs_valid} valid, {s.graphs_empty} empty graphs ({s.backend_calls} backend calls)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def align(store: GraphStore, golds: Sequence[GoldPair]) -> list[tuple[LogEvent, KnowledgeGraph, str]]:
    """Match every gold pair to a stored graph by raw log and session key."""
    pool: dict[tuple[str, str | None], list[str]] = {}
    for sg in store.all_graphs():
        p = sg.graph.provenance
        if p is not None:
            pool.setdefault((p.raw_log, p.session_key), []).append(sg.id)
    out = []
    for gold in golds:
        ids = pool.get((gold.event.raw, gold.event.session_key))
        if not ids:
            raise AlignmentError(f"no stored graph for gold event {gold.event.raw[:60]!r}")
        gid = ids.pop(0)
        out.append((gold.event, store.fetch_graph(gid).graph, gid))
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    _schema(args.ontology)
    store = _store(args.store)
    try:
        golds = read_gold(args.gold)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read gold file: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise _Fail(EXIT_CONFIG, f"malformed gold file: {exc}") from exc
    try:
        triples = align(store, golds)
        saved = _load_reports(Path(args.store))
        reports = [ValidationReport.from_dict(saved[gid]) for _, _, gid in triples if gid in saved]
        report = run_metrics([(e, g) for e, g, _ in triples], golds, reports)
    except (AlignmentError, EmptyInput) as exc:
        raise _Fail(EXIT_DATA, str(exc)) from exc
    if args.out is None:
        sys.stdout.write((_csv(report.to_csv_rows()) if args.csv else report.to_table() + "\n"))
        return EXIT_OK
    out = Path(args.out)
    _emit(report.to_json() + "\n", out / "metrics.json")
    _emit(report.to_table() + "\n", out / "metrics.txt")
    if args.csv:
        _emit(_csv(report.to_csv_rows()), out / "metrics.csv")
    print(report.to_table())
    return EXIT_OK


def _csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = _config(args.config)
    try:
        embedder = embedder_from_config(cfg.embedder)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from exc
    lines = [ln for ln in _read_lines(args.corpus) if ln.strip()]
    seed = cfg.seed if args.seed is None else args.seed
    try:
        picked = sample_dataset(lines, args.n, args.threshold, seed=seed, embed=embedder.embed)
    except DiversityExhausted as exc:
        raise _Fail(EXIT_DATA, str(exc)) from exc
    except ValueError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from exc
    _emit("".join(p + "\n" for p in picked), Path(args.out) if args.out else None)
    return EXIT_OK


# ---------------------------------------------------------------------------
# tactics
# ---------------------------------------------------------------------------


def _gold_tactics(path: str) -> dict[str, set[str]]:
    golds: dict[str, set[str]] = {}
    for pair in read_gold(path):
        if pair.gold_tactics is not None and pair.event.session_key:
            golds.setdefault(pair.event.session_key, set()).update(pair.gold_tactics)
    return golds


def cmd_tactics(args: argparse.Namespace) -> int:
    cfg = _config(args.config)
    store = _store(args.store)
    try:
        vocabulary = load_vocabulary(cfg.tactics_vocabulary)
        backend = make_backend(cfg.tactics_backend or cfg.backend)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from exc
    temperature = (cfg.tactics_backend or cfg.backend).temperature
    preds = []
    for key in sorted(store.session_keys()):
        graphs = [store.fetch_graph(gid).graph for gid in store.list_by_session(key)]
        preds.append(predict_tactics(Session(key), graphs, backend, vocabulary, temperature))
    text = "".join(json.dumps(p.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for p in preds)
    out = Path(args.out) if args.out else None
    _emit(text, out / "predictions.jsonl" if out else None)
    if args.gold_tactics:
        try:
            golds = _gold_tactics(args.gold_tactics)
        except OSError as exc:
            raise _Fail(EXIT_IO, f"cannot read gold file: {exc}") from exc
        by_key = {p.session_key: set(p.tactics) for p in preds if p.session_key in golds}
        try:
            rep = tactics_report(by_key, {k: golds[k] for k in by_key})
        except AlignmentError as exc:
            raise _Fail(EXIT_DATA, str(exc)) from exc
        _emit(json.dumps(rep, indent=2, sort_keys=True) + "\n", out / "tactics_metrics.json" if out else None)
    return EXIT_OK


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def cmd_export(args: argparse.Namespace) -> int:
    schema = _schema(args.ontology)
    store = _store(args.store)
    try:
        store.export(args.format, args.out, schema)
    except StorageError as exc:
        raise _Fail(EXIT_IO, str(exc)) from exc
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logkg", description="Ontology-grounded knowledge graphs from log events.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="generate graphs for an event stream")
    r.add_argument("input", help="JSON-lines or plain-text events ('-' for stdin)")
    r.add_argument("--config", help="JSON run configuration")
    r.add_argument("--ontology", help="ontology descriptor (default: shipped descriptor)")
    r.add_argument("--mode", choices=sorted(MODES))
    r.add_argument("--out", required=True, help="store directory")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="score a store against gold graphs")
    e.add_argument("store")
    e.add_argument("gold", help="JSON-lines of {event, gold_graph, gold_tactics?}")
    e.add_argument("--ontology")
    e.add_argument("--out", help="directory for metrics.json / metrics.txt")
    e.add_argument("--csv", action="store_true", help="also emit a per-event CSV")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sample", help="draw an embedding-diverse subset of a corpus")
    s.add_argument("corpus", help="one event per line")
    s.add_argument("-n", type=int, required=True)
    s.add_argument("--threshold", type=float, default=0.7)
    s.add_argument("--seed", type=int)
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    t = sub.add_parser("tactics", help="predict ATT&CK tactics per session")
    t.add_argument("store")
    t.add_argument("--config")
    t.add_argument("--out", help="directory for predictions.jsonl")
    t.add_argument("--gold-tactics", help="gold JSON-lines; scores predictions per session")
    t.set_defaults(func=cmd_tactics)

    x = sub.add_parser("export", help="export the store")
    x.add_argument("store")
    x.add_argument("--format", choices=("jsonl", "turtle"), default="jsonl")
    x.add_argument("--ontology")
    x.add_argument("--out", required=True, help="output file")
    x.set_defaults(func=cmd_export)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"logkg {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
