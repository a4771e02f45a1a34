"""Per-event generation loop and session-level tactics prediction."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Sequence

from .errors import BackendError, LogKGError, NoToolCall, StorageError, SyntacticError
from .events import LogEvent
from .kg import EMPTY_GRAPH, KnowledgeGraph, Provenance, canonicalize, graph_from_dict, graph_to_dict
from .llm.backend import Backend, GenerationRequest, MAX_ATTEMPTS, stub_key
from .llm.prompts import (
    OUTPUT_TOOL_NAME,
    TACTICS_SCHEMA,
    TACTICS_TOOL_NAME,
    build_correction_prompt,
    build_generation_prompt,
    build_tactics_prompt,
    event_message,
    output_schema,
    output_tool_description,
)
from .ontology import OntologySchema
from .retrieval.embedding import Embedder
from .retrieval.index import ExemplarEntry, ExemplarIndex
from .retrieval.ranking import MMRParams
from .store import GraphStore
from .validation import ValidationReport, syntactic_report, validate_output

log = logging.getLogger(__name__)

MODES = {
    # mode: (retrieval, structured output, correction)
    "baseline": (False, False, False),
    "retrieval": (True, False, False),
    "structured": (False, True, False),
    "structured-corr": (False, True, True),
    "full": (True, True, True),
}


@dataclass(frozen=True)
class PipelineConfig:
    max_correction_attempts: int = 3
    retrieval: MMRParams = field(default_factory=MMRParams)
    retrieval_enabled: bool = True
    structured_output_enabled: bool = True
    correction_enabled: bool = True
    temperature: float = 0.7
    workers: int = 1

    def __post_init__(self) -> None:
        if self.max_correction_attempts < 0:
            raise ValueError("max_correction_attempts must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def for_mode(cls, mode: str, **kw) -> PipelineConfig:
        try:
            r, s, c = MODES[mode]
        except KeyError:
            raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}") from None
        return cls(retrieval_enabled=r, structured_output_enabled=s, correction_enabled=c, **kw)

    @property
    def mode(self) -> str:
        flags = (self.retrieval_enabled, self.structured_output_enabled, self.correction_enabled)
        for name, f in MODES.items():
            if f == flags:
                return name
        return "custom"


@dataclass
class Session:
    key: str
    events: list[LogEvent] = field(default_factory=list)
    graphs: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TacticsPrediction:
    session_key: str
    tactics: frozenset[str]
    raw_response: str
    dropped: tuple[str, ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "session_key": self.session_key,
            "tactics": sorted(self.tactics),
            "raw_response": self.raw_response,
            "dropped": list(self.dropped),
            "error": self.error,
        }


@dataclass
class RunStats:
    events: int = 0
    backend_calls: int = 0
    correction_calls: int = 0
    index_reads: int = 0
    index_additions: int = 0
    graphs_valid: int = 0
    graphs_empty: int = 0
    warnings: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def session_fallback_key(e: LogEvent) -> str:
    digest = hashlib.sha256(f"{e.source_id or ''}|{e.received_at.isoformat()}".encode("utf-8")).hexdigest()
    return f"anon-{digest[:12]}"


def group_sessions(events: Iterable[LogEvent]) -> list[Session]:
    """Group by session key; keyless events become singleton sessions.

    Events within a session are ordered by ``received_at`` (stable); sessions
    are ordered by their first event, then key.
    """
    by_key: dict[str, Session] = {}
    for e in events:
        key = e.session_key or session_fallback_key(e)
        by_key.setdefault(key, Session(key)).events.append(e)
    for s in by_key.values():
        s.events.sort(key=lambda e: e.received_at)
    return sorted(by_key.values(), key=lambda s: (s.events[0].received_at, s.key))


class Pipeline:
    """Retrieve, generate, validate/correct, persist."""

    def __init__(
        self,
        schema: OntologySchema,
        backend: Backend,
        store: GraphStore,
        index: ExemplarIndex | None = None,
        embedder: Embedder | None = None,
        config: PipelineConfig | None = None,
        clock: Callable[[LogEvent], datetime] | None = None,
    ) -> None:
        self.schema = schema
        self.backend = backend
        self.store = store
        self.index = index if index is not None else ExemplarIndex()
        self.embedder = embedder
        self.config = config or PipelineConfig()
        self.clock = clock or (lambda _e: datetime.now(timezone.utc))
        self.stats = RunStats()
        # validation report of the last attempt per event, for the violation ratio
        self.final_reports: list[tuple[str, ValidationReport]] = []
        self._lock = threading.Lock()
        self._schema_doc = output_schema(schema)
        self._tool_desc = output_tool_description(schema)
        if self.config.retrieval_enabled and embedder is None:
            raise ValueError("retrieval requires an embedder")

    # -- per event --------------------------------------------------------

    def _examples(self, e: LogEvent) -> list[tuple[str, str | None, KnowledgeGraph]]:
        if not self.config.retrieval_enabled or len(self.index) == 0:
            return []
        assert self.embedder is not None
        q_vec = self.embedder.embed(ExemplarEntry.query_text(e.raw, e.context))
        before = self.index.reads
        picked = self.index.select_exemplars(q_vec, ExemplarEntry.query_text(e.raw, e.context), self.config.retrieval)
        with self._lock:
            self.stats.index_reads += self.index.reads - before
        return [(x.log_text, x.context_text, graph_from_dict(x.graph)) for x in picked if x.graph is not None]

    def _call(self, messages, key: str, remaining: int) -> str:
        req = GenerationRequest(
            tuple(messages),
            self._schema_doc if self.config.structured_output_enabled else None,
            self.config.temperature,
            max_attempts_remaining=min(remaining, MAX_ATTEMPTS),
            tool_name=OUTPUT_TOOL_NAME,
            tool_description=self._tool_desc,
            interaction_key=key,
        )
        with self._lock:
            self.stats.backend_calls += 1
        return self.backend.invoke(req)

    def generate(self, e: LogEvent) -> tuple[KnowledgeGraph, int]:
        """Run the generation/correction loop; returns (graph or empty graph, attempts)."""
        graph, attempts, _ = self._generate(e)
        return graph, attempts

    def _generate(self, e: LogEvent) -> tuple[KnowledgeGraph, int, ValidationReport]:
        cfg = self.config
        examples = self._examples(e)
        messages = build_generation_prompt(e, examples, self.schema, structured=cfg.structured_output_enabled)
        key = stub_key(event_message(e))
        corrections = cfg.max_correction_attempts if cfg.correction_enabled else 0
        attempts = 0
        while True:
            attempts += 1
            remaining = corrections - (attempts - 1)
            try:
                raw = self._call(messages, key, remaining)
                graph, report = validate_output(raw, self.schema)
            except NoToolCall as exc:
                raw = exc.content
                graph, report = None, syntactic_report(SyntacticError("the output tool was not called"))
            if graph is not None and report.ok:
                return graph, attempts, report
            if remaining <= 0:
                log.info("event %r: no valid graph after %d attempt(s)", e.raw[:60], attempts)
                return EMPTY_GRAPH, attempts, report
            messages = build_correction_prompt(messages, raw, report)
            with self._lock:
                self.stats.correction_calls += 1

    def process_event(self, e: LogEvent, session_key: str | None = None) -> str | None:
        """Generate, persist and index one event; returns the stored graph id.

        Backend and store failures never propagate: an empty graph is persisted
        instead and a warning logged.
        """
        with self._lock:
            self.stats.events += 1
        attempts = 0
        report: ValidationReport | None = None
        try:
            graph, attempts, report = self._generate(e)
        except BackendError as exc:
            log.warning("backend error on event %r: %s", e.raw[:60], exc)
            with self._lock:
                self.stats.warnings += 1
            graph = EMPTY_GRAPH
            attempts = max(attempts, 1)
        except LogKGError as exc:
            log.warning("retrieval error on event %r: %s", e.raw[:60], exc)
            with self._lock:
                self.stats.warnings += 1
            graph = EMPTY_GRAPH
        when = self.clock(e)
        prov = Provenance(
            raw_log=e.raw,
            context=e.context,
            session_key=e.session_key,
            generated_at=when,
            model_id=getattr(self.backend, "model_id", ""),
            attempt_count=attempts,
        )
        graph = canonicalize(graph.with_provenance(prov))
        try:
            gid = self.store.persist_graph(graph, created_at=when)
        except StorageError as exc:
            log.warning("store error on event %r: %s", e.raw[:60], exc)
            with self._lock:
                self.stats.warnings += 1
            if graph.is_empty:
                return None
            graph = canonicalize(EMPTY_GRAPH.with_provenance(prov))
            try:
                gid = self.store.persist_graph(graph, created_at=when)
            except StorageError:
                return None
        with self._lock:
            if graph.is_empty:
                self.stats.graphs_empty += 1
            else:
                self.stats.graphs_valid += 1
        if report is not None:
            with self._lock:
                self.final_reports.append((gid, report))
        if session_key is not None:
            self.store.add_to_session(session_key, gid)
        if not graph.is_empty and self.config.retrieval_enabled:
            self._index_graph(gid, e, graph)
        return gid

    def _index_graph(self, gid: str, e: LogEvent, graph: KnowledgeGraph) -> None:
        assert self.embedder is not None
        vec = self.embedder.embed(ExemplarEntry.query_text(e.raw, e.context))
        entry = ExemplarEntry.build(gid, e.raw, e.context, gid, vec, graph_to_dict(graph, provenance=False))
        before = len(self.index)
        self.index.add(entry)
        with self._lock:
            self.stats.index_additions += len(self.index) - before

    # -- runs -------------------------------------------------------------

    def process_session(self, s: Session) -> Session:
        for e in s.events:
            gid = self.process_event(e, session_key=s.key)
            if gid is not None:
                s.graphs.append(gid)
        return s

    def run(self, events: Iterable[LogEvent]) -> list[Session]:
        """Process all events; sessions run sequentially unless ``workers`` > 1."""
        sessions = group_sessions(events)
        if self.config.workers == 1 or len(sessions) < 2:
            for s in sessions:
                self.process_session(s)
        else:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                list(pool.map(self.process_session, sessions))
        self.store.flush_sessions()
        return sessions


# ---------------------------------------------------------------------------
# tactics
# ---------------------------------------------------------------------------

_LIST_RE = re.compile(r"\[[^\[\]]*\]", re.S)


def parse_tactics_response(text: str) -> list[str]:
    """Accept a JSON list, ``{"tactics": [...]}``, or a JSON list embedded in prose."""
    candidates = [text.strip()]
    candidates += [m.group(0) for m in _LIST_RE.finditer(text)]
    for c in candidates:
        try:
            doc = json.loads(c)
        except ValueError:
            continue
        if isinstance(doc, dict) and isinstance(doc.get("tactics"), list):
            doc = doc["tactics"]
        if isinstance(doc, list) and all(isinstance(x, str) for x in doc):
            return doc
    raise ValueError("no tactic list found in response")


def predict_tactics(
    s: Session,
    graphs: Sequence[KnowledgeGraph],
    backend: Backend,
    vocabulary: Sequence[str],
    temperature: float = 0.7,
) -> TacticsPrediction:
    """Ask the backend for the session's tactics and filter them to ``vocabulary``."""
    usable = [g for g in graphs if not g.is_empty]
    if not usable:
        return TacticsPrediction(s.key, frozenset(), "", error="session has no non-empty graphs")
    messages = build_tactics_prompt(usable)
    req = GenerationRequest(
        tuple(messages), TACTICS_SCHEMA, temperature, tool_name=TACTICS_TOOL_NAME,
        tool_description="Report the MITRE ATT&CK tactics observed in the session.",
    )
    try:
        raw = backend.invoke(req)
    except BackendError as exc:
        log.warning("tactics backend error for session %s: %s", s.key, exc)
        return TacticsPrediction(s.key, frozenset(), "", error=f"backend error: {exc}")
    try:
        names = parse_tactics_response(raw)
    except ValueError as exc:
        return TacticsPrediction(s.key, frozenset(), raw, error=str(exc))
    canon = {v.lower(): v for v in vocabulary}
    kept, dropped = set(), []
    for n in names:
        hit = canon.get(n.strip().lower())
        if hit is None:
            dropped.append(n)
        else:
            kept.add(hit)
    if dropped:
        log.warning("session %s: dropped tactics outside the vocabulary: %s", s.key, ", ".join(dropped))
    return TacticsPrediction(s.key, frozenset(kept), raw, tuple(dropped))
