"""File-backed graph store.

Layout of a store directory::

    graphs.jsonl       append log, one {"id", "created_at", "failed", "graph"} per line
    sessions.json      session key -> ordered graph ids
    predictions.jsonl  tactics predictions (written by the tactics command)
    embeddings.bin, postings.json   exemplar index (see logkg.retrieval.index)
    manifest.json      run manifest

Only one writer may hold a store at a time; writes are serialised with a lock.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import NotFound, StorageError
from .kg import KnowledgeGraph, canonicalize, graph_from_dict, graph_to_dict, graph_to_json
from .ontology import OntologySchema

GRAPHS_FILE = "graphs.jsonl"
SESSIONS_FILE = "sessions.json"
PREDICTIONS_FILE = "predictions.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class StoredGraph:
    id: str
    graph: KnowledgeGraph
    created_at: datetime

    @property
    def failed(self) -> bool:
        return self.graph.is_empty

    def to_json(self) -> str:
        doc = {
            "id": self.id,
            "created_at": self.created_at.isoformat(),
            "failed": self.failed,
            "graph": graph_to_dict(self.graph),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def graph_id(g: KnowledgeGraph) -> str:
    """Content hash of the canonical graph together with its provenance."""
    return hashlib.sha256(graph_to_json(canonicalize(g)).encode("utf-8")).hexdigest()[:20]


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class GraphStore:
    """Append-log store with an in-memory map; ``directory=None`` keeps it in memory only."""

    def __init__(self, directory: str | Path | None = None) -> None:
        self.directory = Path(directory) if directory is not None else None
        self._graphs: dict[str, StoredGraph] = {}
        self._order: list[str] = []
        self._sessions: dict[str, list[str]] = {}
        self._lock = threading.RLock()
        if self.directory is not None:
            try:
                self.directory.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise StorageError(f"cannot create store directory {self.directory}: {exc}") from exc
            self._replay()

    def _replay(self) -> None:
        assert self.directory is not None
        path = self.directory / GRAPHS_FILE
        if path.exists():
            try:
                with open(path, encoding="utf-8") as fh:
                    for lineno, line in enumerate(fh, start=1):
                        if not line.strip():
                            continue
                        doc = json.loads(line)
                        sg = StoredGraph(doc["id"], graph_from_dict(doc["graph"]), datetime.fromisoformat(doc["created_at"]))
                        if sg.id not in self._graphs:
                            self._graphs[sg.id] = sg
                            self._order.append(sg.id)
            except (OSError, ValueError, KeyError) as exc:
                raise StorageError(f"corrupt graph log {path}: {exc}") from exc
        spath = self.directory / SESSIONS_FILE
        if spath.exists():
            try:
                self._sessions = {k: list(v) for k, v in json.loads(spath.read_text(encoding="utf-8")).items()}
            except (OSError, ValueError) as exc:
                raise StorageError(f"corrupt sessions file {spath}: {exc}") from exc

    def __len__(self) -> int:
        return len(self._graphs)

    def persist_graph(self, g: KnowledgeGraph, created_at: datetime | None = None) -> str:
        g = canonicalize(g)
        gid = graph_id(g)
        with self._lock:
            if gid in self._graphs:
                return gid
            when = created_at or datetime.now(timezone.utc)
            sg = StoredGraph(gid, g, when)
            if self.directory is not None:
                try:
                    with open(self.directory / GRAPHS_FILE, "a", encoding="utf-8") as fh:
                        fh.write(sg.to_json() + "\n")
                except OSError as exc:
                    raise StorageError(f"cannot append to graph log: {exc}") from exc
            self._graphs[gid] = sg
            self._order.append(gid)
        return gid

    def fetch_graph(self, gid: str) -> StoredGraph:
        try:
            return self._graphs[gid]
        except KeyError:
            raise NotFound(gid) from None

    def all_graphs(self) -> list[StoredGraph]:
        """Stored graphs in insertion order."""
        return [self._graphs[i] for i in self._order]

    def add_to_session(self, key: str, gid: str) -> None:
        with self._lock:
            ids = self._sessions.setdefault(key, [])
            if gid not in ids:
                ids.append(gid)

    def session_keys(self) -> list[str]:
        return list(self._sessions)

    def list_by_session(self, key: str) -> list[str]:
        ids = self._sessions.get(key)
        if ids is None:
            ids = [i for i in self._order if (p := self._graphs[i].graph.provenance) and p.session_key == key]
        pos = {gid: n for n, gid in enumerate(self._order)}
        return sorted(ids, key=lambda i: (self._graphs[i].created_at, pos.get(i, 0)))

    def flush_sessions(self) -> None:
        if self.directory is None:
            return
        try:
            atomic_write_text(
                self.directory / SESSIONS_FILE, json.dumps(self._sessions, indent=1, sort_keys=True) + "\n"
            )
        except OSError as exc:
            raise StorageError(f"cannot write sessions: {exc}") from exc

    def write_predictions(self, predictions: Iterable[Mapping[str, Any]], path: Path | None = None) -> Path:
        target = path or (self._require_dir() / PREDICTIONS_FILE)
        lines = [json.dumps(p, sort_keys=True, ensure_ascii=False) for p in predictions]
        try:
            atomic_write_text(target, "".join(line + "\n" for line in lines))
        except OSError as exc:
            raise StorageError(f"cannot write predictions: {exc}") from exc
        return target

    def _require_dir(self) -> Path:
        if self.directory is None:
            raise StorageError("in-memory store has no directory")
        return self.directory

    # -- export -------------------------------------------------------------

    def export(self, fmt: str, path: str | Path, schema: OntologySchema | None = None) -> None:
        graphs = sorted(self._graphs.values(), key=lambda sg: sg.id)
        if fmt == "jsonl":
            text = "".join(graph_to_json(sg.graph) + "\n" for sg in graphs)
        elif fmt == "turtle":
            if schema is None:
                raise ValueError("turtle export needs the ontology schema")
            text = to_turtle(graphs, schema)
        else:
            raise ValueError(f"unknown export format {fmt!r}")
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot write export {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Turtle
# ---------------------------------------------------------------------------

_XSD = "http://www.w3.org/2001/XMLSchema#"
_TTL_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _ttl_string(s: str) -> str:
    return '"' + "".join(_TTL_ESCAPES.get(ch, ch) for ch in s) + '"'


def _ttl_literal(value: Any, datatype: str | None) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return f'"{value}"^^xsd:integer'
    if isinstance(value, float):
        return f'"{value!r}"^^xsd:double'
    if datatype == "datetime":
        return f"{_ttl_string(str(value))}^^xsd:dateTime"
    return _ttl_string(str(value))


def _iri_part(s: str) -> str:
    from urllib.parse import quote

    return quote(s, safe="-._~")


def to_turtle(graphs: Iterable[StoredGraph], schema: OntologySchema) -> str:
    graphs = list(graphs)
    if not graphs:
        return ""
    p = schema.namespace_prefix
    lines = [
        f"@prefix {p}: <{schema.namespace_iri}> .",
        f"@prefix xsd: <{_XSD}> .",
        "",
    ]
    for sg in graphs:
        base = f"urn:logkg:graph:{sg.id}/"
        for node in sg.graph.nodes:
            subj = f"<{base}{_iri_part(node.id)}>"
            types = [f"{p}:{node.node_type}"]
            if node.node_type in schema.classes:
                for cls in schema.ancestors(node.node_type):
                    align = schema.classes[cls].external_alignment
                    if align:
                        types.append(f"<{align}>")
            preds = [f"a {', '.join(types)}"]
            props = schema.properties_of(node.node_type) if node.node_type in schema.classes else {}
            for name in sorted(node.properties):
                dt = props[name].datatype if name in props else None
                objs = ", ".join(_ttl_literal(v, dt) for v in node.values(name))
                preds.append(f"{p}:{name} {objs}")
            for r in sg.graph.relationships:
                if r.source_id == node.id:
                    preds.append(f"{p}:{r.rel_type} <{base}{_iri_part(r.target_id)}>")
            lines.append(subj + " " + " ;\n    ".join(preds) + " .")
        lines.append("")
    return "\n".join(lines)
