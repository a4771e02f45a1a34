"""Prompt assembly for generation, correction, tactics prediction and judging.

System prompts are data files under ``logkg/data/prompts`` and are used
unchanged; only the baseline prompt has placeholders, filled from the
ontology.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Any, Sequence

from ..events import LogEvent
from ..kg import KnowledgeGraph, canonicalize, graph_to_json
from ..ontology import OntologySchema, allowed_triples
from ..validation import ValidationReport
from .backend import ChatMessage

OUTPUT_TOOL_NAME = "emit_knowledge_graph"
TACTICS_TOOL_NAME = "report_tactics"

_SCALAR_SCHEMA = {"type": ["string", "number", "integer", "boolean"]}


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Prompt text for ``main``, ``baseline``, ``tactics`` or ``geval``."""
    text = resources.files("logkg.data").joinpath("prompts", f"{name}.md").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def output_format_example() -> str:
    return json.dumps(
        {
            "nodes": [{"id": "string", "type": "NodeType", "properties": {"PropertyType": "value"}}],
            "relationships": [{"source": "node id", "target": "node id", "type": "RelationshipType"}],
        },
        separators=(",", ":"),
    )


def properties_schema(schema: OntologySchema) -> str:
    doc = {
        cls: {name: p.datatype for name, p in sorted(schema.properties_of(cls).items())}
        for cls in schema.concrete_classes
    }
    return json.dumps(doc, separators=(",", ":"))


def triples_text(schema: OntologySchema) -> str:
    return ", ".join(f"({s}, {r}, {o})" for s, r, o in sorted(allowed_triples(schema)))


def structural_text(schema: OntologySchema) -> str:
    return ", ".join(f"({s}, {r}, {o})" for s, r, o in sorted(schema.structural_triples))


def baseline_system_prompt(schema: OntologySchema) -> str:
    return (
        load_prompt("baseline")
        .replace("{{output_format}}", output_format_example())
        .replace("{{properties_schema}}", properties_schema(schema))
        .replace("{{triples}}", triples_text(schema))
        .replace("{{structural_triples}}", structural_text(schema))
    )


def output_schema(schema: OntologySchema) -> dict[str, Any]:
    """JSON schema of the graph tool: node types, property names and relationship types are enums."""
    prop_names = sorted({p for cls in schema.classes for p in schema.properties_of(cls)})
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["nodes", "relationships"],
        "properties": {
            "nodes": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["id", "type", "properties"],
                    "properties": {
                        "id": {"type": "string"},
                        "type": {"type": "string", "enum": schema.concrete_classes},
                        "properties": {
                            "type": "object",
                            "propertyNames": {"enum": prop_names},
                            "additionalProperties": {
                                "anyOf": [_SCALAR_SCHEMA, {"type": "array", "items": _SCALAR_SCHEMA, "minItems": 1}]
                            },
                        },
                    },
                },
            },
            "relationships": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["source", "target", "type"],
                    "properties": {
                        "source": {"type": "string"},
                        "target": {"type": "string"},
                        "type": {"type": "string", "enum": sorted(schema.relationship_names)},
                    },
                },
            },
        },
    }


def output_tool_description(schema: OntologySchema) -> str:
    return (
        "Emit the knowledge graph of the log event. "
        f"Allowed properties per node type: {properties_schema(schema)}. "
        f"Allowed relationships (source type, relationship type, target type): {triples_text(schema)}. "
        f"Structural relationships among node types: {structural_text(schema)}."
    )


TACTICS_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["tactics"],
    "properties": {"tactics": {"type": "array", "items": {"type": "string"}}},
}


def event_message(event: LogEvent) -> str:
    text = f"Log event:\n{event.raw}"
    if event.context:
        text += f"\n\nContext:\n{event.context}"
    return text


def build_generation_prompt(
    event: LogEvent,
    examples: Sequence[tuple[str, str | None, KnowledgeGraph]],
    schema: OntologySchema,
    *,
    structured: bool = True,
) -> list[ChatMessage]:
    """System prompt, few-shot (user, assistant) pairs, then the event."""
    system = load_prompt("main") if structured else baseline_system_prompt(schema)
    messages = [ChatMessage("system", system)]
    for log, context, graph in examples:
        messages.append(ChatMessage("user", event_message(LogEvent(raw=log, context=context))))
        messages.append(ChatMessage("assistant", graph_to_json(canonicalize(graph), provenance=False)))
    messages.append(ChatMessage("user", event_message(event)))
    return messages


def correction_message(report: ValidationReport) -> str:
    lines = [
        "The graph you produced is not valid. Revise it to fix each of the following issues, "
        "keeping everything else that is correct, and output the complete corrected graph:"
    ]
    for v in report.sorted():
        lines.append(f"- [{v.code}] {v.location}: {v.message}")
    return "\n".join(lines)


def build_correction_prompt(
    prior: Sequence[ChatMessage], failed_output: str, report: ValidationReport
) -> list[ChatMessage]:
    if report.ok:
        raise ValueError("correction prompt needs at least one violation")
    return [*prior, ChatMessage("assistant", failed_output), ChatMessage("user", correction_message(report))]


def _graph_sort_key(item: tuple[int, KnowledgeGraph]) -> tuple:
    i, g = item
    ts = g.provenance.generated_at if g.provenance else None
    return (ts is None, ts.timestamp() if ts else 0.0, i)


def build_tactics_prompt(session_graphs: Sequence[KnowledgeGraph]) -> list[ChatMessage]:
    if not session_graphs:
        raise ValueError("session has no graphs")
    ordered = [g for _, g in sorted(enumerate(session_graphs), key=_graph_sort_key)]
    blocks = [
        f"### Graph {i}\n{graph_to_json(canonicalize(g), provenance=False)}" for i, g in enumerate(ordered, start=1)
    ]
    user = (
        f"The session contains {len(ordered)} knowledge graph(s), in chronological order.\n\n"
        + "\n\n".join(blocks)
        + '\n\nAnswer with a JSON list of MITRE ATT&CK tactic names, e.g. ["Discovery"], or [] if none apply.'
    )
    return [ChatMessage("system", load_prompt("tactics")), ChatMessage("user", user)]


def build_geval_prompt(event: LogEvent, graph: KnowledgeGraph) -> list[ChatMessage]:
    user = (
        f"{event_message(event)}\n\nKnowledge graph:\n{graph_to_json(canonicalize(graph), provenance=False)}\n\n"
        "After the three steps, write the final alignment score as a number between 0 and 1 on the last line."
    )
    return [ChatMessage("system", load_prompt("geval")), ChatMessage("user", user)]
