"""Ontology-grounded knowledge graphs from security log events."""

from __future__ import annotations

from .kg import KGNode, KGRelationship, KnowledgeGraph, Provenance
from .ontology import OntologySchema, load_ontology
from .validation import ValidationReport, Violation, validate_graph, validate_output

__version__ = "0.1.0"

__all__ = [
    "KGNode",
    "KGRelationship",
    "KnowledgeGraph",
    "OntologySchema",
    "Provenance",
    "ValidationReport",
    "Violation",
    "load_ontology",
    "validate_graph",
    "validate_output",
]
