"""LLM-as-judge alignment score between a log event and its graph.

Well-formed configurations tend to land around 0.8; higher is not
automatically better, since a graph that copies log noise can score higher.
"""

from __future__ import annotations

import json
import re

from ..errors import ScoreParseError
from ..events import LogEvent
from ..kg import KnowledgeGraph
from ..llm.backend import Backend, BackendConfig, GenerationRequest, make_backend
from ..llm.prompts import build_geval_prompt

_NUMBER = re.compile(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?")


def parse_score(text: str) -> float:
    """Read the score: a bare number, ``{"score": x}``, or the last number on the last non-empty line."""
    s = text.strip()
    value: float | None = None
    try:
        doc = json.loads(s)
        if isinstance(doc, dict) and isinstance(doc.get("score"), (int, float)):
            value = float(doc["score"])
        elif isinstance(doc, (int, float)) and not isinstance(doc, bool):
            value = float(doc)
    except ValueError:
        lines = [ln for ln in s.splitlines() if ln.strip()]
        if lines:
            nums = _NUMBER.findall(lines[-1])
            if nums:
                value = float(nums[-1])
    if value is None:
        raise ScoreParseError(f"no score in judge response: {text[:80]!r}")
    if not 0.0 <= value <= 1.0:
        raise ScoreParseError(f"score {value} outside [0, 1]")
    return value


def geval_score(event: LogEvent, g: KnowledgeGraph, judge: Backend | BackendConfig, temperature: float = 0.0) -> float:
    backend = make_backend(judge) if isinstance(judge, BackendConfig) else judge
    req = GenerationRequest(tuple(build_geval_prompt(event, g)), None, temperature)
    return parse_score(backend.invoke(req))
