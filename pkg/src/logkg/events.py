"""Log events and the JSON-lines / plain-text input reader."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Any, Iterable, Iterator, Mapping

from .kg import parse_datetime

SYNTHETIC_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class LogEvent:
    raw: str
    context: str | None = None
    session_key: str | None = None
    received_at: datetime = SYNTHETIC_EPOCH
    source_id: str | None = None

    def __post_init__(self) -> None:
        if not self.raw:
            raise ValueError("LogEvent.raw must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "raw": self.raw,
            "context": self.context,
            "session_key": self.session_key,
            "received_at": self.received_at.isoformat(),
            "source_id": self.source_id,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], default_time: datetime = SYNTHETIC_EPOCH) -> LogEvent:
        ts = doc.get("received_at")
        received = parse_datetime(ts) if isinstance(ts, str) else None
        if received is None:
            received = default_time
        elif received.tzinfo is None:
            received = received.replace(tzinfo=timezone.utc)
        raw = doc.get("raw")
        if not isinstance(raw, str) or not raw:
            raise ValueError("event needs a non-empty string 'raw'")
        return cls(
            raw=raw,
            context=doc.get("context"),
            session_key=doc.get("session_key"),
            received_at=received,
            source_id=doc.get("source_id"),
        )


def synthetic_time(lineno: int) -> datetime:
    return SYNTHETIC_EPOCH + timedelta(seconds=lineno)


def read_events(lines: Iterable[str]) -> Iterator[LogEvent]:
    """Yield events from JSON-lines; non-JSON lines become bare raw events.

    Missing timestamps are synthesised from the line number so that input
    order is preserved deterministically.
    """
    for lineno, line in enumerate(lines, start=1):
        text = line.rstrip("\r\n")
        if not text.strip():
            continue
        doc = None
        if text.lstrip().startswith("{"):
            try:
                doc = json.loads(text)
            except json.JSONDecodeError:
                doc = None
        if isinstance(doc, dict) and "raw" in doc:
            yield LogEvent.from_dict(doc, default_time=synthetic_time(lineno))
        else:
            yield LogEvent(raw=text, received_at=synthetic_time(lineno))
