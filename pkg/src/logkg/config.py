"""Run configuration (JSON file).

Example::

    {
      "backend": {"kind": "stub", "fixtures": "stub.json", "model_id": "stub",
                  "temperature": 0.7, "timeout_s": 60, "api_key_env": "OPENAI_API_KEY",
                  "retry": {"count": 2, "backoff_s": 1.0}},
      "tactics_backend": {...},            # optional, defaults to "backend"
      "embedder": {"kind": "test", "dimension": 256, "seed": 0},
      "retrieval": {"lambda": 0.5, "candidate_pool": 20, "select_count": 5},
      "pipeline": {"mode": "full", "max_correction_attempts": 3, "workers": 1,
                   "starter_exemplars": true},
      "tactics_vocabulary": "tactics.json",  # optional
      "seed": 0
    }

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .llm.backend import BackendConfig
from .pipeline import MODES, PipelineConfig
from .retrieval.ranking import MMRParams


@dataclass(frozen=True)
class RunConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    tactics_backend: BackendConfig | None = None
    embedder: Mapping[str, Any] = field(default_factory=lambda: {"kind": "test", "dimension": 256, "seed": 0})
    retrieval: MMRParams = field(default_factory=MMRParams)
    mode: str = "full"
    max_correction_attempts: int = 3
    workers: int = 1
    starter_exemplars: str | bool = True
    tactics_vocabulary: str | None = None
    seed: int = 0
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def pipeline_config(self, mode: str | None = None) -> PipelineConfig:
        return PipelineConfig.for_mode(
            mode or self.mode,
            max_correction_attempts=self.max_correction_attempts,
            retrieval=self.retrieval,
            temperature=self.backend.temperature,
            workers=self.workers,
        )

    def snapshot(self) -> dict[str, Any]:
        return {
            "backend": self.backend.describe(),
            "tactics_backend": self.tactics_backend.describe() if self.tactics_backend else None,
            "embedder": dict(self.embedder),
            "retrieval": {
                "lambda": self.retrieval.lam,
                "candidate_pool": self.retrieval.candidate_pool,
                "select_count": self.retrieval.select_count,
            },
            "pipeline": {
                "mode": self.mode,
                "max_correction_attempts": self.max_correction_attempts,
                "workers": self.workers,
                "starter_exemplars": self.starter_exemplars,
            },
            "seed": self.seed,
        }


def config_from_dict(doc: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    try:
        backend = BackendConfig.from_dict(doc.get("backend", {}), base_dir)
        tb = doc.get("tactics_backend")
        tactics_backend = BackendConfig.from_dict(tb, base_dir) if tb else None
        r = doc.get("retrieval", {})
        retrieval = MMRParams(
            lam=float(r.get("lambda", 0.5)),
            select_count=int(r.get("select_count", 5)),
            candidate_pool=int(r.get("candidate_pool", 20)),
        )
        p = doc.get("pipeline", {})
        mode = p.get("mode", "full")
        if mode not in MODES:
            raise ConfigError(f"unknown pipeline mode {mode!r}")
        starters = p.get("starter_exemplars", True)
        if isinstance(starters, str) and base_dir is not None:
            starters = str((base_dir / starters).resolve())
        vocab = doc.get("tactics_vocabulary")
        if isinstance(vocab, str) and base_dir is not None:
            vocab = str((base_dir / vocab).resolve())
        embedder = dict(doc.get("embedder", {"kind": "test", "dimension": 256, "seed": 0}))
        return RunConfig(
            backend=backend,
            tactics_backend=tactics_backend,
            embedder=embedder,
            retrieval=retrieval,
            mode=mode,
            max_correction_attempts=int(p.get("max_correction_attempts", 3)),
            workers=int(p.get("workers", 1)),
            starter_exemplars=starters,
            tactics_vocabulary=vocab,
            seed=int(doc.get("seed", 0)),
            raw=dict(doc),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from exc
    return config_from_dict(doc, p.parent.resolve())


def load_vocabulary(path: str | None = None) -> list[str]:
    if path is None:
        text = resources.files("logkg.data").joinpath("tactics.json").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read tactic vocabulary {path}: {exc}") from exc
    doc = json.loads(text)
    tactics = doc["tactics"] if isinstance(doc, dict) else doc
    if not isinstance(tactics, list) or not all(isinstance(t, str) for t in tactics):
        raise ConfigError("tactic vocabulary must be a list of names")
    return tactics
