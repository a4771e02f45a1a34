"""Model backends and prompt builders."""

from .backend import (
    Backend,
    BackendConfig,
    ChatMessage,
    GenerationRequest,
    RemoteBackend,
    StubBackend,
    invoke,
    make_backend,
    stub_key,
)
from .prompts import (
    build_correction_prompt,
    build_generation_prompt,
    build_geval_prompt,
    build_tactics_prompt,
    load_prompt,
    output_schema,
)

__all__ = [
    "Backend",
    "BackendConfig",
    "ChatMessage",
    "GenerationRequest",
    "RemoteBackend",
    "StubBackend",
    "build_correction_prompt",
    "build_generation_prompt",
    "build_geval_prompt",
    "build_tactics_prompt",
    "invoke",
    "load_prompt",
    "make_backend",
    "output_schema",
    "stub_key",
]
