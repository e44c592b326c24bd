"""Stage 1: resolve-or-build schema context, then produce the initial SQL
query for the user's question."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from .bus import (
    COMPONENT_GENERATOR,
    EVENT_SCHEMA_DESCRIPTION,
    EventBus,
    ProgressEvent,
)
from .config import Guidelines, inject_guidelines
from .db.gateway import Gateway
from .llm import ChatMessage
from .parsing import ParseStrategy, parse_generation
from .store import DEFAULT_SCHEMA_KEY, SessionStore

DEFAULT_SAMPLE_ROWS = 3


class ContextSource(enum.Enum):
    Payload = "payload"
    Cache = "cache"
    Scratch = "scratch"


@dataclass(frozen=True)
class SchemaContext:
    description: str
    raw_dump_markdown: str = ""
    source: ContextSource = ContextSource.Scratch

    def __post_init__(self):
        if not self.description:
            raise ValueError("schema description must be non-empty")

    def as_payload(self) -> "SchemaContext":
        return replace(self, source=ContextSource.Payload)


@dataclass(frozen=True)
class GenerationOutcome:
    description: str
    query: str
    context: SchemaContext
    strategy: ParseStrategy
    raw_response: str = ""


def build_schema_context(
    chat_id: str,
    gateway: Gateway,
    llm,
    store: SessionStore,
    bus: EventBus,
    key: str = DEFAULT_SCHEMA_KEY,
    sample_rows: int = DEFAULT_SAMPLE_ROWS,
    guidelines: Optional[Guidelines] = None,
) -> SchemaContext:
    """Return the cached context for ``(chat_id, key)`` or build it from a
    fresh introspection pass.

    A cache hit costs zero DB statements and zero LLM calls. On a miss the
    LLM-authored description is streamed chunk-by-chunk to the event bus
    before being cached.
    """
    cached = store.load_context(chat_id, key)
    if cached is not None:
        description, _history = cached
        return SchemaContext(
            description=description,
            raw_dump_markdown=store.load_raw_dump(chat_id) or "",
            source=ContextSource.Cache,
        )

    dump = gateway.get_schema_dump(sample_rows)
    guidelines = guidelines or Guidelines.load()
    messages = [
        ChatMessage("system", guidelines.schema_description_prompt),
        ChatMessage("user", dump.markdown),
    ]

    def forward(chunk: str):
        bus.publish_safe(
            chat_id,
            ProgressEvent(
                component=COMPONENT_GENERATOR,
                event=EVENT_SCHEMA_DESCRIPTION,
                content=chunk,
            ),
        )

    description = llm.chat_stream(messages, forward)
    history = store.load_history(chat_id)
    store.save_context(chat_id, key, description, history)
    store.save_raw_dump(chat_id, dump.markdown)
    return SchemaContext(
        description=description,
        raw_dump_markdown=dump.markdown,
        source=ContextSource.Scratch,
    )


def generate(
    chat_id: str,
    prompt: str,
    context: SchemaContext,
    llm,
    store: SessionStore,
    guidelines: Optional[Guidelines] = None,
) -> GenerationOutcome:
    """One LLM call: guidelines + schema description as the system message,
    prior session history in order, the question as the user message. The
    (prompt, response) pair is appended to the session history."""
    guidelines = guidelines or Guidelines.load()
    system = (
        inject_guidelines("generation", guidelines)
        + "\n\n# Database schema\n\n"
        + context.description
    )
    history = store.load_history(chat_id)
    messages = (
        [ChatMessage("system", system)]
        + history
        + [ChatMessage("user", prompt)]
    )
    raw = llm.chat(messages)
    parsed, strategy = parse_generation(raw)
    store.save_history(
        chat_id,
        history + [ChatMessage("user", prompt), ChatMessage("assistant", raw)],
    )
    return GenerationOutcome(
        description=parsed.description,
        query=parsed.query,
        context=context,
        strategy=strategy,
        raw_response=raw,
    )
