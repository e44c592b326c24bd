"""Embeddable engine entry point.

Construct from three parameter groups (LLM, database, key-value store);
backends are validated at construction but contacted lazily on first use.
The HTTP layer is a thin adapter over this class, so library and HTTP
callers observe identical behaviour.

    engine = SqlQueryEngine(
        llm_params=LlmParams(model="qwen2.5-coder:7b",
                             base_url="http://localhost:11434/v1",
                             api_key="ollama"),
        db_params=ConnectionParams(host="localhost", port=5432,
                                   dbname="mydb", user="postgres",
                                   password="secret"),
        kv_params=KvParams(host="localhost", port=6379),
    )
    outcome = engine.run("user123", "How many orders were placed last month?")
"""

from __future__ import annotations

import threading
from typing import Optional

from .bus import EventBus, open_bus
from .config import Guidelines
from .db import ConnectionParams, open_gateway
from .db.gateway import Gateway
from .evaluator import (
    EvaluationOutcome,
    LoopConfig,
    PipelineOutcome,
    evaluate,
    resolve_context,
    run_full_pipeline,
)
from .generator import (
    DEFAULT_SAMPLE_ROWS,
    GenerationOutcome,
    SchemaContext,
    build_schema_context,
    generate,
)
from .llm import LlmParams, OpenAIChatClient
from .store import DEFAULT_SCHEMA_KEY, KvParams, SessionStore, open_store


class SqlQueryEngine:
    def __init__(
        self,
        llm_params: Optional[LlmParams] = None,
        db_params: Optional[ConnectionParams] = None,
        kv_params: Optional[KvParams] = None,
        *,
        llm=None,
        gateway: Optional[Gateway] = None,
        store: Optional[SessionStore] = None,
        bus: Optional[EventBus] = None,
        loop_config: Optional[LoopConfig] = None,
        sample_rows: int = DEFAULT_SAMPLE_ROWS,
        guidelines: Optional[Guidelines] = None,
    ):
        if llm is None and llm_params is None:
            raise ValueError("either llm_params or an llm client is required")
        if gateway is None and db_params is None:
            raise ValueError("either db_params or a gateway is required")
        self._llm_params = llm_params
        self._db_params = db_params
        self._kv_params = kv_params or KvParams()
        self._llm = llm
        self._gateway = gateway
        self._store = store
        self._bus = bus
        self.loop_config = loop_config or LoopConfig()
        self.sample_rows = sample_rows
        self._guidelines = guidelines
        self._lock = threading.Lock()
        self._chat_locks: dict = {}

    # -- lazy backends --------------------------------------------------------

    @property
    def llm(self):
        with self._lock:
            if self._llm is None:
                self._llm = OpenAIChatClient(self._llm_params)
            return self._llm

    @property
    def gateway(self) -> Gateway:
        with self._lock:
            if self._gateway is None:
                self._gateway = open_gateway(self._db_params)
            return self._gateway

    @property
    def store(self) -> SessionStore:
        with self._lock:
            if self._store is None:
                self._store = open_store(self._kv_params)
            return self._store

    @property
    def bus(self) -> EventBus:
        with self._lock:
            if self._bus is None:
                self._bus = open_bus(self._kv_params)
            return self._bus

    @property
    def guidelines(self) -> Guidelines:
        with self._lock:
            if self._guidelines is None:
                self._guidelines = Guidelines.load()
            return self._guidelines

    def _chat_lock(self, chat_id: str) -> threading.Lock:
        # serialize requests per chat; distinct chats proceed concurrently
        with self._lock:
            return self._chat_locks.setdefault(chat_id, threading.Lock())

    # -- public surface -------------------------------------------------------

    def run(
        self,
        chat_id: str,
        base_prompt: str,
        *,
        loop_config: Optional[LoopConfig] = None,
        schema_key: str = DEFAULT_SCHEMA_KEY,
    ) -> PipelineOutcome:
        with self._chat_lock(chat_id):
            return run_full_pipeline(
                chat_id,
                base_prompt,
                loop_config or self.loop_config,
                self.gateway,
                self.llm,
                self.store,
                self.bus,
                key=schema_key,
                sample_rows=self.sample_rows,
                guidelines=self.guidelines,
            )

    def generate(
        self,
        chat_id: str,
        prompt: str,
        *,
        schema_key: str = DEFAULT_SCHEMA_KEY,
    ) -> GenerationOutcome:
        with self._chat_lock(chat_id):
            context = build_schema_context(
                chat_id,
                self.gateway,
                self.llm,
                self.store,
                self.bus,
                key=schema_key,
                sample_rows=self.sample_rows,
                guidelines=self.guidelines,
            )
            return generate(
                chat_id, prompt, context, self.llm, self.store, self.guidelines
            )

    def evaluate(
        self,
        chat_id: str,
        query: str,
        prompt: str = "",
        *,
        payload_context: Optional[SchemaContext] = None,
        loop_config: Optional[LoopConfig] = None,
        schema_key: str = DEFAULT_SCHEMA_KEY,
    ) -> EvaluationOutcome:
        with self._chat_lock(chat_id):
            context = resolve_context(
                payload_context,
                chat_id,
                self.gateway,
                self.llm,
                self.store,
                self.bus,
                key=schema_key,
                sample_rows=self.sample_rows,
            )
            outcome = evaluate(
                chat_id,
                query,
                prompt,
                loop_config or self.loop_config,
                context,
                self.gateway,
                self.llm,
                self.bus,
                self.guidelines,
            )
            index = self.store.next_validator_index(chat_id)
            self.store.save_validator_history(chat_id, index, outcome.trace_json())
            return outcome

    def close(self):
        for backend in (self._llm, self._gateway):
            if backend is not None and hasattr(backend, "close"):
                backend.close()
