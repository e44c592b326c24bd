"""Self-hosted text-to-SQL engine with a self-healing execution loop.

Public surface: the embeddable :class:`SqlQueryEngine`, the FastAPI app
factory :func:`create_app`, the SQLite-to-PostgreSQL query migrator, and the
benchmark harness.
"""

from .bench import (
    AblationConfig,
    BenchmarkQuestion,
    BenchmarkReport,
    count_regressions,
    latency_stats,
    load_questions,
    run_benchmark,
    score,
)
from .bus import EventBus, MemoryBus, ProgressEvent, open_bus
from .db import ConnectionParams, QueryResult, open_gateway
from .engine import SqlQueryEngine
from .evaluator import EvaluationOutcome, LoopConfig, PipelineOutcome
from .generator import GenerationOutcome, SchemaContext
from .llm import ChatMessage, LlmParams, OpenAIChatClient, ScriptedLlmClient
from .migrate import ConversionOutcome, convert, convert_ddl
from .parsing import parse_evaluation, parse_generation
from .service import create_app
from .store import KvParams, MemoryStore, SessionStore, open_store

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "BenchmarkQuestion",
    "BenchmarkReport",
    "ChatMessage",
    "ConnectionParams",
    "ConversionOutcome",
    "EvaluationOutcome",
    "EventBus",
    "GenerationOutcome",
    "KvParams",
    "LlmParams",
    "LoopConfig",
    "MemoryBus",
    "MemoryStore",
    "OpenAIChatClient",
    "PipelineOutcome",
    "ProgressEvent",
    "QueryResult",
    "SchemaContext",
    "ScriptedLlmClient",
    "SessionStore",
    "SqlQueryEngine",
    "convert",
    "convert_ddl",
    "count_regressions",
    "create_app",
    "latency_stats",
    "load_questions",
    "open_bus",
    "open_gateway",
    "open_store",
    "parse_evaluation",
    "parse_generation",
    "run_benchmark",
    "score",
]
