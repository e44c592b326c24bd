"""Configuration: environment variable handling and the operator-editable
prompt/guidelines corpus.

The guidelines are a prompt-engineering layer, not code: defaults ship as
markdown files next to this module and can be replaced wholesale via
``GUIDELINES_GENERATION_FILE`` / ``GUIDELINES_EVALUATION_FILE`` /
``SCHEMA_DESCRIPTION_PROMPT_FILE``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

from .db import ConnectionParams
from .llm import LlmParams
from .store import KvParams

_GUIDELINES_DIR = Path(__file__).parent / "guidelines"


def _read_file(env_var: str, default_name: str) -> str:
    override = os.environ.get(env_var)
    if override:
        return Path(override).read_text()
    return (_GUIDELINES_DIR / default_name).read_text()


@dataclass(frozen=True)
class Guidelines:
    generation: str
    evaluation: str
    schema_description_prompt: str

    @classmethod
    def load(cls) -> "Guidelines":
        return cls(
            generation=_read_file("GUIDELINES_GENERATION_FILE", "generation.md"),
            evaluation=_read_file("GUIDELINES_EVALUATION_FILE", "evaluation.md"),
            schema_description_prompt=_read_file(
                "SCHEMA_DESCRIPTION_PROMPT_FILE", "schema_description.md"
            ),
        )


def inject_guidelines(stage: str, guidelines: Guidelines) -> str:
    """Return the stage-appropriate guidelines blob; empty blobs are fine."""
    if stage == "generation":
        return guidelines.generation
    if stage == "evaluation":
        return guidelines.evaluation
    raise ValueError(f"unknown stage: {stage!r}")


def _env(name: str, default: str) -> str:
    return os.environ.get(name, default)


def llm_params_from_env() -> LlmParams:
    return LlmParams(
        model=_env("LLM_MODEL", "qwen2.5-coder:7b"),
        base_url=_env("LLM_BASE_URL", "http://localhost:11434/v1"),
        api_key=_env("LLM_API_KEY", ""),
        temperature=float(_env("LLM_TEMPERATURE", "0.1")),
    )


def db_params_from_env() -> ConnectionParams:
    return ConnectionParams(
        host=_env("PG_HOST", "localhost"),
        port=int(_env("PG_PORT", "5432")),
        dbname=_env("PG_DBNAME", "postgres"),
        user=_env("PG_USER", "postgres"),
        password=_env("PG_PASSWORD", ""),
    )


def kv_params_from_env() -> KvParams:
    return KvParams(
        host=_env("KV_HOST", "memory"),
        port=int(_env("KV_PORT", "6379")),
        password=_env("KV_PASSWORD", ""),
        db=int(_env("KV_DB", "0")),
    )


DEFAULT_LISTEN_PORT = 5181
ENGINE_MODEL_ID = "sqlmender"


@dataclass(frozen=True)
class ApiConfig:
    listen_port: int = DEFAULT_LISTEN_PORT
    api_keys: List[str] = field(default_factory=list)
    retry_count: int = 5
    feedback_examples: int = 3
    row_limit: int = 50

    @classmethod
    def from_env(cls) -> "ApiConfig":
        raw_keys = _env("OPENAI_API_KEY", "")
        keys = [k.strip() for k in raw_keys.split(",") if k.strip()]
        return cls(
            listen_port=int(_env("LISTEN_PORT", str(DEFAULT_LISTEN_PORT))),
            api_keys=keys,
            retry_count=int(_env("RETRY_COUNT", "5")),
            feedback_examples=int(_env("FEEDBACK_EXAMPLES", "3")),
            row_limit=int(_env("ROW_LIMIT", "50")),
        )
