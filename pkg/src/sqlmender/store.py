"""Session persistence: per-chat schema context, serialized message history
and the auto-incrementing validator-history counter.

Everything for one chat lives under the single hash namespace
``{chat_id}:SQLQueryEngine``, so sessions are isolated by construction. Two
backends: ``MemoryStore`` (in-process, used by tests and embedded runs) and
``RespStore`` (any Redis-compatible server).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .llm import ChatMessage
from .resp import RespConnection

NAMESPACE_SUFFIX = ":SQLQueryEngine"
DEFAULT_SCHEMA_KEY = "schemaDescription"

HISTORY_FIELD = "history"
RAW_DUMP_FIELD = "rawDump"
COUNTER_FIELD = "validatorCounter"


def serialize_history(history: List[ChatMessage]) -> str:
    return json.dumps([m.to_dict() for m in history], ensure_ascii=False)


def deserialize_history(text: str) -> List[ChatMessage]:
    return [ChatMessage.from_dict(d) for d in json.loads(text)]


def _namespace(chat_id: str) -> str:
    return f"{chat_id}{NAMESPACE_SUFFIX}"


class SessionStore:
    """Backend-agnostic surface; subclasses provide the hash primitives."""

    def _hget(self, name: str, field: str) -> Optional[str]:
        raise NotImplementedError

    def _hset(self, name: str, field: str, value: str):
        raise NotImplementedError

    def _hincrby(self, name: str, field: str) -> int:
        raise NotImplementedError

    def load_context(
        self, chat_id: str, key: str = DEFAULT_SCHEMA_KEY
    ) -> Optional[Tuple[str, List[ChatMessage]]]:
        description = self._hget(_namespace(chat_id), key)
        if description is None:
            return None
        history_json = self._hget(_namespace(chat_id), HISTORY_FIELD) or "[]"
        return description, deserialize_history(history_json)

    def save_context(
        self,
        chat_id: str,
        key: str,
        description: str,
        history: List[ChatMessage],
    ):
        if not description:
            raise ValueError("schema description must be non-empty")
        ns = _namespace(chat_id)
        self._hset(ns, key, description)
        self._hset(ns, HISTORY_FIELD, serialize_history(history))

    def save_history(self, chat_id: str, history: List[ChatMessage]):
        self._hset(_namespace(chat_id), HISTORY_FIELD, serialize_history(history))

    def load_history(self, chat_id: str) -> List[ChatMessage]:
        raw = self._hget(_namespace(chat_id), HISTORY_FIELD)
        return deserialize_history(raw) if raw else []

    def save_raw_dump(self, chat_id: str, dump_markdown: str):
        self._hset(_namespace(chat_id), RAW_DUMP_FIELD, dump_markdown)

    def load_raw_dump(self, chat_id: str) -> Optional[str]:
        return self._hget(_namespace(chat_id), RAW_DUMP_FIELD)

    def next_validator_index(self, chat_id: str) -> int:
        return self._hincrby(_namespace(chat_id), COUNTER_FIELD)

    def save_validator_history(self, chat_id: str, index: int, transcript: str):
        self._hset(_namespace(chat_id), f"validatorChat:{index}", transcript)

    def load_validator_history(self, chat_id: str, index: int) -> Optional[str]:
        return self._hget(_namespace(chat_id), f"validatorChat:{index}")


class MemoryStore(SessionStore):
    def __init__(self):
        self._hashes: Dict[str, Dict[str, str]] = {}
        self._lock = threading.Lock()

    def _hget(self, name, field):
        with self._lock:
            return self._hashes.get(name, {}).get(field)

    def _hset(self, name, field, value):
        with self._lock:
            self._hashes.setdefault(name, {})[field] = value

    def _hincrby(self, name, field):
        with self._lock:
            bucket = self._hashes.setdefault(name, {})
            value = int(bucket.get(field, "0")) + 1
            bucket[field] = str(value)
            return value


@dataclass(frozen=True)
class KvParams:
    host: str = "memory"
    port: int = 6379
    password: str = ""
    db: int = 0


class RespStore(SessionStore):
    """Redis-wire backend; one connection guarded by a lock (all operations
    are single round-trips)."""

    def __init__(self, params: KvParams):
        self._conn = RespConnection(
            params.host, params.port, password=params.password, db=params.db
        )
        self._lock = threading.Lock()

    def _hget(self, name, field):
        with self._lock:
            return self._conn.hget(name, field)

    def _hset(self, name, field, value):
        with self._lock:
            self._conn.hset(name, field, value)

    def _hincrby(self, name, field):
        with self._lock:
            return self._conn.hincrby(name, field)

    def close(self):
        self._conn.close()


def open_store(params: KvParams) -> SessionStore:
    if params.host == "memory":
        return MemoryStore()
    return RespStore(params)
