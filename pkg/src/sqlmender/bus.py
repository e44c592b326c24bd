"""Framed progress events over per-chat pub/sub channels.

Wire format: ``</{component}:{event}><|-/|-/>{content}``. The delimiter
separates the event tag from the payload; parsing splits on the *first*
delimiter occurrence so payloads may themselves contain it. Delivery is
best-effort pub/sub: subscribers that connect late miss earlier events, and a
publish with zero subscribers is not an error.
"""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional

from .errors import BusUnreachable, InvalidTag, MalformedFrame
from .resp import RespConnection
from .store import KvParams

logger = logging.getLogger(__name__)

DELIMITER = "<|-/|-/>"

# the two tags used by the pipeline stages, plus the terminal payload tag
COMPONENT_GENERATOR = "SQLQueryGenerator"
COMPONENT_EVALUATOR = "SQLQueryEvaluator"
EVENT_SCHEMA_DESCRIPTION = "schemaDescriptionChat"
EVENT_FINAL_RESULT = "finalResult"


@dataclass(frozen=True)
class ProgressEvent:
    component: str
    event: str
    content: str


def frame(e: ProgressEvent) -> str:
    if ">" in e.component or ":" in e.component:
        raise InvalidTag(f"invalid component tag: {e.component!r}")
    if ">" in e.event:
        raise InvalidTag(f"invalid event tag: {e.event!r}")
    return f"</{e.component}:{e.event}>{DELIMITER}{e.content}"


def parse_frame(wire: str) -> ProgressEvent:
    if not wire.startswith("</"):
        raise MalformedFrame("frame does not start with '</'")
    split_at = wire.find(DELIMITER)
    if split_at < 0:
        raise MalformedFrame("frame is missing the delimiter")
    head, content = wire[:split_at], wire[split_at + len(DELIMITER):]
    if not head.endswith(">"):
        raise MalformedFrame(f"malformed tag header: {head!r}")
    tag = head[2:-1]
    component, sep, event = tag.partition(":")
    if not sep or not component or not event:
        raise MalformedFrame(f"malformed tag: {tag!r}")
    return ProgressEvent(component=component, event=event, content=content)


class Subscription:
    """Ordered stream of events for one channel, consumed by one reader."""

    def __init__(self, chat_id: str):
        self.chat_id = chat_id

    def get(self, timeout: Optional[float]) -> Optional[ProgressEvent]:
        raise NotImplementedError

    def close(self):
        pass

    def drain(self, idle_timeout: float) -> List[ProgressEvent]:
        """Collect queued events plus any arriving within ``idle_timeout`` of
        the last received one, then close."""
        events = []
        while True:
            event = self.get(timeout=idle_timeout)
            if event is None:
                break
            events.append(event)
        self.close()
        return events


class EventBus:
    def publish(self, chat_id: str, e: ProgressEvent):
        raise NotImplementedError

    def publish_raw(self, channel: str, payload: str):
        raise NotImplementedError

    def subscribe(self, chat_id: str) -> Subscription:
        raise NotImplementedError

    def publish_safe(self, chat_id: str, e: ProgressEvent):
        """Streaming is best-effort observability: log and continue when the
        bus is down rather than aborting the pipeline."""
        try:
            self.publish(chat_id, e)
        except BusUnreachable as exc:
            logger.warning("event bus unreachable, dropping event: %s", exc)


class _MemorySubscription(Subscription):
    def __init__(self, chat_id: str, bus: "MemoryBus"):
        super().__init__(chat_id)
        self._queue: "queue.Queue[str]" = queue.Queue()
        self._bus = bus

    def get(self, timeout):
        try:
            wire = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        return parse_frame(wire)

    def close(self):
        self._bus._unsubscribe(self)


class MemoryBus(EventBus):
    def __init__(self):
        self._subs: Dict[str, List[_MemorySubscription]] = {}
        self._raw_log: Dict[str, List[str]] = {}
        self._lock = threading.Lock()

    def publish(self, chat_id: str, e: ProgressEvent):
        wire = frame(e)
        with self._lock:
            subs = list(self._subs.get(chat_id, ()))
        for sub in subs:
            sub._queue.put(wire)

    def publish_raw(self, channel: str, payload: str):
        with self._lock:
            self._raw_log.setdefault(channel, []).append(payload)
            subs = list(self._subs.get(channel, ()))
        for sub in subs:
            sub._queue.put(payload)

    def subscribe(self, chat_id: str) -> Subscription:
        sub = _MemorySubscription(chat_id, self)
        with self._lock:
            self._subs.setdefault(chat_id, []).append(sub)
        return sub

    def _unsubscribe(self, sub: _MemorySubscription):
        with self._lock:
            subs = self._subs.get(sub.chat_id, [])
            if sub in subs:
                subs.remove(sub)

    def raw_messages(self, channel: str) -> List[str]:
        with self._lock:
            return list(self._raw_log.get(channel, ()))


class _RespSubscription(Subscription):
    def __init__(self, chat_id: str, conn: RespConnection):
        super().__init__(chat_id)
        self._conn = conn

    def get(self, timeout):
        try:
            wire = self._conn.next_published(timeout)
        except Exception as exc:
            raise BusUnreachable(str(exc)) from exc
        if wire is None:
            return None
        return parse_frame(wire)

    def close(self):
        self._conn.close()


class RespBus(EventBus):
    def __init__(self, params: KvParams):
        self._params = params
        self._conn = RespConnection(
            params.host, params.port, password=params.password, db=params.db
        )
        self._lock = threading.Lock()

    def publish(self, chat_id: str, e: ProgressEvent):
        self.publish_raw(chat_id, frame(e))

    def publish_raw(self, channel: str, payload: str):
        try:
            with self._lock:
                self._conn.publish(channel, payload)
        except Exception as exc:
            raise BusUnreachable(str(exc)) from exc

    def subscribe(self, chat_id: str) -> Subscription:
        try:
            conn = RespConnection(
                self._params.host,
                self._params.port,
                password=self._params.password,
                db=self._params.db,
            )
            conn.subscribe(chat_id)
        except Exception as exc:
            raise BusUnreachable(str(exc)) from exc
        return _RespSubscription(chat_id, conn)

    def close(self):
        self._conn.close()


def open_bus(params: KvParams) -> EventBus:
    if params.host == "memory":
        return MemoryBus()
    return RespBus(params)
