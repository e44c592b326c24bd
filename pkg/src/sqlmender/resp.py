"""Minimal blocking client for the Redis wire protocol (RESP2).

Only the commands the engine needs are used: AUTH, SELECT, PING, hash
get/set/increment/delete, PUBLISH and SUBSCRIBE. Kept dependency-free so the
session store and event bus can speak to any Redis-compatible server.
"""

from __future__ import annotations

import socket
from typing import List, Optional

from .errors import StoreUnreachable


class RespConnection:
    def __init__(
        self,
        host: str,
        port: int,
        password: str = "",
        db: int = 0,
        timeout: Optional[float] = 5.0,
    ):
        self.host = host
        self.port = port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
            self._file = self._sock.makefile("rb")
        except OSError as exc:
            raise StoreUnreachable(f"cannot reach {host}:{port}: {exc}") from exc
        if password:
            self.command("AUTH", password)
        if db:
            self.command("SELECT", str(db))

    def settimeout(self, timeout: Optional[float]):
        self._sock.settimeout(timeout)

    def send(self, *args: str):
        parts = [f"*{len(args)}\r\n".encode()]
        for arg in args:
            data = arg.encode() if isinstance(arg, str) else arg
            parts.append(f"${len(data)}\r\n".encode() + data + b"\r\n")
        try:
            self._sock.sendall(b"".join(parts))
        except OSError as exc:
            raise StoreUnreachable(f"send failed to {self.host}:{self.port}: {exc}") from exc

    def read_reply(self):
        try:
            line = self._file.readline()
        except OSError as exc:
            raise StoreUnreachable(f"read failed from {self.host}:{self.port}: {exc}") from exc
        if not line:
            raise StoreUnreachable(f"connection closed by {self.host}:{self.port}")
        kind, payload = line[:1], line[1:-2]
        if kind == b"+":
            return payload.decode()
        if kind == b"-":
            raise StoreUnreachable(f"server error: {payload.decode()}")
        if kind == b":":
            return int(payload)
        if kind == b"$":
            length = int(payload)
            if length == -1:
                return None
            data = self._file.read(length + 2)[:length]
            return data.decode()
        if kind == b"*":
            count = int(payload)
            if count == -1:
                return None
            return [self.read_reply() for _ in range(count)]
        raise StoreUnreachable(f"unparseable reply: {line!r}")

    def command(self, *args: str):
        self.send(*args)
        return self.read_reply()

    # -- hash / counter helpers ----------------------------------------------

    def hget(self, name: str, field: str) -> Optional[str]:
        return self.command("HGET", name, field)

    def hset(self, name: str, field: str, value: str):
        self.command("HSET", name, field, value)

    def hdel(self, name: str, field: str):
        self.command("HDEL", name, field)

    def hincrby(self, name: str, field: str, amount: int = 1) -> int:
        return self.command("HINCRBY", name, field, str(amount))

    def publish(self, channel: str, message: str) -> int:
        return self.command("PUBLISH", channel, message)

    def subscribe(self, channel: str):
        self.command("SUBSCRIBE", channel)

    def next_published(self, timeout: Optional[float]) -> Optional[str]:
        """Next pub/sub payload on a subscribed connection, or None on idle
        timeout."""
        self.settimeout(timeout)
        try:
            while True:
                reply = self.read_reply()
                if (
                    isinstance(reply, list)
                    and len(reply) == 3
                    and reply[0] == "message"
                ):
                    return reply[2]
        except StoreUnreachable as exc:
            cause = exc.__cause__
            if isinstance(cause, socket.timeout):
                return None
            raise

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass
