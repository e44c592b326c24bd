"""SQLite-backed gateway that emulates the PostgreSQL behaviours the engine
relies on: driver-level read-only enforcement, SQLSTATE-coded diagnostics
with near-miss column hints, transaction rollback after errors, and shims for
the PostgreSQL functions the dialect migrator emits (TO_CHAR, SUBSTRING,
STRING_AGG, NOW, generate_series).

Used for fixtures, the benchmark mini-suite and the test stack. Production
deployments use :mod:`sqlmender.db.postgres`.
"""

from __future__ import annotations

import datetime
import difflib
import re
import sqlite3
import threading
import traceback

from ..errors import ConnectFailed, QueryFailed, UnknownTable
from .gateway import (
    ColumnSpec,
    ConnectionParams,
    ErrorDiagnostics,
    ExecOutcome,
    Gateway,
    QueryResult,
)

_TO_CHAR_MAP = [
    ("YYYY", "%Y"),
    ("HH24", "%H"),
    ("MM", "%m"),
    ("DD", "%d"),
    ("MI", "%M"),
    ("SS", "%S"),
]


def _to_char(value, fmt):
    if value is None or fmt is None:
        return None
    text = str(value)
    for unit in ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d"):
        try:
            dt = datetime.datetime.strptime(text[: len(datetime.datetime(2000, 1, 1).strftime(unit))], unit)
            break
        except ValueError:
            dt = None
    if dt is None:
        return text
    out = fmt
    for pg, strf in _TO_CHAR_MAP:
        out = out.replace(pg, dt.strftime(strf))
    return out


def _substring(s, start, length=None):
    if s is None:
        return None
    s = str(s)
    start = int(start)
    begin = max(start - 1, 0)
    if length is None:
        return s[begin:]
    return s[begin : begin + int(length)]


class _StringAgg:
    def __init__(self):
        self.parts = []

    def step(self, value, sep=","):
        if value is not None:
            self.sep = sep
            self.parts.append(str(value))

    def finalize(self):
        sep = getattr(self, "sep", ",")
        return sep.join(self.parts) if self.parts else None


def _now():
    return datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")


# SELECT generate_series(a,b) and FROM generate_series(a,b), integer literals
# only. SQLite builds here lack the series extension, so rewrite to a
# recursive CTE before execution.
_GS_BARE = re.compile(
    r"^\s*SELECT\s+generate_series\s*\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s*;?\s*$",
    re.IGNORECASE,
)
_GS_FROM = re.compile(
    r"\bgenerate_series\s*\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)", re.IGNORECASE
)


def _rewrite_generate_series(sql: str) -> str:
    m = _GS_BARE.match(sql)
    if m:
        lo, hi = m.group(1), m.group(2)
        return (
            "WITH RECURSIVE generate_series(generate_series) AS ("
            f"SELECT {lo} UNION ALL SELECT generate_series+1 FROM generate_series "
            f"WHERE generate_series < {hi}) "
            "SELECT generate_series FROM generate_series"
        )

    def repl(m):
        lo, hi = m.group(1), m.group(2)
        return (
            "(WITH RECURSIVE gs(generate_series) AS ("
            f"SELECT {lo} UNION ALL SELECT generate_series+1 FROM gs "
            f"WHERE generate_series < {hi}) SELECT generate_series FROM gs)"
        )

    return _GS_FROM.sub(repl, sql)


class EmbeddedGateway(Gateway):
    """PostgreSQL-flavoured gateway over a SQLite database file.

    The connection is put into ``query_only`` mode immediately after opening,
    so any data-modifying statement is rejected by the engine itself.
    ``statement_count`` tracks every statement issued through the gateway
    (tests use it as an introspection-economy proxy).
    """

    def __init__(self, params: ConnectionParams):
        self.params = params
        self.statement_count = 0
        # reentrant: diagnostics may introspect while execution holds the lock
        self._lock = threading.RLock()
        try:
            self._conn = sqlite3.connect(
                params.dbname, check_same_thread=False, uri=params.dbname.startswith("file:")
            )
        except sqlite3.Error as exc:
            raise ConnectFailed(
                f"cannot open embedded database at {params.redacted()}: {exc}"
            ) from exc
        self._register_pg_shims()
        self._conn.execute("PRAGMA query_only = ON")

    def _register_pg_shims(self):
        self._conn.create_function("to_char", 2, _to_char)
        self._conn.create_function("substring", 2, _substring)
        self._conn.create_function("substring", 3, _substring)
        self._conn.create_function("now", 0, _now)
        self._conn.create_aggregate("string_agg", 1, _StringAgg)
        self._conn.create_aggregate("string_agg", 2, _StringAgg)

    # -- introspection --------------------------------------------------------

    def list_tables(self) -> list:
        with self._lock:
            self.statement_count += 1
            try:
                rows = self._conn.execute(
                    "SELECT name FROM sqlite_master WHERE type = 'table' "
                    "AND name NOT LIKE 'sqlite_%' ORDER BY name"
                ).fetchall()
            except sqlite3.Error as exc:
                raise QueryFailed(str(exc)) from exc
        return [r[0] for r in rows]

    def get_table_schema(self, table: str) -> list:
        with self._lock:
            self.statement_count += 1
            try:
                rows = self._conn.execute(
                    "SELECT name, type, [notnull], dflt_value FROM pragma_table_info(?)",
                    (table,),
                ).fetchall()
            except sqlite3.Error as exc:
                raise QueryFailed(str(exc)) from exc
        if not rows:
            raise UnknownTable(f"table {table!r} does not exist")
        return [
            ColumnSpec(
                name=name,
                data_type=(dtype or "text").lower(),
                is_nullable=not notnull,
                default=dflt,
            )
            for name, dtype, notnull, dflt in rows
        ]

    def _fetch_sample_rows(self, table: str, limit: int) -> list:
        with self._lock:
            self.statement_count += 1
            return self._conn.execute(
                f'SELECT * FROM "{table}" LIMIT ?', (limit,)
            ).fetchall()

    # -- execution ------------------------------------------------------------

    def execute_readonly(self, sql: str, row_limit: int) -> ExecOutcome:
        if row_limit < 1:
            raise ValueError("row_limit must be >= 1")
        rewritten = _rewrite_generate_series(sql)
        with self._lock:
            self.statement_count += 1
            try:
                cursor = self._conn.execute(rewritten)
                rows = cursor.fetchmany(row_limit)
                truncated = cursor.fetchone() is not None
                columns = tuple(
                    d[0] for d in (cursor.description or ())
                )
                return QueryResult(
                    columns=columns,
                    rows=tuple(tuple(r) for r in rows),
                    truncated=truncated,
                )
            except sqlite3.Error as exc:
                diagnostics = self._diagnose(exc, sql)
                try:
                    self._conn.rollback()
                except sqlite3.Error:
                    pass
                return diagnostics

    def close(self):
        self._conn.close()

    # -- diagnostics ----------------------------------------------------------

    def _diagnose(self, exc: sqlite3.Error, sql: str) -> ErrorDiagnostics:
        message = str(exc)
        tb = traceback.format_exc()
        lowered = message.lower()

        m = re.search(r"no such table:\s*(\S+)", message)
        if m:
            return ErrorDiagnostics(
                error_type="UndefinedTable",
                message=f'relation "{m.group(1)}" does not exist',
                sqlstate="42P01",
                traceback_text=tb,
            )
        m = re.search(r"no such column:\s*(\S+)", message)
        if m:
            missing = m.group(1).split(".")[-1].strip('"')
            return ErrorDiagnostics(
                error_type="UndefinedColumn",
                message=f'column "{missing}" does not exist',
                sqlstate="42703",
                diag_hint=self._near_miss_hint(missing),
                traceback_text=tb,
            )
        if "readonly database" in lowered:
            return ErrorDiagnostics(
                error_type="ReadOnlySqlTransaction",
                message="cannot execute a data-modifying statement in a read-only transaction",
                sqlstate="25006",
                traceback_text=tb,
            )
        if "no such function" in lowered:
            return ErrorDiagnostics(
                error_type="UndefinedFunction",
                message=message,
                sqlstate="42883",
                traceback_text=tb,
            )
        if "ambiguous column name" in lowered:
            return ErrorDiagnostics(
                error_type="AmbiguousColumn",
                message=message,
                sqlstate="42702",
                traceback_text=tb,
            )
        if "syntax error" in lowered or "incomplete input" in lowered:
            return ErrorDiagnostics(
                error_type="SyntaxError",
                message=message,
                sqlstate="42601",
                traceback_text=tb,
            )
        return ErrorDiagnostics(
            error_type=type(exc).__name__,
            message=message,
            sqlstate=None,
            traceback_text=tb,
        )

    def _near_miss_hint(self, missing: str):
        candidates = []
        try:
            for table in self.list_tables():
                for spec in self.get_table_schema(table):
                    candidates.append((f"{table}.{spec.name}", spec.name))
        except QueryFailed:
            return None
        close = difflib.get_close_matches(
            missing, [name for _, name in candidates], n=1, cutoff=0.5
        )
        if not close:
            return None
        qualified = next(q for q, name in candidates if name == close[0])
        return f'Perhaps you meant to reference the column "{qualified}".'


def seed_embedded_database(path: str, script: str):
    """Create/populate an embedded database file before read-only use."""
    conn = sqlite3.connect(path, uri=path.startswith("file:"))
    try:
        conn.executescript(script)
        conn.commit()
    finally:
        conn.close()
