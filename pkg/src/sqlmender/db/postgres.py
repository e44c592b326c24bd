"""PostgreSQL gateway backed by psycopg3.

The connection is switched to read-only mode at the driver level before any
caller-issued statement runs, so data-modifying statements are rejected by
the database regardless of what the LLM generates.
"""

from __future__ import annotations

import traceback

import psycopg

from ..errors import ConnectFailed, QueryFailed, UnknownTable
from .gateway import (
    ColumnSpec,
    ConnectionParams,
    ErrorDiagnostics,
    ExecOutcome,
    Gateway,
    QueryResult,
)


class PostgresGateway(Gateway):
    def __init__(self, params: ConnectionParams):
        self.params = params
        try:
            self._conn = psycopg.connect(
                host=params.host,
                port=params.port,
                dbname=params.dbname,
                user=params.user,
                password=params.password,
                autocommit=False,
            )
            self._conn.read_only = True
        except psycopg.Error as exc:
            # never echo the password
            raise ConnectFailed(
                f"cannot connect to PostgreSQL at {params.redacted()}: {exc}"
            ) from exc

    def list_tables(self) -> list:
        try:
            with self._conn.cursor() as cur:
                cur.execute(
                    "SELECT table_name FROM information_schema.tables "
                    "WHERE table_type = 'BASE TABLE' "
                    "AND table_schema NOT IN ('pg_catalog', 'information_schema') "
                    "ORDER BY table_name"
                )
                return [r[0] for r in cur.fetchall()]
        except psycopg.Error as exc:
            self._conn.rollback()
            raise QueryFailed(str(exc)) from exc

    def get_table_schema(self, table: str) -> list:
        try:
            with self._conn.cursor() as cur:
                cur.execute(
                    "SELECT column_name, data_type, is_nullable, column_default "
                    "FROM information_schema.columns WHERE table_name = %s "
                    "ORDER BY ordinal_position",
                    (table,),
                )
                rows = cur.fetchall()
        except psycopg.Error as exc:
            self._conn.rollback()
            raise QueryFailed(str(exc)) from exc
        if not rows:
            raise UnknownTable(f"table {table!r} does not exist")
        return [
            ColumnSpec(
                name=name,
                data_type=dtype,
                is_nullable=(nullable == "YES"),
                default=default,
            )
            for name, dtype, nullable, default in rows
        ]

    def _fetch_sample_rows(self, table: str, limit: int) -> list:
        with self._conn.cursor() as cur:
            cur.execute(
                psycopg.sql.SQL("SELECT * FROM {} LIMIT %s").format(
                    psycopg.sql.Identifier(table)
                ),
                (limit,),
            )
            return cur.fetchall()

    def execute_readonly(self, sql: str, row_limit: int) -> ExecOutcome:
        if row_limit < 1:
            raise ValueError("row_limit must be >= 1")
        try:
            with self._conn.cursor() as cur:
                cur.execute(sql)
                if cur.description is None:
                    self._conn.rollback()
                    return QueryResult(columns=(), rows=(), truncated=False)
                rows = cur.fetchmany(row_limit)
                truncated = cur.fetchone() is not None
                columns = tuple(d.name for d in cur.description)
            self._conn.rollback()
            return QueryResult(
                columns=columns,
                rows=tuple(tuple(r) for r in rows),
                truncated=truncated,
            )
        except psycopg.Error as exc:
            diag = getattr(exc, "diag", None)
            diagnostics = ErrorDiagnostics(
                error_type=type(exc).__name__,
                message=(diag.message_primary if diag and diag.message_primary else str(exc)),
                sqlstate=getattr(exc, "sqlstate", None),
                diag_detail=diag.message_detail if diag else None,
                diag_hint=diag.message_hint if diag else None,
                traceback_text=traceback.format_exc(),
            )
            self._conn.rollback()
            return diagnostics

    def close(self):
        self._conn.close()
