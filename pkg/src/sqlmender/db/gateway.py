"""Read-only database gateway: connection handling, schema introspection,
bounded query execution and structured error capture.

Two backends implement the same surface:

* ``PostgresGateway`` -- a real PostgreSQL connection (requires ``psycopg``,
  installed via the ``postgres`` extra).
* ``EmbeddedGateway`` -- a SQLite-backed engine that emulates the PostgreSQL
  behaviours the pipeline depends on (read-only enforcement, SQLSTATE-coded
  diagnostics, a handful of pg functions). Used for fixtures, tests and the
  benchmark mini-suite; selected by setting the connection host to
  ``"embedded"`` with ``dbname`` as the database file path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import ConnectFailed


@dataclass(frozen=True)
class ConnectionParams:
    host: str
    port: int
    dbname: str
    user: str
    password: str

    def __post_init__(self):
        if not (self.host and self.dbname and self.user):
            raise ValueError("host, dbname and user must be non-empty")
        if not 1 <= int(self.port) <= 65535:
            raise ValueError(f"port out of range: {self.port}")

    def redacted(self) -> str:
        return f"{self.user}@{self.host}:{self.port}/{self.dbname}"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    data_type: str
    is_nullable: bool
    default: Optional[str] = None


@dataclass(frozen=True)
class RawSchemaDump:
    markdown: str
    table_count: int
    sample_rows_per_table: int


@dataclass(frozen=True)
class QueryResult:
    columns: tuple
    rows: tuple
    truncated: bool = False

    @property
    def row_count(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class ErrorDiagnostics:
    error_type: str
    message: str
    sqlstate: Optional[str] = None
    diag_detail: Optional[str] = None
    diag_hint: Optional[str] = None
    traceback_text: str = ""


ExecOutcome = Union[QueryResult, ErrorDiagnostics]


def format_error(e: ErrorDiagnostics) -> str:
    """Render diagnostics as the multi-line text fed to the repair LLM.

    Deterministic: identical inputs produce byte-identical output. Optional
    fields are omitted entirely when absent.
    """
    lines = [
        f"Error type: {e.error_type}",
        f"Error message: {e.message}",
    ]
    if e.sqlstate:
        lines.append(f"SQLSTATE code: {e.sqlstate}")
    if e.diag_detail:
        lines.append(f"Error detail: {e.diag_detail}")
    if e.diag_hint:
        lines.append(f"Error hint: {e.diag_hint}")
    if e.traceback_text:
        lines.append("Traceback:")
        lines.append(e.traceback_text.rstrip("\n"))
    return "\n".join(lines)


def render_sample_value(value, data_type: str = "") -> str:
    """Serialize one sample-row cell for the markdown schema dump."""
    if value is None:
        return "NULL"
    if isinstance(value, (bytes, bytearray, memoryview)):
        return bytes(value).hex()
    dt = data_type.upper()
    if "JSON" in dt:
        try:
            parsed = value if isinstance(value, (dict, list)) else json.loads(value)
            return json.dumps(parsed, separators=(",", ":"), sort_keys=False)
        except (ValueError, TypeError):
            return str(value)
    if hasattr(value, "isoformat"):
        return value.isoformat()
    if isinstance(value, (dict, list)):
        return json.dumps(value, separators=(",", ":"))
    return str(value)


class Gateway:
    """Common surface of both backends; see module docstring."""

    params: ConnectionParams

    def list_tables(self) -> list:
        raise NotImplementedError

    def get_table_schema(self, table: str) -> list:
        raise NotImplementedError

    def execute_readonly(self, sql: str, row_limit: int) -> ExecOutcome:
        raise NotImplementedError

    def close(self):
        raise NotImplementedError

    def get_schema_dump(self, sample_rows: int) -> RawSchemaDump:
        """Markdown dump of every user table: columns plus sample rows."""
        if sample_rows < 0:
            raise ValueError("sample_rows must be >= 0")
        tables = self.list_tables()
        sections = []
        for table in tables:
            specs = self.get_table_schema(table)
            lines = [f"## Table: {table}", "", "Columns:"]
            for c in specs:
                nullable = "NULL" if c.is_nullable else "NOT NULL"
                default = f" DEFAULT {c.default}" if c.default is not None else ""
                lines.append(f"- {c.name} ({c.data_type}, {nullable}{default})")
            if sample_rows > 0:
                rows = self._fetch_sample_rows(table, sample_rows)
                if rows:
                    lines.append("")
                    lines.append(f"Sample rows (up to {sample_rows}):")
                    header = " | ".join(c.name for c in specs)
                    lines.append(f"| {header} |")
                    lines.append("|" + "|".join(["---"] * len(specs)) + "|")
                    types = [c.data_type for c in specs]
                    for row in rows:
                        cells = [
                            render_sample_value(v, t) for v, t in zip(row, types)
                        ]
                        lines.append("| " + " | ".join(cells) + " |")
            sections.append("\n".join(lines))
        markdown = "\n\n".join(sections)
        return RawSchemaDump(
            markdown=markdown,
            table_count=len(tables),
            sample_rows_per_table=sample_rows,
        )

    def _fetch_sample_rows(self, table: str, limit: int) -> list:
        raise NotImplementedError


def open_gateway(params: ConnectionParams) -> Gateway:
    """Connect and return a gateway in read-only mode.

    ``host == "embedded"`` selects the SQLite-backed engine (``dbname`` is the
    database file path); anything else connects to PostgreSQL.
    """
    if params.host == "embedded":
        from .embedded import EmbeddedGateway

        return EmbeddedGateway(params)
    try:
        from .postgres import PostgresGateway
    except ImportError as exc:
        raise ConnectFailed(
            f"PostgreSQL driver unavailable for {params.redacted()}: {exc}. "
            "Install the 'postgres' extra."
        ) from exc
    return PostgresGateway(params)
