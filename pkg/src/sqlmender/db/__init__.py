from .gateway import (
    ColumnSpec,
    ConnectionParams,
    ErrorDiagnostics,
    QueryResult,
    RawSchemaDump,
    format_error,
    open_gateway,
)

__all__ = [
    "ColumnSpec",
    "ConnectionParams",
    "ErrorDiagnostics",
    "QueryResult",
    "RawSchemaDump",
    "format_error",
    "open_gateway",
]
