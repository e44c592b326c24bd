"""Exception hierarchy shared across the engine."""


class SqlMenderError(Exception):
    """Base class for all engine errors."""


# -- database gateway ---------------------------------------------------------

class DbError(SqlMenderError):
    pass


class ConnectFailed(DbError):
    pass


class QueryFailed(DbError):
    pass


class UnknownTable(DbError):
    pass


# -- response parser ----------------------------------------------------------

class ParseFailed(SqlMenderError):
    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


# -- LLM client ---------------------------------------------------------------

class LlmError(SqlMenderError):
    pass


class LlmUnreachable(LlmError):
    pass


class LlmTimeout(LlmError):
    pass


class LlmHttpError(LlmError):
    def __init__(self, status: int, body_excerpt: str = ""):
        super().__init__(f"LLM backend returned HTTP {status}: {body_excerpt[:200]}")
        self.status = status
        self.body_excerpt = body_excerpt


class LlmStreamError(LlmError):
    """Mid-stream failure; carries the chunks delivered before the error."""

    def __init__(self, message: str, partial: str = ""):
        super().__init__(message)
        self.partial = partial


class ScriptExhausted(LlmError):
    """A scripted playbook received more chat calls than it has entries."""


# -- session store / event bus ------------------------------------------------

class StoreUnreachable(SqlMenderError):
    pass


class BusUnreachable(SqlMenderError):
    pass


class InvalidTag(SqlMenderError):
    pass


class MalformedFrame(SqlMenderError):
    pass


# -- dialect migrator ---------------------------------------------------------

class TokenizeFailed(SqlMenderError):
    pass


# -- benchmark harness --------------------------------------------------------

class MismatchedQuestionSets(SqlMenderError):
    pass


class EmptyReport(SqlMenderError):
    pass


# -- API service --------------------------------------------------------------

class NoUserMessage(SqlMenderError):
    pass
