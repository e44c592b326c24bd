"""Multi-strategy extraction of structured responses from raw LLM output.

Five strategies are attempted in a fixed order: direct JSON parsing, embedded
JSON extraction, markdown code-block extraction, SELECT/WITH regex matching,
and a raw-text fallback for bare SQL. ``<think>`` spans emitted by reasoning
models are stripped before any strategy runs. Field aliases (``sql`` ->
``query``, snake_case <-> camelCase) are normalized so the parser works with
whatever casing convention a model happens to use.
"""

from __future__ import annotations

import enum
import json
import re
from typing import Optional, Tuple

from pydantic import BaseModel

from .errors import ParseFailed


class ParseStrategy(enum.Enum):
    DirectJson = "direct_json"
    EmbeddedJson = "embedded_json"
    CodeBlock = "code_block"
    SelectRegex = "select_regex"
    RawText = "raw_text"


class GenerationResponse(BaseModel):
    description: str = ""
    query: str


class EvaluationResponse(BaseModel):
    is_valid: bool = False
    modified_user_prompt: str = ""
    observation: str = ""
    fixed_query: str


_THINK_SPAN = re.compile(r"<think>.*?</think>", re.DOTALL | re.IGNORECASE)
_THINK_OPEN = re.compile(r"<think>.*\Z", re.DOTALL | re.IGNORECASE)

_FENCE = re.compile(r"```[ \t]*(\w+)?[ \t]*\n(.*?)```", re.DOTALL)

# SELECT/WITH at a word boundary through the earliest of a trailing
# semicolon, a closing code fence, or end of text.
_SQL_SPAN = re.compile(r"\b(SELECT|WITH)\b.*?(?=;|```|\Z)", re.DOTALL | re.IGNORECASE)

# Raw-text fallback accepts the whole text only when it plausibly *is* bare
# SQL, so that prose with no query still fails the cascade.
_RAW_SQL_STARTERS = ("select", "with", "values", "table", "explain", "show")


def strip_think_tags(text: str) -> str:
    """Remove all ``<think>...</think>`` spans; an unclosed tag removes
    through end-of-text."""
    text = _THINK_SPAN.sub("", text)
    return _THINK_OPEN.sub("", text)


def _canonical_key(key: str) -> str:
    return key.replace("_", "").replace("-", "").lower()


_QUERY_ALIASES = ({"query", "sql", "sqlquery"},)
_DESCRIPTION_ALIASES = {"description", "desc"}
# fixedQuery preferred over generic query-bearing keys when both appear
_FIXED_QUERY_ALIASES = ({"fixedquery"}, {"query", "sql", "sqlquery"})
_IS_VALID_ALIASES = {"isvalid", "valid"}
_OBSERVATION_ALIASES = {"observation", "observations"}
_MODIFIED_PROMPT_ALIASES = {"modifieduserprompt", "modifiedprompt", "userprompt"}


def _pick(data: dict, aliases):
    """Look up a field by alias. ``aliases`` is a set, or a tuple of sets
    tried in preference order."""
    groups = aliases if isinstance(aliases, tuple) else (aliases,)
    for group in groups:
        for key, value in data.items():
            if _canonical_key(str(key)) in group:
                return value
    return None


def _strip_fences(sql: str) -> str:
    sql = sql.strip()
    m = _FENCE.search(sql)
    if m:
        sql = m.group(2)
    return sql.replace("```", "").strip()


def _json_candidates(text: str):
    """Balanced ``{...}`` spans (string-aware brace counting), longest first."""
    spans = []
    opens = []
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if escape:
            escape = False
            continue
        if in_string:
            if ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            opens.append(i)
        elif ch == "}" and opens:
            start = opens.pop()
            spans.append(text[start : i + 1])
    spans.sort(key=len, reverse=True)
    return spans


def _try_json(text: str) -> Optional[dict]:
    try:
        data = json.loads(text)
    except (ValueError, RecursionError):
        return None
    return data if isinstance(data, dict) else None


def _extract_sql_text(text: str, want_fence: bool) -> Optional[str]:
    if want_fence:
        m = _FENCE.search(text)
        if m is None:
            return None
        info = (m.group(1) or "").lower()
        if info not in ("", "sql", "postgresql", "postgres"):
            return None
        return m.group(2).strip()
    m = _SQL_SPAN.search(text)
    if m is None:
        return None
    return m.group(0).strip()


def _run_cascade(text: str, query_aliases: set) -> Optional[Tuple[dict, str, ParseStrategy]]:
    """Returns (fields-dict-or-None, query text, strategy) for the first
    strategy producing a non-empty query."""
    stripped = strip_think_tags(text).strip()

    data = _try_json(stripped)
    if data is not None:
        query = _pick(data, query_aliases)
        if isinstance(query, str) and query.strip():
            return data, _strip_fences(query), ParseStrategy.DirectJson

    for candidate in _json_candidates(stripped):
        data = _try_json(candidate)
        if data is None:
            continue
        query = _pick(data, query_aliases)
        if isinstance(query, str) and query.strip():
            return data, _strip_fences(query), ParseStrategy.EmbeddedJson

    fenced = _extract_sql_text(stripped, want_fence=True)
    if fenced:
        return None, fenced, ParseStrategy.CodeBlock

    matched = _extract_sql_text(stripped, want_fence=False)
    if matched:
        return None, matched, ParseStrategy.SelectRegex

    if stripped and stripped.split(None, 1)[0].rstrip(";").lower() in _RAW_SQL_STARTERS:
        return None, stripped.rstrip(";").strip(), ParseStrategy.RawText

    return None


def parse_generation(text: str) -> Tuple[GenerationResponse, ParseStrategy]:
    hit = _run_cascade(text, _QUERY_ALIASES)
    if hit is None:
        raise ParseFailed("no SQL query found in LLM response", raw_text=text)
    data, query, strategy = hit
    description = ""
    if data is not None:
        desc = _pick(data, _DESCRIPTION_ALIASES)
        if isinstance(desc, str):
            description = desc
    return GenerationResponse(description=description, query=query), strategy


def parse_evaluation(text: str) -> Tuple[EvaluationResponse, ParseStrategy]:
    hit = _run_cascade(text, _FIXED_QUERY_ALIASES)
    if hit is None:
        raise ParseFailed("no fixed query found in LLM response", raw_text=text)
    data, query, strategy = hit
    is_valid = False
    observation = ""
    modified_prompt = ""
    if data is not None:
        raw_valid = _pick(data, _IS_VALID_ALIASES)
        if isinstance(raw_valid, bool):
            is_valid = raw_valid
        obs = _pick(data, _OBSERVATION_ALIASES)
        if isinstance(obs, str):
            observation = obs
        mod = _pick(data, _MODIFIED_PROMPT_ALIASES)
        if isinstance(mod, str):
            modified_prompt = mod
    return (
        EvaluationResponse(
            is_valid=is_valid,
            modified_user_prompt=modified_prompt,
            observation=observation,
            fixed_query=query,
        ),
        strategy,
    )
