"""Rule-based SQLite -> PostgreSQL query conversion with an explicit
unconvertible verdict.

Rewrites are token-level over a string/comment-aware tokenizer, not a full
SQL grammar: every rule is a lexical/structural pattern. Inputs containing
constructs with no faithful PostgreSQL equivalent (nested ``strftime``,
``JULIANDAY`` arithmetic, unmappable cast targets, pragmas) are reported as
``Unconvertible`` with a reason instead of being silently mangled.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .errors import TokenizeFailed

WORD = "word"
NUMBER = "number"
STRING = "string"
DQUOTE = "dquote"
BACKTICK = "backtick"
OP = "op"
WS = "ws"
COMMENT = "comment"


@dataclass
class Token:
    kind: str
    text: str

    def word(self) -> str:
        return self.text.lower() if self.kind == WORD else ""


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*|/\*.*?\*/)
  | (?P<string>'(?:[^']|'')*')
  | (?P<dquote>"(?:[^"]|"")*")
  | (?P<backtick>`(?:[^`]|``)*`)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<op>\|\||<>|<=|>=|==|!=|::|[(),;*+\-/<>=%.\[\]&|~!?:@#{}])
    """,
    re.VERBOSE | re.DOTALL,
)

_KIND_ORDER = (WS, COMMENT, STRING, DQUOTE, BACKTICK, NUMBER, WORD, OP)


def tokenize(sql: str) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise TokenizeFailed(f"cannot tokenize at offset {pos}: {sql[pos:pos+20]!r}")
        for kind in _KIND_ORDER:
            if m.group(kind) is not None:
                tokens.append(Token(kind, m.group(kind)))
                break
        pos = m.end()
    return tokens


def emit(tokens: List[Token]) -> str:
    return "".join(t.text for t in tokens)


@dataclass(frozen=True)
class ConversionOutcome:
    converted: Optional[str]
    applied_rules: Tuple[str, ...]
    verdict: str  # "Converted" or "Unconvertible"
    reason: str = ""

    @property
    def is_converted(self) -> bool:
        return self.verdict == "Converted"


class Unconvertible(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _next_sig(tokens, i, step=1):
    """Index of the next/previous non-whitespace, non-comment token."""
    j = i + step
    while 0 <= j < len(tokens) and tokens[j].kind in (WS, COMMENT):
        j += step
    return j if 0 <= j < len(tokens) else -1


def _matching_paren(tokens, open_idx):
    depth = 0
    for j in range(open_idx, len(tokens)):
        if tokens[j].kind == OP:
            if tokens[j].text == "(":
                depth += 1
            elif tokens[j].text == ")":
                depth -= 1
                if depth == 0:
                    return j
    raise TokenizeFailed("unbalanced parentheses")


def _top_level_commas(tokens, start, end):
    depth = 0
    commas = []
    for j in range(start, end):
        t = tokens[j]
        if t.kind == OP:
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
            elif t.text == "," and depth == 0:
                commas.append(j)
    return commas


# -- individual rules ---------------------------------------------------------

def rule_block_julianday(tokens):
    for t in tokens:
        if t.word() == "julianday":
            raise Unconvertible("JULIANDAY arithmetic has no automatic mapping")
    return tokens, False


def rule_block_pragma(tokens):
    for t in tokens:
        if t.word() == "pragma":
            raise Unconvertible("PRAGMA statements are SQLite-specific")
    return tokens, False


def _rename_function(tokens, old: str, new: str):
    applied = False
    for i, t in enumerate(tokens):
        if t.word() == old:
            nxt = _next_sig(tokens, i)
            if nxt >= 0 and tokens[nxt].text == "(":
                tokens[i] = Token(WORD, new)
                applied = True
    return tokens, applied


def rule_ifnull_to_coalesce(tokens):
    return _rename_function(tokens, "ifnull", "COALESCE")


def rule_substr_to_substring(tokens):
    return _rename_function(tokens, "substr", "SUBSTRING")


def rule_group_concat_to_string_agg(tokens):
    applied = False
    i = 0
    while i < len(tokens):
        if tokens[i].word() == "group_concat":
            open_idx = _next_sig(tokens, i)
            if open_idx >= 0 and tokens[open_idx].text == "(":
                close_idx = _matching_paren(tokens, open_idx)
                commas = _top_level_commas(tokens, open_idx + 1, close_idx)
                tokens[i] = Token(WORD, "STRING_AGG")
                if not commas:
                    # SQLite's default separator
                    tokens.insert(close_idx, Token(STRING, "','"))
                    tokens.insert(close_idx, Token(WS, " "))
                    tokens.insert(close_idx, Token(OP, ","))
                applied = True
        i += 1
    return tokens, applied


_CAST_TYPE_MAP = {
    "real": "DOUBLE PRECISION",
    "float": "DOUBLE PRECISION",
    "double": "DOUBLE PRECISION",
    "blob": "bytea",
    "datetime": "timestamp",
}
_CAST_TYPES_OK = {
    "integer", "int", "bigint", "smallint", "numeric", "decimal", "text",
    "varchar", "char", "date", "boolean", "interval", "timestamp", "bytea",
    "double precision",
}


def rule_cast_targets(tokens):
    applied = False
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t.word() != "cast":
            i += 1
            continue
        open_idx = _next_sig(tokens, i)
        if open_idx < 0 or tokens[open_idx].text != "(":
            i += 1
            continue
        close_idx = _matching_paren(tokens, open_idx)
        as_idx = None
        depth = 0
        for j in range(open_idx + 1, close_idx):
            tok = tokens[j]
            if tok.kind == OP and tok.text == "(":
                depth += 1
            elif tok.kind == OP and tok.text == ")":
                depth -= 1
            elif depth == 0 and tok.word() == "as":
                as_idx = j
        if as_idx is None:
            i += 1
            continue
        # the type name is the word sequence between AS and the close paren
        type_indices = []
        j = _next_sig(tokens, as_idx)
        while 0 <= j < close_idx and tokens[j].kind == WORD:
            type_indices.append(j)
            j = _next_sig(tokens, j)
        if not type_indices:
            i += 1
            continue
        typename = " ".join(tokens[j].word() for j in type_indices)
        if typename in _CAST_TYPE_MAP:
            tokens[type_indices[0] : type_indices[-1] + 1] = [
                Token(WORD, _CAST_TYPE_MAP[typename])
            ]
            applied = True
        elif typename not in _CAST_TYPES_OK and not typename.startswith(
            ("varchar", "char", "numeric", "decimal")
        ):
            raise Unconvertible(f"cast target type {typename!r} has no mapping")
        i += 1
    return tokens, applied


_STRFTIME_FMT_MAP = {
    "%Y": "YYYY",
    "%m": "MM",
    "%d": "DD",
    "%H": "HH24",
    "%M": "MI",
    "%S": "SS",
}


def _map_strftime_format(fmt: str) -> str:
    out = []
    i = 0
    while i < len(fmt):
        if fmt[i] == "%":
            directive = fmt[i : i + 2]
            if directive not in _STRFTIME_FMT_MAP:
                raise Unconvertible(f"strftime directive {directive!r} has no mapping")
            out.append(_STRFTIME_FMT_MAP[directive])
            i += 2
        else:
            out.append(fmt[i])
            i += 1
    return "".join(out)


def rule_strftime_to_to_char(tokens):
    applied = False
    i = 0
    while i < len(tokens):
        if tokens[i].word() != "strftime":
            i += 1
            continue
        open_idx = _next_sig(tokens, i)
        if open_idx < 0 or tokens[open_idx].text != "(":
            i += 1
            continue
        close_idx = _matching_paren(tokens, open_idx)
        for j in range(open_idx + 1, close_idx):
            if tokens[j].word() == "strftime":
                raise Unconvertible("nested strftime calls")
        commas = _top_level_commas(tokens, open_idx + 1, close_idx)
        if len(commas) != 1:
            raise Unconvertible("strftime with modifiers has no automatic mapping")
        fmt_idx = _next_sig(tokens, open_idx)
        if fmt_idx < 0 or tokens[fmt_idx].kind != STRING:
            raise Unconvertible("strftime format is not a string literal")
        fmt = tokens[fmt_idx].text[1:-1]
        mapped = _map_strftime_format(fmt)
        expr = tokens[commas[0] + 1 : close_idx]
        while expr and expr[0].kind in (WS, COMMENT):
            expr.pop(0)
        while expr and expr[-1].kind in (WS, COMMENT):
            expr.pop()
        replacement = (
            [Token(WORD, "TO_CHAR"), Token(OP, "(")]
            + expr
            + [Token(OP, ","), Token(WS, " "), Token(STRING, f"'{mapped}'"), Token(OP, ")")]
        )
        tokens[i : close_idx + 1] = replacement
        applied = True
        i += 1
    return tokens, applied


def rule_datetime_now(tokens):
    applied = False
    i = 0
    while i < len(tokens):
        word = tokens[i].word()
        if word in ("datetime", "date"):
            open_idx = _next_sig(tokens, i)
            if open_idx >= 0 and tokens[open_idx].text == "(":
                arg_idx = _next_sig(tokens, open_idx)
                close_idx = _next_sig(tokens, arg_idx) if arg_idx >= 0 else -1
                if (
                    arg_idx >= 0
                    and close_idx >= 0
                    and tokens[arg_idx].kind == STRING
                    and tokens[arg_idx].text.lower() == "'now'"
                    and tokens[close_idx].text == ")"
                ):
                    if word == "datetime":
                        replacement = [Token(WORD, "NOW"), Token(OP, "("), Token(OP, ")")]
                    else:
                        replacement = [Token(WORD, "CURRENT_DATE")]
                    tokens[i : close_idx + 1] = replacement
                    applied = True
        i += 1
    return tokens, applied


def rule_limit_offset_comma(tokens):
    # LIMIT x, y means LIMIT y OFFSET x in SQLite
    applied = False
    i = 0
    while i < len(tokens):
        if tokens[i].word() == "limit":
            a = _next_sig(tokens, i)
            comma = _next_sig(tokens, a) if a >= 0 else -1
            b = _next_sig(tokens, comma) if comma >= 0 else -1
            if (
                a >= 0 and comma >= 0 and b >= 0
                and tokens[a].kind == NUMBER
                and tokens[comma].text == ","
                and tokens[b].kind == NUMBER
            ):
                offset, limit = tokens[a].text, tokens[b].text
                tokens[i : b + 1] = [
                    Token(WORD, "LIMIT"),
                    Token(WS, " "),
                    Token(NUMBER, limit),
                    Token(WS, " "),
                    Token(WORD, "OFFSET"),
                    Token(WS, " "),
                    Token(NUMBER, offset),
                ]
                applied = True
        i += 1
    return tokens, applied


def rule_backtick_identifiers(tokens):
    applied = False
    for i, t in enumerate(tokens):
        if t.kind == BACKTICK:
            inner = t.text[1:-1].replace("``", "`").replace('"', '""')
            tokens[i] = Token(DQUOTE, f'"{inner}"')
            applied = True
    return tokens, applied


_IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def rule_double_quoted_literals(tokens):
    # SQLite treats unresolvable double-quoted strings as literals; anything
    # that could not be a bare identifier is safely a literal.
    applied = False
    for i, t in enumerate(tokens):
        if t.kind == DQUOTE:
            inner = t.text[1:-1].replace('""', '"')
            if not _IDENTIFIER_RE.match(inner):
                tokens[i] = Token(STRING, "'" + inner.replace("'", "''") + "'")
                applied = True
    return tokens, applied


_BOOLEAN_NAME_RE = re.compile(r"^(is|has)([_A-Z]|$)")


def rule_boolean_comparisons(tokens):
    # heuristic: flag-style column names compared to 0/1
    applied = False
    for i, t in enumerate(tokens):
        if t.kind == OP and t.text == "=":
            left = _next_sig(tokens, i, step=-1)
            right = _next_sig(tokens, i)
            if (
                left >= 0 and right >= 0
                and tokens[left].kind == WORD
                and _BOOLEAN_NAME_RE.match(tokens[left].text)
                and tokens[right].kind == NUMBER
                and tokens[right].text in ("0", "1")
            ):
                tokens[right] = Token(
                    WORD, "TRUE" if tokens[right].text == "1" else "FALSE"
                )
                applied = True
    return tokens, applied


def _passthrough(predicate):
    def rule(tokens):
        return tokens, any(predicate(t) for t in tokens)

    return rule


rule_length_passthrough = _passthrough(lambda t: t.word() == "length")
rule_concat_passthrough = _passthrough(lambda t: t.kind == OP and t.text == "||")
rule_random_passthrough = _passthrough(lambda t: t.word() == "random")


def rule_integer_pk_to_serial(tokens):
    # INTEGER PRIMARY KEY [AUTOINCREMENT] -> SERIAL PRIMARY KEY
    applied = False
    i = 0
    while i < len(tokens):
        if tokens[i].word() in ("integer", "int"):
            p1 = _next_sig(tokens, i)
            p2 = _next_sig(tokens, p1) if p1 >= 0 else -1
            if (
                p1 >= 0 and p2 >= 0
                and tokens[p1].word() == "primary"
                and tokens[p2].word() == "key"
            ):
                tokens[i] = Token(WORD, "SERIAL")
                auto = _next_sig(tokens, p2)
                if auto >= 0 and tokens[auto].word() == "autoincrement":
                    del tokens[p2 + 1 : auto + 1]
                applied = True
        i += 1
    return tokens, applied


QUERY_RULES = [
    ("block_pragma", rule_block_pragma),
    ("block_julianday", rule_block_julianday),
    ("ifnull_to_coalesce", rule_ifnull_to_coalesce),
    ("group_concat_to_string_agg", rule_group_concat_to_string_agg),
    ("substr_to_substring", rule_substr_to_substring),
    ("strftime_to_to_char", rule_strftime_to_to_char),
    ("cast_type_mapping", rule_cast_targets),
    ("datetime_now_to_now", rule_datetime_now),
    ("limit_comma_to_offset", rule_limit_offset_comma),
    # literal detection must see only the user's original double quotes, so
    # it runs before backticks are rewritten into double-quoted identifiers
    ("double_quoted_literals", rule_double_quoted_literals),
    ("backticks_to_double_quotes", rule_backtick_identifiers),
    ("boolean_flag_comparisons", rule_boolean_comparisons),
    ("length_passthrough", rule_length_passthrough),
    ("concat_passthrough", rule_concat_passthrough),
    ("random_passthrough", rule_random_passthrough),
]

DDL_RULES = QUERY_RULES + [
    ("integer_pk_to_serial", rule_integer_pk_to_serial),
]

_AFFINITY_MAP = {
    "text": "text",
    "real": "double precision",
    "blob": "bytea",
    "int": "integer",
    "integer": "integer",
    "datetime": "timestamp",
    "double": "double precision",
    "float": "double precision",
}

_CONSTRAINT_WORDS = {
    "primary", "not", "null", "unique", "default", "references", "check",
    "foreign", "constraint", "on", "collate", "serial",
}


def _map_ddl_affinities(tokens):
    """Inside the CREATE TABLE column list, map the type word following each
    column name through the SQLite affinity map."""
    applied = False
    try:
        open_idx = next(
            i for i, t in enumerate(tokens) if t.kind == OP and t.text == "("
        )
    except StopIteration:
        return tokens, False
    close_idx = _matching_paren(tokens, open_idx)
    expect_name = True
    depth = 0
    i = open_idx + 1
    while i < close_idx:
        t = tokens[i]
        if t.kind == OP and t.text == "(":
            depth += 1
        elif t.kind == OP and t.text == ")":
            depth -= 1
        elif depth == 0 and t.kind == OP and t.text == ",":
            expect_name = True
        elif depth == 0 and t.kind in (WORD, DQUOTE, BACKTICK):
            if expect_name:
                if t.word() in _CONSTRAINT_WORDS:
                    # table-level constraint, no column name here
                    expect_name = False
                else:
                    expect_name = False
                    type_idx = _next_sig(tokens, i)
                    if (
                        type_idx >= 0
                        and type_idx < close_idx
                        and tokens[type_idx].kind == WORD
                        and tokens[type_idx].word() not in _CONSTRAINT_WORDS
                        and tokens[type_idx].word() in _AFFINITY_MAP
                    ):
                        mapped = _AFFINITY_MAP[tokens[type_idx].word()]
                        if mapped != tokens[type_idx].word():
                            tokens[type_idx] = Token(WORD, mapped)
                            applied = True
                    i = type_idx if type_idx > i else i
        i += 1
    return tokens, applied


def _run(sql: str, rules) -> ConversionOutcome:
    try:
        tokens = tokenize(sql)
    except TokenizeFailed:
        raise
    applied = []
    try:
        for name, rule in rules:
            tokens, did = rule(tokens)
            if did:
                applied.append(name)
    except Unconvertible as exc:
        return ConversionOutcome(
            converted=None,
            applied_rules=tuple(applied),
            verdict="Unconvertible",
            reason=exc.reason,
        )
    return ConversionOutcome(
        converted=emit(tokens),
        applied_rules=tuple(applied),
        verdict="Converted",
    )


def convert(sqlite_sql: str) -> ConversionOutcome:
    """Convert one SQLite query to PostgreSQL."""
    return _run(sqlite_sql, QUERY_RULES)


def convert_ddl(sqlite_ddl: str) -> ConversionOutcome:
    """Convert one CREATE TABLE statement, including SERIAL promotion and
    affinity type mapping."""
    outcome = _run(sqlite_ddl, DDL_RULES)
    if not outcome.is_converted:
        return outcome
    tokens = tokenize(outcome.converted)
    tokens, did = _map_ddl_affinities(tokens)
    applied = outcome.applied_rules + (("affinity_type_mapping",) if did else ())
    return ConversionOutcome(
        converted=emit(tokens), applied_rules=applied, verdict="Converted"
    )
