"""Stage 2: the self-healing evaluation loop.

Per iteration: execute the candidate query, publish a progress event, accept
immediately when execution is error-free with at least one row (never asking
the LLM to re-check a working result), otherwise track the best result seen,
ask the LLM for a fix with the full diagnostics, and carry the fixed query,
modified prompt and observation into the next iteration. On retry exhaustion
the best result seen is returned; if every attempt errored, the last executed
query is returned with an empty result and the diagnostics in the trace.

The LLM's ``isValid`` self-assessment is parsed but never consulted; only
execution outcomes determine success.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

from .bus import COMPONENT_EVALUATOR, EventBus, ProgressEvent
from .config import Guidelines, inject_guidelines
from .db.gateway import (
    ErrorDiagnostics,
    ExecOutcome,
    Gateway,
    QueryResult,
    format_error,
)
from .errors import LlmError, ParseFailed
from .generator import (
    ContextSource,
    GenerationOutcome,
    SchemaContext,
    build_schema_context,
)
from .llm import ChatMessage
from .parsing import parse_evaluation
from .store import DEFAULT_SCHEMA_KEY, SessionStore

INITIAL_OBSERVATION = "initial generation"


@dataclass(frozen=True)
class LoopConfig:
    retry_count: int = 5
    feedback_examples: int = 3
    row_limit: int = 50

    def __post_init__(self):
        if self.retry_count < 0:
            raise ValueError("retry_count must be >= 0")
        if self.feedback_examples < 0:
            raise ValueError("feedback_examples must be >= 0")
        if self.row_limit < 1:
            raise ValueError("row_limit must be >= 1")


@dataclass(frozen=True)
class AttemptRecord:
    iteration: int
    executed_query: str
    rows_returned: Optional[int]
    error: Optional[str]
    observation: str
    modified_prompt: str


@dataclass(frozen=True)
class EvaluationOutcome:
    query: str
    result: QueryResult
    iterations_used: int
    early_accepted: bool
    attempts: Tuple[AttemptRecord, ...]

    def trace_json(self) -> str:
        return json.dumps(
            [asdict(a) for a in self.attempts], ensure_ascii=False, indent=2
        )


@dataclass(frozen=True)
class PipelineOutcome:
    generation: GenerationOutcome
    evaluation: EvaluationOutcome


def resolve_context(
    payload_context: Optional[SchemaContext],
    chat_id: str,
    gateway,
    llm,
    store: SessionStore,
    bus: EventBus,
    key: str = DEFAULT_SCHEMA_KEY,
    sample_rows: int = 3,
) -> SchemaContext:
    """Three-tier resolution: caller payload beats the session cache beats a
    full scratch rebuild."""
    if payload_context is not None:
        return payload_context.as_payload()
    return build_schema_context(
        chat_id, gateway, llm, store, bus, key=key, sample_rows=sample_rows
    )


def better_than(
    candidate: Tuple[str, ExecOutcome],
    best: Optional[Tuple[str, QueryResult]],
) -> bool:
    """Result ordering: error-free with rows beats error-free without rows
    beats errors; within a class the earlier result wins, and an errored
    candidate never replaces anything."""
    _query, outcome = candidate
    if isinstance(outcome, ErrorDiagnostics):
        return False
    if best is None:
        return True
    return outcome.row_count > 0 and best[1].row_count == 0


def build_eval_messages(
    context: SchemaContext,
    original_prompt: str,
    current_prompt: str,
    query: str,
    result_head: Tuple,
    error: Optional[ErrorDiagnostics],
    guidelines: Guidelines,
) -> List[ChatMessage]:
    system = (
        inject_guidelines("evaluation", guidelines)
        + "\n\n# Database schema\n\n"
        + context.description
    )
    sections = [
        f"Original question: {original_prompt}",
    ]
    if current_prompt != original_prompt:
        sections.append(f"Current question: {current_prompt}")
    sections.append(f"Query under review:\n{query}")
    if result_head:
        rendered = "\n".join(repr(list(row)) for row in result_head)
        sections.append(f"Sample result rows:\n{rendered}")
    if error is not None:
        sections.append(format_error(error))
    elif not result_head:
        sections.append("The query executed without error but returned no rows.")
    return [
        ChatMessage("system", system),
        ChatMessage("user", "\n\n".join(sections)),
    ]


def _summarize_error(e: ErrorDiagnostics) -> str:
    state = f" [{e.sqlstate}]" if e.sqlstate else ""
    return f"{e.error_type}{state}: {e.message}"


def evaluate(
    chat_id: str,
    query: str,
    prompt: str,
    cfg: LoopConfig,
    context: SchemaContext,
    gateway: Gateway,
    llm,
    bus: EventBus,
    guidelines: Optional[Guidelines] = None,
) -> EvaluationOutcome:
    guidelines = guidelines or Guidelines.load()
    q = query
    p = prompt
    obs = INITIAL_OBSERVATION
    best: Optional[Tuple[str, QueryResult]] = None
    attempts: List[AttemptRecord] = []
    early_accepted = False

    total_iterations = max(cfg.retry_count, 1)
    iterations_used = 0
    for i in range(1, total_iterations + 1):
        iterations_used = i
        outcome = gateway.execute_readonly(q, cfg.row_limit)
        is_error = isinstance(outcome, ErrorDiagnostics)

        attempt_summary = [f"Attempt {i}", f"Query:\n{q}", f"Observation: {obs}"]
        if is_error:
            attempt_summary.append(_summarize_error(outcome))
        else:
            attempt_summary.append(f"Rows returned: {outcome.row_count}")
        bus.publish_safe(
            chat_id,
            ProgressEvent(
                component=COMPONENT_EVALUATOR,
                event=f"QueryFixAttempt#{i}",
                content="\n".join(attempt_summary),
            ),
        )
        attempts.append(
            AttemptRecord(
                iteration=i,
                executed_query=q,
                rows_returned=None if is_error else outcome.row_count,
                error=_summarize_error(outcome) if is_error else None,
                observation=obs,
                modified_prompt=p,
            )
        )

        if not is_error and outcome.row_count > 0:
            # early-accept: never re-evaluate a working result
            best = (q, outcome)
            early_accepted = True
            break

        if better_than((q, outcome), best):
            best = (q, outcome)

        if cfg.retry_count == 0 or i == total_iterations:
            break

        # LLM-guided repair; a transport or parse failure consumes the
        # iteration and retries the same query.
        result_head = () if is_error else outcome.rows[: cfg.feedback_examples]
        error = outcome if is_error else None
        try:
            messages = build_eval_messages(
                context, prompt, p, q, result_head, error, guidelines
            )
            raw = llm.chat(messages)
            response, _strategy = parse_evaluation(raw)
        except (LlmError, ParseFailed) as exc:
            bus.publish_safe(
                chat_id,
                ProgressEvent(
                    component=COMPONENT_EVALUATOR,
                    event=f"QueryFixFailure#{i}",
                    content=f"repair attempt failed: {exc}",
                ),
            )
            continue
        bus.publish_safe(
            chat_id,
            ProgressEvent(
                component=COMPONENT_EVALUATOR,
                event=f"QueryFixResponse#{i}",
                content=(
                    f"Observation: {response.observation}\n"
                    f"Fixed query:\n{response.fixed_query}"
                ),
            ),
        )
        q = response.fixed_query
        if response.modified_user_prompt:
            p = response.modified_user_prompt
        obs = response.observation

    if best is not None:
        final_query, final_result = best
    else:
        # every attempt errored: return the last executed query with an
        # empty result; the diagnostics live in the attempt trace
        final_query = attempts[-1].executed_query
        final_result = QueryResult(columns=(), rows=(), truncated=False)
    return EvaluationOutcome(
        query=final_query,
        result=final_result,
        iterations_used=iterations_used,
        early_accepted=early_accepted,
        attempts=tuple(attempts),
    )


def run_full_pipeline(
    chat_id: str,
    prompt: str,
    cfg: LoopConfig,
    gateway: Gateway,
    llm,
    store: SessionStore,
    bus: EventBus,
    key: str = DEFAULT_SCHEMA_KEY,
    sample_rows: int = 3,
    guidelines: Optional[Guidelines] = None,
) -> PipelineOutcome:
    """Stage 1 feeding Stage 2 with payload-tier context; the evaluation
    trace is saved under the chat's next validator index."""
    from .generator import generate

    guidelines = guidelines or Guidelines.load()
    context = build_schema_context(
        chat_id,
        gateway,
        llm,
        store,
        bus,
        key=key,
        sample_rows=sample_rows,
        guidelines=guidelines,
    )
    generation = generate(chat_id, prompt, context, llm, store, guidelines)
    evaluation = evaluate(
        chat_id,
        generation.query,
        prompt,
        cfg,
        resolve_context(context, chat_id, gateway, llm, store, bus, key=key),
        gateway,
        llm,
        bus,
        guidelines,
    )
    index = store.next_validator_index(chat_id)
    store.save_validator_history(chat_id, index, evaluation.trace_json())
    return PipelineOutcome(generation=generation, evaluation=evaluation)
