"""HTTP surface: three native inference endpoints plus an OpenAI-compatible
``/v1`` API with Bearer auth and SSE streaming bridged from the event bus.

Native endpoints take backend connection settings as query parameters with
environment-variable defaults and are not bearer-gated (deployments should
firewall them); the ``/v1`` routes honour ``OPENAI_API_KEY`` (comma-separated
for multiple keys; empty disables auth).
"""

from __future__ import annotations

import hashlib
import hmac
import json
import threading
import time
import uuid
from typing import Callable, Iterator, Optional

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import StreamingResponse

from ..config import (
    ApiConfig,
    ENGINE_MODEL_ID,
    db_params_from_env,
    kv_params_from_env,
    llm_params_from_env,
)
from ..db import ConnectionParams, QueryResult
from ..engine import SqlQueryEngine
from ..errors import (
    BusUnreachable,
    ConnectFailed,
    DbError,
    LlmError,
    NoUserMessage,
    ParseFailed,
    SqlMenderError,
    StoreUnreachable,
)
from ..evaluator import LoopConfig
from ..llm import LlmParams
from ..store import KvParams
from .models import (
    ChatCompletionRequest,
    CompletionRequest,
    EvaluationModel,
    GenerationModel,
    InferenceRequest,
    PipelineModel,
)


def check_bearer(header: Optional[str], keys) -> bool:
    """Allow iff auth is disabled (no keys) or the header matches one
    configured key; constant-time comparison."""
    if not keys:
        return True
    if not header or not header.startswith("Bearer "):
        return False
    presented = header[len("Bearer "):]
    return any(hmac.compare_digest(presented, k) for k in keys)


def resolve_chat_id(body) -> str:
    """Client-provided chat_id wins; otherwise a stable session key is the
    MD5 of the first user message."""
    if getattr(body, "chat_id", None):
        return body.chat_id
    if isinstance(body, CompletionRequest):
        return hashlib.md5(body.prompt.encode()).hexdigest()
    for message in body.messages:
        if message.role == "user":
            return hashlib.md5(message.content.encode()).hexdigest()
    raise NoUserMessage("request contains no user message")


def results_markdown(result: QueryResult) -> str:
    if not result.columns:
        return "_no result rows_"
    lines = [
        "| " + " | ".join(result.columns) + " |",
        "|" + "|".join([" --- "] * len(result.columns)) + "|",
    ]
    for row in result.rows:
        cells = ["NULL" if v is None else str(v) for v in row]
        lines.append("| " + " | ".join(cells) + " |")
    if result.truncated:
        lines.append("")
        lines.append("_(result truncated)_")
    return "\n".join(lines)


def final_answer(query: str, result: QueryResult) -> str:
    return f"```sql\n{query}\n```\n\n{results_markdown(result)}"


def _usage(prompt_text: str, completion_text: str) -> dict:
    # character-count estimates; flagged so clients know they are not exact
    prompt_tokens = max(1, len(prompt_text) // 4)
    completion_tokens = max(1, len(completion_text) // 4)
    return {
        "prompt_tokens": prompt_tokens,
        "completion_tokens": completion_tokens,
        "total_tokens": prompt_tokens + completion_tokens,
        "estimated": True,
    }


EngineProvider = Callable[[dict], SqlQueryEngine]


def _default_engine_provider(overrides: dict) -> SqlQueryEngine:
    env_db = db_params_from_env()
    env_llm = llm_params_from_env()
    env_kv = kv_params_from_env()
    db = ConnectionParams(
        host=overrides.get("pg_host") or env_db.host,
        port=overrides.get("pg_port") or env_db.port,
        dbname=overrides.get("pg_dbname") or env_db.dbname,
        user=overrides.get("pg_user") or env_db.user,
        password=overrides.get("pg_password") or env_db.password,
    )
    llm = LlmParams(
        model=overrides.get("llm_model") or env_llm.model,
        base_url=overrides.get("llm_base_url") or env_llm.base_url,
        api_key=overrides.get("llm_api_key") or env_llm.api_key,
        temperature=env_llm.temperature,
    )
    kv = KvParams(
        host=overrides.get("kv_host") or env_kv.host,
        port=overrides.get("kv_port") or env_kv.port,
        password=overrides.get("kv_password") or env_kv.password,
        db=overrides.get("kv_db") if overrides.get("kv_db") is not None else env_kv.db,
    )
    return SqlQueryEngine(llm_params=llm, db_params=db, kv_params=kv)


def create_app(
    engine_provider: Optional[EngineProvider] = None,
    api_config: Optional[ApiConfig] = None,
) -> FastAPI:
    provider = engine_provider or _default_engine_provider
    config = api_config or ApiConfig.from_env()
    app = FastAPI(title="sqlmender", version="0.1.0")

    # -- shared helpers -------------------------------------------------------

    def backend_params(
        pg_host: Optional[str] = Query(default=None),
        pg_port: Optional[int] = Query(default=None),
        pg_dbname: Optional[str] = Query(default=None),
        pg_user: Optional[str] = Query(default=None),
        pg_password: Optional[str] = Query(default=None),
        llm_base_url: Optional[str] = Query(default=None),
        llm_model: Optional[str] = Query(default=None),
        llm_api_key: Optional[str] = Query(default=None),
        kv_host: Optional[str] = Query(default=None),
        kv_port: Optional[int] = Query(default=None),
        kv_password: Optional[str] = Query(default=None),
        kv_db: Optional[int] = Query(default=None),
        retry_count: Optional[int] = Query(default=None),
        feedback_examples: Optional[int] = Query(default=None),
        row_limit: Optional[int] = Query(default=None),
    ) -> dict:
        return {k: v for k, v in locals().items() if v is not None}

    def loop_config(overrides: dict) -> LoopConfig:
        try:
            return LoopConfig(
                retry_count=overrides.get("retry_count", config.retry_count),
                feedback_examples=overrides.get(
                    "feedback_examples", config.feedback_examples
                ),
                row_limit=overrides.get("row_limit", config.row_limit),
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    def build_engine(overrides: dict) -> SqlQueryEngine:
        try:
            return provider(overrides)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    def translate_error(exc: Exception) -> HTTPException:
        if isinstance(exc, ParseFailed):
            return HTTPException(
                status_code=422,
                detail={
                    "error": "LLM response could not be parsed",
                    "raw_excerpt": exc.raw_text[:500],
                },
            )
        if isinstance(exc, (ConnectFailed, DbError)):
            return HTTPException(status_code=502, detail=f"database backend: {exc}")
        if isinstance(exc, (StoreUnreachable, BusUnreachable)):
            return HTTPException(status_code=502, detail=f"session store backend: {exc}")
        if isinstance(exc, LlmError):
            return HTTPException(status_code=502, detail=f"LLM backend: {exc}")
        if isinstance(exc, ValueError):
            return HTTPException(status_code=400, detail=str(exc))
        if isinstance(exc, SqlMenderError):
            return HTTPException(status_code=500, detail=str(exc))
        raise exc

    def require_auth(request: Request):
        if not check_bearer(request.headers.get("Authorization"), config.api_keys):
            raise HTTPException(status_code=401, detail="invalid or missing API key")

    # -- native REST API ------------------------------------------------------

    @app.post("/inference/sqlQueryEngine/{chat_id}", response_model=PipelineModel)
    def inference_engine(
        chat_id: str,
        body: InferenceRequest,
        overrides: dict = Depends(backend_params),
    ):
        engine = build_engine(overrides)
        try:
            outcome = engine.run(
                chat_id,
                body.prompt,
                loop_config=loop_config(overrides),
                schema_key=body.schema_key,
            )
        except Exception as exc:  # noqa: BLE001
            raise translate_error(exc)
        return PipelineModel.from_outcome(outcome)

    @app.post("/inference/sqlQueryGeneration/{chat_id}", response_model=GenerationModel)
    def inference_generation(
        chat_id: str,
        body: InferenceRequest,
        overrides: dict = Depends(backend_params),
    ):
        engine = build_engine(overrides)
        try:
            outcome = engine.generate(chat_id, body.prompt, schema_key=body.schema_key)
        except Exception as exc:  # noqa: BLE001
            raise translate_error(exc)
        return GenerationModel.from_outcome(outcome)

    @app.post("/inference/sqlQueryEvaluation/{chat_id}", response_model=EvaluationModel)
    def inference_evaluation(
        chat_id: str,
        body: InferenceRequest,
        overrides: dict = Depends(backend_params),
    ):
        if not body.query:
            raise HTTPException(status_code=400, detail="query is required")
        engine = build_engine(overrides)
        try:
            outcome = engine.evaluate(
                chat_id,
                body.query,
                body.prompt,
                loop_config=loop_config(overrides),
                schema_key=body.schema_key,
            )
        except Exception as exc:  # noqa: BLE001
            raise translate_error(exc)
        return EvaluationModel.from_outcome(outcome)

    # -- OpenAI-compatible API ------------------------------------------------

    @app.get("/v1/models")
    def list_models(request: Request):
        require_auth(request)
        return {
            "object": "list",
            "data": [
                {
                    "id": ENGINE_MODEL_ID,
                    "object": "model",
                    "created": 0,
                    "owned_by": "sqlmender",
                }
            ],
        }

    def _completion_payload(chat_id: str, prompt: str) -> dict:
        engine = build_engine({})
        try:
            outcome = engine.run(chat_id, prompt)
        except Exception as exc:  # noqa: BLE001
            raise translate_error(exc)
        content = final_answer(outcome.evaluation.query, outcome.evaluation.result)
        return {
            "id": f"chatcmpl-{uuid.uuid4().hex}",
            "object": "chat.completion",
            "created": int(time.time()),
            "model": ENGINE_MODEL_ID,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop",
                }
            ],
            "usage": _usage(prompt, content),
        }

    def _stream_response(chat_id: str, prompt: str) -> StreamingResponse:
        engine = build_engine({})
        completion_id = f"chatcmpl-{uuid.uuid4().hex}"
        created = int(time.time())

        def chunk(delta: dict, finish: Optional[str] = None) -> str:
            payload = {
                "id": completion_id,
                "object": "chat.completion.chunk",
                "created": created,
                "model": ENGINE_MODEL_ID,
                "choices": [
                    {"index": 0, "delta": delta, "finish_reason": finish}
                ],
            }
            return f"data: {json.dumps(payload)}\n\n"

        def sse() -> Iterator[str]:
            # subscribe before the engine launches so no early event is lost
            subscription = engine.bus.subscribe(chat_id)
            outcome_box: dict = {}

            def worker():
                try:
                    outcome_box["outcome"] = engine.run(chat_id, prompt)
                except Exception as exc:  # noqa: BLE001
                    outcome_box["error"] = exc

            thread = threading.Thread(target=worker, daemon=True)
            thread.start()

            def emit_content(text: str) -> str:
                engine.bus.publish_raw(f"{chat_id}:stream", text)
                return chunk({"content": text})

            yield chunk({"role": "assistant"})
            yield emit_content("<think>\n")
            while thread.is_alive():
                event = subscription.get(timeout=0.1)
                if event is not None:
                    yield emit_content(event.content + "\n")
            thread.join()
            for event in subscription.drain(idle_timeout=0.5):
                yield emit_content(event.content + "\n")
            yield emit_content("</think>\n")

            if "error" in outcome_box:
                yield emit_content(f"error: {outcome_box['error']}")
            else:
                outcome = outcome_box["outcome"]
                yield emit_content(
                    final_answer(outcome.evaluation.query, outcome.evaluation.result)
                )
            yield chunk({}, finish="stop")
            yield "data: [DONE]\n\n"

        return StreamingResponse(sse(), media_type="text/event-stream")

    @app.post("/v1/chat/completions")
    def chat_completions(request: Request, body: ChatCompletionRequest):
        require_auth(request)
        if not body.messages:
            raise HTTPException(status_code=400, detail="messages must be non-empty")
        user_messages = [m for m in body.messages if m.role == "user"]
        if not user_messages:
            raise HTTPException(status_code=400, detail="no user message to answer")
        try:
            chat_id = resolve_chat_id(body)
        except NoUserMessage as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        prompt = user_messages[-1].content
        if body.stream:
            return _stream_response(chat_id, prompt)
        return _completion_payload(chat_id, prompt)

    @app.post("/v1/completions")
    def completions(request: Request, body: CompletionRequest):
        # adapted internally to the chat path with the prompt as one user message
        require_auth(request)
        if not body.prompt:
            raise HTTPException(status_code=400, detail="prompt must be non-empty")
        chat_id = resolve_chat_id(body)
        if body.stream:
            return _stream_response(chat_id, body.prompt)
        payload = _completion_payload(chat_id, body.prompt)
        content = payload["choices"][0]["message"]["content"]
        return {
            "id": payload["id"].replace("chatcmpl-", "cmpl-"),
            "object": "text_completion",
            "created": payload["created"],
            "model": ENGINE_MODEL_ID,
            "choices": [
                {"index": 0, "text": content, "finish_reason": "stop"}
            ],
            "usage": payload["usage"],
        }

    return app
