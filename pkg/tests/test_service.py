"""HTTP surface: native endpoints, OpenAI-compatible API, auth and SSE
streaming."""

import hashlib
import json

import pytest
from fastapi.testclient import TestClient

from sqlmender.config import ApiConfig
from sqlmender.service import create_app
from sqlmender.service.app import check_bearer, final_answer, resolve_chat_id
from sqlmender.service.models import ChatCompletionRequest, CompletionRequest
from sqlmender.db.gateway import QueryResult

from conftest import generation_json, make_engine, repair_json

GOOD = "SELECT name FROM customers WHERE is_active = 1"
BROKEN = "SELECT * FROM nope"


def app_client(engine, api_keys=()):
    app = create_app(
        engine_provider=lambda overrides: engine,
        api_config=ApiConfig(api_keys=list(api_keys)),
    )
    return TestClient(app)


@pytest.fixture
def simple_engine(shop_db_path):
    return make_engine(shop_db_path, [["schema desc"], generation_json(GOOD)])


class TestHelpers:
    def test_check_bearer_disabled_without_keys(self):
        assert check_bearer(None, []) is True

    def test_check_bearer_accepts_any_configured_key(self):
        keys = ["k1", "k2"]
        assert check_bearer("Bearer k2", keys) is True
        assert check_bearer("Bearer nope", keys) is False
        assert check_bearer("k1", keys) is False
        assert check_bearer(None, keys) is False

    def test_resolve_chat_id_explicit(self):
        body = ChatCompletionRequest(
            chat_id="my-chat", messages=[{"role": "user", "content": "hi"}]
        )
        assert resolve_chat_id(body) == "my-chat"

    def test_resolve_chat_id_md5_of_first_user_message(self):
        body = ChatCompletionRequest(
            messages=[
                {"role": "system", "content": "s"},
                {"role": "user", "content": "hi"},
                {"role": "user", "content": "later"},
            ]
        )
        assert resolve_chat_id(body) == hashlib.md5(b"hi").hexdigest()
        # independently computed reference digest
        assert resolve_chat_id(body) == "49f68a5c8493ec2c0bf489821c21fc3b"

    def test_resolve_chat_id_completion_prompt(self):
        body = CompletionRequest(prompt="hi")
        assert resolve_chat_id(body) == "49f68a5c8493ec2c0bf489821c21fc3b"

    def test_final_answer_formatting(self):
        content = final_answer(
            "SELECT 1",
            QueryResult(columns=("n", "v"), rows=((1, None), (2, "x"))),
        )
        assert content.startswith("```sql\nSELECT 1\n```")
        assert "| n | v |" in content
        assert "| --- | --- |" in content
        assert "| 1 | NULL |" in content


class TestNativeEndpoints:
    def test_engine_endpoint(self, simple_engine):
        client = app_client(simple_engine)
        r = client.post(
            "/inference/sqlQueryEngine/chat1", json={"prompt": "active customers?"}
        )
        assert r.status_code == 200
        data = r.json()
        assert data["generation"]["query"] == GOOD
        assert data["evaluation"]["early_accepted"] is True
        assert len(data["evaluation"]["result"]["rows"]) == 4

    def test_generation_endpoint(self, shop_db_path):
        engine = make_engine(shop_db_path, [["schema"], generation_json(GOOD)])
        client = app_client(engine)
        r = client.post(
            "/inference/sqlQueryGeneration/chat1", json={"prompt": "who?"}
        )
        assert r.status_code == 200
        data = r.json()
        assert data["query"] == GOOD
        assert data["context_source"] == "Scratch"

    def test_evaluation_endpoint(self, shop_db_path):
        engine = make_engine(shop_db_path, [["schema"], repair_json(GOOD)])
        client = app_client(engine)
        r = client.post(
            "/inference/sqlQueryEvaluation/chat1",
            json={"prompt": "who?", "query": BROKEN},
        )
        assert r.status_code == 200
        data = r.json()
        assert data["query"] == GOOD
        assert data["iterations_used"] == 2

    def test_evaluation_requires_query(self, simple_engine):
        client = app_client(simple_engine)
        r = client.post("/inference/sqlQueryEvaluation/chat1", json={"prompt": "x"})
        assert r.status_code == 400

    def test_parse_failure_maps_to_422(self, shop_db_path):
        engine = make_engine(shop_db_path, [["schema"], "sorry, no idea"])
        client = app_client(engine)
        r = client.post("/inference/sqlQueryEngine/chat1", json={"prompt": "x"})
        assert r.status_code == 422
        assert "sorry, no idea" in r.json()["detail"]["raw_excerpt"]

    def test_llm_unreachable_maps_to_502(self, shop_db_path):
        engine = make_engine(shop_db_path, [])  # exhausted playbook
        client = app_client(engine)
        r = client.post("/inference/sqlQueryEngine/chat1", json={"prompt": "x"})
        assert r.status_code == 502
        assert "LLM backend" in r.json()["detail"]


class TestAuth:
    def test_models_requires_key_when_configured(self, simple_engine):
        client = app_client(simple_engine, api_keys=["sk-a"])
        assert client.get("/v1/models").status_code == 401
        ok = client.get("/v1/models", headers={"Authorization": "Bearer sk-a"})
        assert ok.status_code == 200
        assert ok.json()["data"][0]["id"] == "sqlmender"

    def test_chat_completions_requires_key(self, simple_engine):
        client = app_client(simple_engine, api_keys=["sk-a"])
        r = client.post(
            "/v1/chat/completions",
            json={"messages": [{"role": "user", "content": "x"}]},
        )
        assert r.status_code == 401

    def test_open_when_no_keys(self, simple_engine):
        client = app_client(simple_engine)
        assert client.get("/v1/models").status_code == 200


class TestChatCompletions:
    def test_non_streaming_shape(self, simple_engine):
        client = app_client(simple_engine)
        r = client.post(
            "/v1/chat/completions",
            json={"messages": [{"role": "user", "content": "who is active?"}]},
        )
        assert r.status_code == 200
        data = r.json()
        assert data["object"] == "chat.completion"
        assert data["model"] == "sqlmender"
        choice = data["choices"][0]
        assert choice["finish_reason"] == "stop"
        content = choice["message"]["content"]
        assert content.startswith("```sql\n" + GOOD)
        assert "| name |" in content
        assert data["usage"]["estimated"] is True
        assert data["usage"]["total_tokens"] == (
            data["usage"]["prompt_tokens"] + data["usage"]["completion_tokens"]
        )

    def test_requires_user_message(self, simple_engine):
        client = app_client(simple_engine)
        r = client.post(
            "/v1/chat/completions",
            json={"messages": [{"role": "system", "content": "s"}]},
        )
        assert r.status_code == 400

    def test_completions_adapter(self, simple_engine):
        client = app_client(simple_engine)
        r = client.post("/v1/completions", json={"prompt": "who is active?"})
        assert r.status_code == 200
        data = r.json()
        assert data["object"] == "text_completion"
        assert data["choices"][0]["text"].startswith("```sql")


def read_sse(response_text):
    """Parse an SSE body into the list of data payload strings."""
    payloads = []
    for line in response_text.split("\n"):
        if line.startswith("data: "):
            payloads.append(line[len("data: "):])
    return payloads


class TestStreaming:
    def _stream(self, engine, chat_id="stream-chat"):
        client = app_client(engine)
        with client.stream(
            "POST",
            "/v1/chat/completions",
            json={
                "chat_id": chat_id,
                "stream": True,
                "messages": [{"role": "user", "content": "who is active?"}],
            },
        ) as response:
            assert response.status_code == 200
            assert response.headers["content-type"].startswith("text/event-stream")
            body = "".join(response.iter_text())
        return read_sse(body)

    def test_golden_transcript(self, shop_db_path):
        engine = make_engine(
            shop_db_path, [["schema part 1", "schema part 2"], generation_json(GOOD)]
        )
        payloads = self._stream(engine)
        assert payloads[-1] == "[DONE]"
        chunks = [json.loads(p) for p in payloads[:-1]]
        # one shared id, chunk object type throughout
        assert len({c["id"] for c in chunks}) == 1
        assert all(c["object"] == "chat.completion.chunk" for c in chunks)
        # first chunk carries the role, last carries the finish reason
        assert chunks[0]["choices"][0]["delta"] == {"role": "assistant"}
        assert chunks[-1]["choices"][0]["finish_reason"] == "stop"
        contents = [
            c["choices"][0]["delta"].get("content", "")
            for c in chunks[1:-1]
        ]
        joined = "".join(contents)
        # think-wrap: progress events live between <think> and </think>
        assert joined.startswith("<think>\n")
        think_body, _, answer = joined.partition("</think>\n")
        assert "schema part 1" in think_body
        assert "schema part 2" in think_body
        assert "Attempt 1" in think_body
        assert think_body.index("schema part 1") < think_body.index("Attempt 1")
        assert answer.startswith("```sql\n" + GOOD)
        assert "| name |" in answer

    def test_stream_mirrored_to_raw_channel(self, shop_db_path):
        engine = make_engine(shop_db_path, [["schema"], generation_json(GOOD)])
        self._stream(engine, chat_id="mirror-chat")
        mirrored = engine.bus.raw_messages("mirror-chat:stream")
        assert mirrored[0] == "<think>\n"
        assert mirrored[-1].startswith("```sql")

    def test_midstream_failure_reported_in_band(self, shop_db_path):
        engine = make_engine(shop_db_path, [["schema"], "cannot answer that"])
        payloads = self._stream(engine)
        assert payloads[-1] == "[DONE]"
        chunks = [json.loads(p) for p in payloads[:-1]]
        contents = "".join(
            c["choices"][0]["delta"].get("content", "") for c in chunks
        )
        assert "error:" in contents
        assert chunks[-1]["choices"][0]["finish_reason"] == "stop"

    def test_completions_streaming(self, shop_db_path):
        engine = make_engine(shop_db_path, [["schema"], generation_json(GOOD)])
        client = app_client(engine)
        with client.stream(
            "POST",
            "/v1/completions",
            json={"prompt": "who?", "stream": True, "chat_id": "cstream"},
        ) as response:
            body = "".join(response.iter_text())
        assert read_sse(body)[-1] == "[DONE]"
