"""Shared fixtures: a seeded embedded database, scripted engine builders and
the acceptance-gate reporting hook."""

from __future__ import annotations

import importlib.resources
import json

import pytest

from sqlmender import (
    ConnectionParams,
    KvParams,
    LoopConfig,
    ScriptedLlmClient,
    SqlQueryEngine,
)
from sqlmender.bus import MemoryBus
from sqlmender.db.embedded import EmbeddedGateway, seed_embedded_database
from sqlmender.store import MemoryStore

FIXTURES = importlib.resources.files("sqlmender") / "fixtures/mini"

_CRITERION_RE = __import__("re").compile(r"test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    """One verdict line per acceptance criterion."""
    if "test_acceptance" not in report.nodeid:
        return
    # skip markers resolve during setup; real verdicts during the call phase
    if report.when == "setup" and not report.skipped:
        return
    if report.when == "teardown":
        return
    m = _CRITERION_RE.search(report.nodeid)
    if not m:
        return
    number = int(m.group(1))
    if report.skipped:
        verdict = "SKIP"
    else:
        verdict = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE CRITERION {number}: {verdict}")


def embedded_params(path: str) -> ConnectionParams:
    return ConnectionParams(
        host="embedded", port=5432, dbname=str(path), user="local", password=""
    )


@pytest.fixture(scope="session")
def shop_db_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("dbs") / "shop.sqlite"
    seed_embedded_database(str(path), (FIXTURES / "shop.sql").read_text())
    return str(path)


@pytest.fixture
def gateway(shop_db_path):
    gw = EmbeddedGateway(embedded_params(shop_db_path))
    yield gw
    gw.close()


@pytest.fixture
def questions_path():
    return str(FIXTURES / "questions.jsonl")


def generation_json(query: str, description: str = "") -> str:
    return json.dumps({"description": description, "query": query})


def repair_json(fixed_query: str, observation: str = "fix", is_valid: bool = False,
                modified_prompt: str = "") -> str:
    return json.dumps(
        {
            "isValid": is_valid,
            "observation": observation,
            "modifiedUserPrompt": modified_prompt,
            "fixedQuery": fixed_query,
        }
    )


def make_engine(shop_db_path, playbook, retry_count=5, **kwargs):
    """Engine over the seeded shop database with a scripted LLM and in-memory
    store/bus."""
    return SqlQueryEngine(
        llm=ScriptedLlmClient(playbook=list(playbook)),
        db_params=embedded_params(shop_db_path),
        kv_params=KvParams(host="memory"),
        loop_config=LoopConfig(retry_count=retry_count),
        **kwargs,
    )


def make_engine_shared(gateway, playbook, retry_count=5):
    """Engine sharing a caller-owned gateway/store/bus so tests can inspect
    statement counts and published frames."""
    store = MemoryStore()
    bus = MemoryBus()
    engine = SqlQueryEngine(
        llm=ScriptedLlmClient(playbook=list(playbook)),
        gateway=gateway,
        store=store,
        bus=bus,
        loop_config=LoopConfig(retry_count=retry_count),
    )
    return engine, store, bus
