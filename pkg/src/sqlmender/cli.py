"""Command-line client: serve the HTTP API, migrate SQLite SQL to
PostgreSQL, and run the benchmark harness."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bench import (
    AblationConfig,
    BenchmarkReport,
    count_regressions,
    format_report,
    latency_stats,
    load_questions,
    run_benchmark,
)
from .config import ApiConfig, llm_params_from_env
from .db import ConnectionParams
from .engine import SqlQueryEngine
from .errors import SqlMenderError
from .llm import ScriptedLlmClient
from .migrate import convert, convert_ddl
from .store import KvParams

EXIT_UNCONVERTIBLE = 3


@click.group()
def main():
    """Text-to-SQL engine with a self-healing execution loop."""


@main.command()
@click.option("--host", default="0.0.0.0", show_default=True)
@click.option("--port", type=int, default=None, help="Defaults to LISTEN_PORT or 5181.")
def serve(host, port):
    """Start the HTTP API server."""
    import uvicorn

    from .service import create_app

    config = ApiConfig.from_env()
    app = create_app(api_config=config)
    uvicorn.run(app, host=host, port=port or config.listen_port)


def _split_statements(text: str):
    """Naive semicolon split that respects single-quoted strings."""
    statements, buf, in_string = [], [], False
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "'":
            in_string = not in_string
        if ch == ";" and not in_string:
            stmt = "".join(buf).strip()
            if stmt:
                statements.append(stmt)
            buf = []
        else:
            buf.append(ch)
        i += 1
    tail = "".join(buf).strip()
    if tail:
        statements.append(tail)
    return statements


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--ddl", is_flag=True, help="Treat input as CREATE TABLE statements.")
@click.option("--batch", is_flag=True, help="Input holds multiple ;-separated statements.")
def migrate(in_path, out_path, ddl, batch):
    """Convert SQLite SQL to PostgreSQL; exit 3 if anything is unconvertible."""
    text = Path(in_path).read_text()
    statements = _split_statements(text) if batch else [text.strip()]
    converter = convert_ddl if ddl else convert
    outputs, failed = [], False
    for statement in statements:
        outcome = converter(statement)
        if outcome.is_converted:
            outputs.append(outcome.converted + ";")
            if outcome.applied_rules:
                click.echo(f"converted (rules: {', '.join(outcome.applied_rules)})")
            else:
                click.echo("converted (no rules applied)")
        else:
            failed = True
            outputs.append(f"-- UNCONVERTIBLE: {outcome.reason}\n-- {statement};")
            click.echo(f"unconvertible: {outcome.reason}", err=True)
    Path(out_path).write_text("\n".join(outputs) + "\n")
    if failed:
        sys.exit(EXIT_UNCONVERTIBLE)


@main.group()
def bench():
    """Benchmark harness commands."""


def _scripted_factory(playbooks_path: str, db_dir: str):
    playbooks = json.loads(Path(playbooks_path).read_text())

    def factory(question):
        playbook = playbooks.get(question.id, playbooks.get("default"))
        if playbook is None:
            raise SqlMenderError(f"no playbook for question {question.id!r}")
        return SqlQueryEngine(
            llm=ScriptedLlmClient(playbook=list(playbook)),
            db_params=_embedded_params(db_dir, question.database),
            kv_params=KvParams(host="memory"),
        )

    return factory


def _embedded_params(db_dir: str, database: str) -> ConnectionParams:
    return ConnectionParams(
        host="embedded",
        port=5432,
        dbname=str(Path(db_dir) / f"{database}.sqlite"),
        user="local",
        password="",
    )


def _http_factory(base_url: str, db_dir: str):
    env = llm_params_from_env()

    def factory(question):
        from .llm import LlmParams

        return SqlQueryEngine(
            llm_params=LlmParams(
                model=env.model,
                base_url=base_url,
                api_key=env.api_key,
                temperature=env.temperature,
            ),
            db_params=_embedded_params(db_dir, question.database),
            kv_params=KvParams(host="memory"),
        )

    return factory


@bench.command("run")
@click.option("--questions", "questions_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_label", required=True, type=click.Choice(["A", "B", "C"]))
@click.option(
    "--backend",
    required=True,
    help="LLM backend: an OpenAI-compatible base URL, or scripted:<playbooks.json>.",
)
@click.option("--db-dir", required=True, type=click.Path(exists=True),
              help="Directory of <database>.sqlite files named in the question set.")
@click.option("--out", "out_path", required=True, type=click.Path())
def bench_run(questions_path, config_label, backend, db_dir, out_path):
    """Run a question set under one ablation config and write a JSON report."""
    from .db.embedded import EmbeddedGateway

    questions = load_questions(questions_path)
    cfg = AblationConfig(config_label)
    if backend.startswith("scripted:"):
        factory = _scripted_factory(backend[len("scripted:"):], db_dir)
    else:
        factory = _http_factory(backend, db_dir)

    reports = []
    for database in sorted({q.database for q in questions}):
        subset = [q for q in questions if q.database == database]
        gold = EmbeddedGateway(_embedded_params(db_dir, database))
        reports.append(run_benchmark(subset, cfg, factory, gold))
    merged = BenchmarkReport(config=cfg.label)
    for report in reports:
        merged.records.extend(report.records)
    Path(out_path).write_text(merged.to_json())
    click.echo(format_report(merged))


@bench.command("compare")
@click.option("--baseline", required=True, type=click.Path(exists=True),
              help="Report from the generation-only config (C).")
@click.option("--candidate", required=True, type=click.Path(exists=True),
              help="Report from the full-pipeline config (A).")
def bench_compare(baseline, candidate):
    """Count regressions: correct in the baseline, incorrect in the candidate."""
    report_c = BenchmarkReport.from_json(Path(baseline).read_text())
    report_a = BenchmarkReport.from_json(Path(candidate).read_text())
    regressions = count_regressions(report_c, report_a)
    click.echo(
        f"baseline {report_c.config}: {report_c.accuracy:.1f}%  "
        f"candidate {report_a.config}: {report_a.accuracy:.1f}%  "
        f"regressions: {regressions}"
    )


@bench.command("stats")
@click.argument("report_path", type=click.Path(exists=True))
def bench_stats(report_path):
    """Print latency statistics for a saved report."""
    report = BenchmarkReport.from_json(Path(report_path).read_text())
    avg, p90, p99, qpm = latency_stats(report)
    click.echo(format_report(report))
    click.echo(
        f"avg {avg:.3f}s  p90 {p90:.3f}s  p99 {p99:.3f}s  {qpm:.1f} questions/min"
    )


if __name__ == "__main__":
    main()
