"""Benchmark harness: ablation configs, execution-accuracy scoring with
result normalization, regression counting, difficulty breakdown and latency
statistics.

Questions are JSON Lines, one per line::

    {"id": "q1", "database": "shop", "question": "...",
     "gold_sql": "SELECT ...", "difficulty": "easy", "evidence": null}

Correctness is normalized exact row match against the gold query executed on
the same database snapshot. Normalization: strings case-folded and trimmed,
numerics rounded half-even to two decimals, nulls kept as a distinct marker,
rows compared as a multiset with column permutation removed.
"""

from __future__ import annotations

import decimal
import json
import math
import time
import uuid
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

from .db.gateway import ErrorDiagnostics, Gateway, QueryResult
from .errors import EmptyReport, MismatchedQuestionSets
from .evaluator import LoopConfig

DIFFICULTY_TIERS = (
    "easy", "medium", "hard", "extra_hard",
    "simple", "moderate", "challenging",
)

ABLATION_RETRIES = {"A": 5, "B": 1, "C": 0}


@dataclass(frozen=True)
class BenchmarkQuestion:
    id: str
    database: str
    question: str
    gold_sql: str
    difficulty: str
    evidence: Optional[str] = None  # stored, unused

    def __post_init__(self):
        if self.difficulty not in DIFFICULTY_TIERS:
            raise ValueError(f"unknown difficulty tier: {self.difficulty!r}")


def load_questions(path: str) -> List[BenchmarkQuestion]:
    questions = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if line:
                questions.append(BenchmarkQuestion(**json.loads(line)))
    return questions


@dataclass(frozen=True)
class AblationConfig:
    label: str

    def __post_init__(self):
        if self.label not in ABLATION_RETRIES:
            raise ValueError(f"unknown ablation config: {self.label!r}")

    @property
    def retry_count(self) -> int:
        return ABLATION_RETRIES[self.label]

    def loop_config(self, feedback_examples: int = 3, row_limit: int = 50) -> LoopConfig:
        return LoopConfig(
            retry_count=self.retry_count,
            feedback_examples=feedback_examples,
            row_limit=row_limit,
        )


_NULL_MARKER = ("\x00null",)
_TWO_PLACES = decimal.Decimal("0.01")


def _normalize_cell(value):
    if value is None:
        return _NULL_MARKER
    if isinstance(value, bool):
        return str(value).casefold()
    if isinstance(value, (int, float, decimal.Decimal)):
        if isinstance(value, float) and not math.isfinite(value):
            return repr(value)
        quantized = decimal.Decimal(str(value)).quantize(
            _TWO_PLACES, rounding=decimal.ROUND_HALF_EVEN
        )
        return str(quantized.normalize())
    if isinstance(value, str):
        return value.strip().casefold()
    return str(value).strip().casefold()


def normalize(result: QueryResult) -> Tuple:
    """Canonical representation: a sorted multiset of rows, each row a sorted
    tuple of normalized cells (this removes column permutation)."""
    rows = tuple(
        tuple(sorted(_normalize_cell(v) for v in row)) for row in result.rows
    )
    return tuple(sorted(rows))


def score(engine_result: QueryResult, gold_result: QueryResult) -> bool:
    return normalize(engine_result) == normalize(gold_result)


@dataclass
class QuestionRecord:
    id: str
    difficulty: str
    correct: bool
    latency_s: float
    iterations_used: int
    early_accepted: bool
    empty_vs_empty: bool = False
    error: Optional[str] = None


@dataclass
class BenchmarkReport:
    config: str
    records: List[QuestionRecord] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.records)

    @property
    def accuracy(self) -> float:
        if not self.records:
            return 0.0
        return 100.0 * sum(r.correct for r in self.records) / self.total

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "accuracy": self.accuracy,
                "records": [asdict(r) for r in self.records],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkReport":
        data = json.loads(text)
        report = cls(config=data["config"])
        report.records = [QuestionRecord(**r) for r in data["records"]]
        return report


def latency_stats(report: BenchmarkReport) -> Tuple[float, float, float, float]:
    """(avg, p90, p99, questions-per-minute); percentiles by nearest rank."""
    if not report.records:
        raise EmptyReport("no records to summarize")
    latencies = sorted(r.latency_s for r in report.records)
    n = len(latencies)

    def nearest_rank(p: float) -> float:
        rank = max(1, math.ceil(p / 100.0 * n))
        return latencies[rank - 1]

    avg = sum(latencies) / n
    total = sum(latencies)
    qpm = 60.0 * n / total if total > 0 else float("inf")
    return avg, nearest_rank(90), nearest_rank(99), qpm


def tier_breakdown(report: BenchmarkReport) -> Dict[str, float]:
    tiers: Dict[str, List[bool]] = {}
    for record in report.records:
        tiers.setdefault(record.difficulty, []).append(record.correct)
    return {
        tier: 100.0 * sum(marks) / len(marks) for tier, marks in tiers.items()
    }


def count_regressions(report_c: BenchmarkReport, report_a: BenchmarkReport) -> int:
    """Questions correct under generation-only but incorrect under the full
    pipeline."""
    by_id_c = {r.id: r for r in report_c.records}
    by_id_a = {r.id: r for r in report_a.records}
    if set(by_id_c) != set(by_id_a):
        raise MismatchedQuestionSets(
            "reports cover different question sets"
        )
    return sum(
        1 for qid, rc in by_id_c.items() if rc.correct and not by_id_a[qid].correct
    )


def run_benchmark(
    questions: List[BenchmarkQuestion],
    cfg: AblationConfig,
    engine_factory,
    gold_gateway: Gateway,
    feedback_examples: int = 3,
    row_limit: int = 50,
) -> BenchmarkReport:
    """Run every question through the full pipeline under one ablation
    config.

    ``engine_factory(question)`` returns a fresh engine wired to the
    question's database; each question gets a fresh chat id so no context
    leaks between questions. Per-question failures are recorded as incorrect
    and never abort the run.
    """
    report = BenchmarkReport(config=cfg.label)
    loop_cfg = cfg.loop_config(feedback_examples, row_limit)
    for question in questions:
        chat_id = f"bench-{question.id}-{uuid.uuid4().hex[:8]}"
        started = time.perf_counter()
        try:
            engine = engine_factory(question)
            outcome = engine.run(chat_id, question.question, loop_config=loop_cfg)
            latency = time.perf_counter() - started
            gold = gold_gateway.execute_readonly(question.gold_sql, row_limit)
            if isinstance(gold, ErrorDiagnostics):
                raise RuntimeError(f"gold query failed: {gold.message}")
            evaluation = outcome.evaluation
            correct = score(evaluation.result, gold)
            report.records.append(
                QuestionRecord(
                    id=question.id,
                    difficulty=question.difficulty,
                    correct=correct,
                    latency_s=latency,
                    iterations_used=evaluation.iterations_used,
                    early_accepted=evaluation.early_accepted,
                    empty_vs_empty=(
                        correct
                        and not evaluation.result.rows
                        and not gold.rows
                    ),
                )
            )
        except Exception as exc:  # noqa: BLE001 - per-question isolation
            report.records.append(
                QuestionRecord(
                    id=question.id,
                    difficulty=question.difficulty,
                    correct=False,
                    latency_s=time.perf_counter() - started,
                    iterations_used=0,
                    early_accepted=False,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return report


def format_report(report: BenchmarkReport) -> str:
    avg, p90, p99, qpm = latency_stats(report)
    lines = [
        f"Config {report.config}: {report.accuracy:.1f}% "
        f"({sum(r.correct for r in report.records)}/{report.total})",
        f"Latency avg {avg:.3f}s  p90 {p90:.3f}s  p99 {p99:.3f}s  {qpm:.1f} QPM",
        "Per-tier accuracy:",
    ]
    for tier, acc in sorted(tier_breakdown(report).items()):
        lines.append(f"  {tier:<12} {acc:.1f}%")
    empty_matches = sum(r.empty_vs_empty for r in report.records)
    if empty_matches:
        lines.append(f"Empty-vs-empty matches: {empty_matches}")
    return "\n".join(lines)
