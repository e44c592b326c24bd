"""Benchmark harness: scoring normalization, reports, latency statistics and
regression counting."""

import decimal
import json
import math
import random

import pytest

from sqlmender.bench import (
    AblationConfig,
    BenchmarkQuestion,
    BenchmarkReport,
    QuestionRecord,
    count_regressions,
    latency_stats,
    load_questions,
    normalize,
    run_benchmark,
    score,
    tier_breakdown,
)
from sqlmender.db.gateway import QueryResult
from sqlmender.errors import EmptyReport, MismatchedQuestionSets

from conftest import generation_json, make_engine


def result(*rows, columns=("a",)):
    return QueryResult(columns=columns, rows=tuple(rows))


class TestNormalization:
    def test_string_case_and_whitespace(self):
        assert score(result(("  Alice ",)), result(("alice",)))

    def test_numeric_rounding_two_places(self):
        assert score(result((1.004,)), result((decimal.Decimal("1.00"),)))
        assert not score(result((1.006,)), result((1.00,)))

    def test_int_float_equivalence(self):
        assert score(result((5,)), result((5.0,)))

    def test_null_distinct_from_empty_string(self):
        assert not score(result((None,)), result(("",)))
        assert score(result((None,)), result((None,)))

    def test_row_order_ignored(self):
        assert score(result((1,), (2,)), result((2,), (1,)))

    def test_column_order_ignored(self):
        a = result((1, "x"), columns=("n", "s"))
        b = result(("x", 1), columns=("s", "n"))
        assert score(a, b)

    def test_multiset_not_set(self):
        assert not score(result((1,), (1,)), result((1,)))

    def test_empty_equals_empty(self):
        assert score(result(), result())

    def test_bool_normalization(self):
        assert normalize(result((True,))) == normalize(result((True,)))
        assert normalize(result((True,))) != normalize(result((False,)))


class TestQuestions:
    def test_fixture_suite_loads(self, questions_path):
        questions = load_questions(questions_path)
        assert len(questions) == 12
        assert {q.difficulty for q in questions} == {
            "easy", "medium", "hard", "extra_hard",
        }

    def test_unknown_tier_rejected(self):
        with pytest.raises(ValueError):
            BenchmarkQuestion(
                id="x", database="d", question="?", gold_sql="SELECT 1",
                difficulty="impossible",
            )


class TestAblationConfigs:
    @pytest.mark.parametrize("label,retries", [("A", 5), ("B", 1), ("C", 0)])
    def test_retry_budgets(self, label, retries):
        cfg = AblationConfig(label)
        assert cfg.retry_count == retries
        assert cfg.loop_config().retry_count == retries

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            AblationConfig("D")


def _report(latencies, correct=None):
    correct = correct or [True] * len(latencies)
    report = BenchmarkReport(config="A")
    for i, (lat, ok) in enumerate(zip(latencies, correct)):
        report.records.append(
            QuestionRecord(
                id=f"q{i}", difficulty="easy", correct=ok, latency_s=lat,
                iterations_used=1, early_accepted=ok,
            )
        )
    return report


class TestLatencyStats:
    def test_against_independent_oracle(self):
        rng = random.Random(7)
        latencies = [rng.uniform(0.01, 3.0) for _ in range(137)]
        avg, p90, p99, qpm = latency_stats(_report(latencies))
        ordered = sorted(latencies)
        n = len(ordered)
        # nearest-rank definition computed independently
        assert p90 == ordered[math.ceil(0.90 * n) - 1]
        assert p99 == ordered[math.ceil(0.99 * n) - 1]
        assert avg == pytest.approx(sum(latencies) / n)
        assert qpm == pytest.approx(60.0 * n / sum(latencies))

    def test_single_sample(self):
        avg, p90, p99, qpm = latency_stats(_report([2.0]))
        assert (avg, p90, p99) == (2.0, 2.0, 2.0)
        assert qpm == pytest.approx(30.0)

    def test_empty_report_raises(self):
        with pytest.raises(EmptyReport):
            latency_stats(BenchmarkReport(config="A"))


class TestReport:
    def test_accuracy(self):
        report = _report([1, 1, 1, 1], correct=[True, True, True, False])
        assert report.accuracy == 75.0

    def test_json_round_trip(self):
        report = _report([0.5, 1.5], correct=[True, False])
        loaded = BenchmarkReport.from_json(report.to_json())
        assert loaded.config == report.config
        assert loaded.records == report.records

    def test_tier_breakdown(self):
        report = BenchmarkReport(config="A")
        for tier, ok in [("easy", True), ("easy", False), ("hard", True)]:
            report.records.append(
                QuestionRecord(
                    id=f"{tier}-{ok}", difficulty=tier, correct=ok,
                    latency_s=1.0, iterations_used=1, early_accepted=ok,
                )
            )
        assert tier_breakdown(report) == {"easy": 50.0, "hard": 100.0}


class TestRegressions:
    def _single(self, config, correct):
        report = BenchmarkReport(config=config)
        report.records.append(
            QuestionRecord(
                id="q1", difficulty="easy", correct=correct, latency_s=1.0,
                iterations_used=1, early_accepted=correct,
            )
        )
        return report

    def test_counts_c_correct_a_wrong(self):
        assert count_regressions(self._single("C", True), self._single("A", False)) == 1
        assert count_regressions(self._single("C", True), self._single("A", True)) == 0
        assert count_regressions(self._single("C", False), self._single("A", True)) == 0

    def test_mismatched_sets_rejected(self):
        a = self._single("C", True)
        b = BenchmarkReport(config="A")
        b.records.append(
            QuestionRecord(
                id="other", difficulty="easy", correct=True, latency_s=1.0,
                iterations_used=1, early_accepted=True,
            )
        )
        with pytest.raises(MismatchedQuestionSets):
            count_regressions(a, b)


class TestRunBenchmark:
    def test_per_question_isolation(self, shop_db_path, gateway, questions_path):
        questions = load_questions(questions_path)[:3]

        def factory(question):
            if question.id == "q02":
                raise RuntimeError("engine construction exploded")
            return make_engine(
                shop_db_path,
                [["schema"], generation_json(question.gold_sql)],
                retry_count=0,
            )

        report = run_benchmark(questions, AblationConfig("C"), factory, gateway)
        by_id = {r.id: r for r in report.records}
        assert by_id["q01"].correct is True
        assert by_id["q02"].correct is False
        assert "engine construction exploded" in by_id["q02"].error
        assert by_id["q03"].correct is True

    def test_gold_suite_self_consistent(self, shop_db_path, gateway, questions_path):
        # feeding each gold query back through the engine scores 100%
        questions = load_questions(questions_path)

        def factory(question):
            return make_engine(
                shop_db_path,
                [["schema"], generation_json(question.gold_sql)],
                retry_count=0,
            )

        report = run_benchmark(questions, AblationConfig("C"), factory, gateway)
        assert report.accuracy == 100.0
        assert report.total == 12
