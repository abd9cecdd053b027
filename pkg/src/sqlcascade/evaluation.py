"""Execution-accuracy scoring with difficulty-stratified reporting.

A prediction is correct when its execution result equals the gold SQL's
result, compared as an unordered multiset of rows (configurable to set
semantics). Row values compare position-wise: integers and text exactly,
floats under a relative tolerance.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import EvalConfig
from .execution import execute_sql

logger = logging.getLogger(__name__)

DIFFICULTY_ORDER = ("simple", "moderate", "challenging", "unspecified")

# Incorrect-verdict reasons, also the failure-taxonomy keys of the report.
REASONS = ("mismatch", "pred_error", "pred_timeout", "missing")


@dataclass
class BenchmarkItem:
    """One benchmark question with its gold SQL."""

    question_id: int
    db_id: str
    question: str
    evidence: str = ""
    gold_sql: str = ""
    difficulty: str | None = None


def load_benchmark_items(path: Path | str) -> list[BenchmarkItem]:
    """Read a question file (JSON array, BIRD dev field names)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    items = []
    for index, entry in enumerate(data):
        items.append(
            BenchmarkItem(
                question_id=int(entry.get("question_id", index)),
                db_id=entry["db_id"],
                question=entry.get("question", "") or entry.get("query", ""),
                evidence=entry.get("evidence", "") or "",
                gold_sql=entry.get("SQL", "") or entry.get("sql", "") or entry.get("query_gold", ""),
                difficulty=entry.get("difficulty"),
            )
        )
    return items


@dataclass
class MatchVerdict:
    """Outcome of comparing one prediction against its gold SQL."""

    status: str  # "correct" | "incorrect" | "invalid_gold"
    reason: str | None = None  # set when status == "incorrect"


def _cell_sort_key(value: object) -> tuple:
    if value is None:
        return (0, "")
    if isinstance(value, bool):
        return (1, float(value))
    if isinstance(value, (int, float)):
        return (1, float(value))
    if isinstance(value, str):
        return (2, value)
    if isinstance(value, bytes):
        return (3, repr(value))
    return (4, str(value))


def _row_sort_key(row: tuple) -> tuple:
    return tuple(_cell_sort_key(cell) for cell in row)


def _cells_equal(a: object, b: object, float_tol: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return math.isclose(float(a), float(b), rel_tol=float_tol, abs_tol=0.0)
    if type(a) is not type(b):
        return False
    return a == b


def rows_equal(
    pred_rows: list[tuple],
    gold_rows: list[tuple],
    float_tol: float = 1e-6,
    semantics: str = "bag",
) -> bool:
    """Order-insensitive comparison of two result sets.

    Column order within a row is significant. "bag" keeps duplicates;
    "set" collapses exact duplicates first.
    """
    if semantics == "set":
        pred_rows = list(dict.fromkeys(pred_rows))
        gold_rows = list(dict.fromkeys(gold_rows))
    if len(pred_rows) != len(gold_rows):
        return False
    pred_sorted = sorted(pred_rows, key=_row_sort_key)
    gold_sorted = sorted(gold_rows, key=_row_sort_key)
    for p_row, g_row in zip(pred_sorted, gold_sorted):
        if len(p_row) != len(g_row):
            return False
        if not all(_cells_equal(p, g, float_tol) for p, g in zip(p_row, g_row)):
            return False
    return True


def execution_match(
    pred_sql: str,
    gold_sql: str,
    db_file: Path | str,
    timeout: float = 120.0,
    float_tol: float = 1e-6,
    semantics: str = "bag",
    row_cap: int = 1_000_000,
) -> MatchVerdict:
    """Execute both queries and compare their results.

    A gold query that fails to execute marks the item invalid_gold (it
    cannot score anything and is excluded from the accuracy denominator).
    """
    gold = execute_sql(db_file, gold_sql, timeout=timeout, row_cap=row_cap)
    if gold.status in ("error", "timeout"):
        return MatchVerdict(status="invalid_gold")
    pred = execute_sql(db_file, pred_sql, timeout=timeout, row_cap=row_cap)
    if pred.status == "error":
        return MatchVerdict(status="incorrect", reason="pred_error")
    if pred.status == "timeout":
        return MatchVerdict(status="incorrect", reason="pred_timeout")
    if rows_equal(pred.rows, gold.rows, float_tol=float_tol, semantics=semantics):
        return MatchVerdict(status="correct")
    return MatchVerdict(status="incorrect", reason="mismatch")


@dataclass
class ItemResult:
    question_id: int
    db_id: str
    difficulty: str
    status: str  # "correct" | "incorrect" | "invalid_gold" | "unknown_db"
    reason: str | None = None


@dataclass
class BucketStats:
    count: int = 0
    correct: int = 0

    @property
    def ex(self) -> float:
        return round(100.0 * self.correct / self.count, 2) if self.count else 0.0


@dataclass
class EvalReport:
    """Aggregate verdicts: overall EX, per-difficulty EX, failure taxonomy."""

    total_items: int = 0
    scored: int = 0
    correct: int = 0
    invalid_gold: int = 0
    unknown_db: int = 0
    buckets: dict[str, BucketStats] = field(default_factory=dict)
    reasons: dict[str, int] = field(default_factory=lambda: {r: 0 for r in REASONS})
    results: list[ItemResult] = field(default_factory=list)

    @property
    def ex_overall(self) -> float:
        return round(100.0 * self.correct / self.scored, 2) if self.scored else 0.0

    def to_dict(self) -> dict:
        return {
            "total_items": self.total_items,
            "scored": self.scored,
            "correct": self.correct,
            "ex_overall": self.ex_overall,
            "invalid_gold": self.invalid_gold,
            "unknown_db": self.unknown_db,
            "buckets": {
                name: {"count": b.count, "correct": b.correct, "ex": b.ex}
                for name, b in self.buckets.items()
            },
            "reasons": dict(self.reasons),
            "items": [
                {
                    "question_id": r.question_id,
                    "db_id": r.db_id,
                    "difficulty": r.difficulty,
                    "status": r.status,
                    "reason": r.reason,
                }
                for r in self.results
            ],
        }


def _bucket_name(difficulty: str | None) -> str:
    if difficulty and difficulty.strip().lower() in DIFFICULTY_ORDER:
        return difficulty.strip().lower()
    return "unspecified"


def score_run(
    items: list[BenchmarkItem],
    predictions: dict[str, str],
    bundles_root: Path | str,
    config: EvalConfig | None = None,
) -> EvalReport:
    """Score predictions (keyed by question_id) against their gold SQL.

    Missing predictions count incorrect("missing"). Items whose database
    bundle is absent, or whose gold SQL fails, are reported and excluded
    from the EX denominator.
    """
    config = config or EvalConfig()
    bundles = Path(bundles_root)

    def score_item(item: BenchmarkItem) -> ItemResult:
        difficulty = _bucket_name(item.difficulty)
        db_file = bundles / item.db_id / f"{item.db_id}.sqlite"
        if not db_file.is_file():
            logger.warning("question %s: unknown db_id %r", item.question_id, item.db_id)
            return ItemResult(item.question_id, item.db_id, difficulty, "unknown_db")
        pred_sql = predictions.get(str(item.question_id))
        if pred_sql is None:
            return ItemResult(item.question_id, item.db_id, difficulty, "incorrect", "missing")
        verdict = execution_match(
            pred_sql,
            item.gold_sql,
            db_file,
            timeout=config.timeout,
            float_tol=config.float_tolerance,
            semantics=config.row_semantics,
            row_cap=config.row_cap,
        )
        return ItemResult(item.question_id, item.db_id, difficulty, verdict.status, verdict.reason)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(score_item, items))
    else:
        results = [score_item(item) for item in items]
    results.sort(key=lambda r: r.question_id)

    report = EvalReport(total_items=len(items), results=results)
    for result in results:
        if result.status == "invalid_gold":
            report.invalid_gold += 1
            continue
        if result.status == "unknown_db":
            report.unknown_db += 1
            continue
        bucket = report.buckets.setdefault(result.difficulty, BucketStats())
        bucket.count += 1
        report.scored += 1
        if result.status == "correct":
            bucket.correct += 1
            report.correct += 1
        elif result.reason in report.reasons:
            report.reasons[result.reason] += 1
    return report


def render_report_text(report: EvalReport, label: str = "run") -> str:
    """Plain-text table in the Simple / Moderate / Challenging / All shape."""
    names = [n for n in DIFFICULTY_ORDER if n in report.buckets]
    headers = [n.capitalize() for n in names] + ["All"]
    counts = [str(report.buckets[n].count) for n in names] + [str(report.scored)]
    correct = [str(report.buckets[n].correct) for n in names] + [str(report.correct)]
    ex_values = [f"{report.buckets[n].ex:.2f}" for n in names] + [f"{report.ex_overall:.2f}"]
    width = 13
    lines = [
        f"Execution accuracy ({label})",
        "".ljust(width) + "".join(h.rjust(width) for h in headers),
        "count".ljust(width) + "".join(c.rjust(width) for c in counts),
        "correct".ljust(width) + "".join(c.rjust(width) for c in correct),
        "EX".ljust(width) + "".join(v.rjust(width) for v in ex_values),
    ]
    taxonomy = ", ".join(f"{name}={count}" for name, count in report.reasons.items())
    lines.append(f"failures: {taxonomy}")
    if report.invalid_gold:
        lines.append(f"invalid gold (excluded): {report.invalid_gold}")
    if report.unknown_db:
        lines.append(f"unknown db (excluded): {report.unknown_db}")
    return "\n".join(lines)
