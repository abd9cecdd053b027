"""Sandboxed SQL execution against benchmark databases.

Queries run on a read-only connection (a write statement fails instead of
mutating benchmark data) under a wall-clock deadline enforced through the
SQLite progress handler. Failures are data, not exceptions: the outcome
carries a status plus the error message and exception class when relevant.
"""

from __future__ import annotations

import sqlite3
import time
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import connect_read_only

# Progress-handler granularity: VM instructions between deadline checks.
_PROGRESS_STEP = 1000


@dataclass
class ExecutionOutcome:
    """Classified result of one SQL execution."""

    status: str  # "rows" | "empty" | "error" | "timeout"
    rows: list[tuple] = field(default_factory=list)
    error_message: str | None = None
    exception_class: str | None = None
    elapsed: float = 0.0
    truncated: bool = False


def execute_sql(
    db_file: Path | str, sql: str, timeout: float = 60.0, row_cap: int = 500
) -> ExecutionOutcome:
    """Run ``sql`` read-only and classify the result.

    status="empty" covers both zero rows and results whose every cell is
    NULL. status="timeout" means the deadline interrupted the query. Fetch
    stops after ``row_cap`` rows, with the truncation recorded.
    """
    started = time.monotonic()
    deadline = started + timeout
    timed_out = False

    try:
        conn = connect_read_only(db_file)
    except sqlite3.Error as exc:
        return ExecutionOutcome(
            status="error",
            error_message=str(exc),
            exception_class=type(exc).__name__,
            elapsed=time.monotonic() - started,
        )

    def check_deadline():
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1  # abort the statement
        return 0

    conn.set_progress_handler(check_deadline, _PROGRESS_STEP)
    try:
        cursor = conn.execute(sql)
        fetched = cursor.fetchmany(row_cap + 1)
    except sqlite3.Error as exc:
        elapsed = time.monotonic() - started
        if timed_out:
            return ExecutionOutcome(status="timeout", elapsed=elapsed)
        return ExecutionOutcome(
            status="error",
            error_message=str(exc),
            exception_class=type(exc).__name__,
            elapsed=elapsed,
        )
    finally:
        conn.close()

    elapsed = time.monotonic() - started
    truncated = len(fetched) > row_cap
    rows = [tuple(row) for row in fetched[:row_cap]]
    if not rows or all(cell is None for row in rows for cell in row):
        return ExecutionOutcome(status="empty", rows=[], elapsed=elapsed)
    return ExecutionOutcome(status="rows", rows=rows, elapsed=elapsed, truncated=truncated)
