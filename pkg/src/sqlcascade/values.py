"""Question-relevant value retrieval from TEXT columns.

Stored values that share a long common substring with the question (plus
evidence) are surfaced to the agents so they can pick the column that really
holds a mentioned name or place. Matching is case-insensitive; returned
values are verbatim cell contents.
"""

from __future__ import annotations

import sqlite3
from dataclasses import dataclass

from .catalog import DatabaseCatalog, _quote_ident, connect_read_only
from .config import RetrievalConfig
from .errors import DatabaseUnreadable


def _lcs_scan(a: str, b: str) -> tuple[int, int]:
    """Length and start-in-a of the longest common substring.

    Ties break toward the earliest start position in ``a``. O(|a|*|b|) time,
    O(|b|) space.
    """
    if not a or not b:
        return 0, 0
    best_len = 0
    best_end = 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        a_char = a[i - 1]
        for j in range(1, len(b) + 1):
            if a_char == b[j - 1]:
                run = prev[j - 1] + 1
                cur[j] = run
                if run > best_len:
                    best_len = run
                    best_end = i
        prev = cur
    return best_len, best_end - best_len


def longest_common_substring(a: str, b: str) -> tuple[int, str]:
    """Return (length, substring) of the longest contiguous common substring."""
    length, start = _lcs_scan(a, b)
    return length, a[start : start + length]


@dataclass
class MatchedValue:
    """One stored cell value that matched the question/evidence text."""

    table: str
    column: str
    value: str
    score: int
    source_span: str


def retrieve_matched_values(
    question: str,
    evidence: str,
    catalog: DatabaseCatalog,
    config: RetrievalConfig | None = None,
) -> list[MatchedValue]:
    """Scan distinct values of TEXT-typed columns for substring matches.

    A value is kept when the common substring is at least ``min_match_len``
    characters and covers at least ``min_match_ratio`` of the value. Results
    are sorted by descending score, then (table, column, value).
    """
    config = config or RetrievalConfig()
    text = question if not evidence else f"{question} {evidence}"
    lowered = text.lower()
    matches: list[MatchedValue] = []
    try:
        conn = connect_read_only(catalog.db_file_path)
    except sqlite3.Error as exc:
        raise DatabaseUnreadable(f"cannot open {catalog.db_file_path}: {exc}") from exc
    try:
        for table in catalog.tables:
            for column in table.columns:
                if not column.is_text_type:
                    continue
                cursor = conn.execute(
                    f"SELECT DISTINCT {_quote_ident(column.name)} FROM {_quote_ident(table.name)} "
                    f"WHERE {_quote_ident(column.name)} IS NOT NULL "
                    f"LIMIT {int(config.distinct_value_cap)}"
                )
                for (raw,) in cursor:
                    value = raw if isinstance(raw, str) else str(raw)
                    if not value:
                        continue
                    length, start = _lcs_scan(lowered, value.lower())
                    if length < config.min_match_len:
                        continue
                    if length / len(value) < config.min_match_ratio:
                        continue
                    matches.append(
                        MatchedValue(
                            table=table.name,
                            column=column.name,
                            value=value,
                            score=length,
                            source_span=text[start : start + length],
                        )
                    )
    except sqlite3.Error as exc:
        raise DatabaseUnreadable(f"cannot scan {catalog.db_file_path}: {exc}") from exc
    finally:
        conn.close()
    matches.sort(key=lambda m: (-m.score, m.table, m.column, m.value))
    return matches[: config.max_matches]


def format_matched_values(matches: list[MatchedValue]) -> str:
    """Linearize matches, one ``table.`Column` = 'value';`` line per match."""
    lines = []
    for match in matches:
        literal = match.value.replace("'", "''")
        lines.append(f"{match.table}.`{match.column}` = '{literal}';")
    return "\n".join(lines)
