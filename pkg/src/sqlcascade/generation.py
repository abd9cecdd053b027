"""Iterative SQL generation: generate, execute, refine, cascade.

Each sub-question gets a candidate (the first from scratch, later ones by
extending the previous step's SQL), and every candidate passes through the
execute/refine loop before the next step sees it, so no unchecked SQL ever
propagates down the chain.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .config import GenerationConfig
from .decomposer import SubQuestionChain
from .errors import NoSqlFound
from .execution import ExecutionOutcome, execute_sql
from .linker import SoftSchema
from .prompts import assemble, load_asset
from .trace import TraceRecorder

logger = logging.getLogger(__name__)

SQL_RETRY_ADDENDUM = (
    "\n\nYour previous answer contained no usable SQL. "
    "Answer again with a single fenced ```sql code block whose statement starts with SELECT."
)

EMPTY_RESULT_NOTICE = (
    "The SQL executed successfully but returned an empty result "
    "(no rows, or only NULL values). The filter conditions or joins may be wrong."
)
EMPTY_RESULT_CLASS = "EmptyResult"
TIMEOUT_NOTICE = "The SQL execution exceeded the time limit and was aborted."
TIMEOUT_CLASS = "Timeout"

_SQL_FENCE = re.compile(r"```sql\b[ \t]*\n?(.*?)```", re.DOTALL | re.IGNORECASE)
_ANY_FENCE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\n?(.*?)```", re.DOTALL)


@dataclass
class GenerationContext:
    """Everything the generator and refiner prompts need for one question."""

    db_id: str
    soft_schema: SoftSchema
    primary_keys_text: str
    foreign_keys_text: str
    evidence: str
    question: str
    matched_values_text: str
    constraints_text: str


@dataclass
class SqlCandidate:
    """One extracted SQL statement plus where it came from."""

    sql: str
    raw_response: str = ""
    stage: str = "first"  # "first" | "next" | "refined"
    round: int = 0


@dataclass
class RefinementRound:
    """One execute-and-decide entry of a refinement trace."""

    candidate: SqlCandidate
    outcome: ExecutionOutcome
    action: str  # "accepted" | "refined" | "gave_up"


@dataclass
class ChainStep:
    """The full refinement trace for one sub-question."""

    sub_question: str
    rounds: list[RefinementRound] = field(default_factory=list)
    final: SqlCandidate | None = None


def extract_sql(text: str) -> str | None:
    """Pull the candidate SQL out of a model response.

    Ordered fallback: last fenced ```sql block, then last fenced block of any
    tag, then the last line starting with SELECT. Candidates not starting
    with SELECT are skipped (a later tier may still produce one).
    """
    for pattern in (_SQL_FENCE, _ANY_FENCE):
        candidates = [m.group(1).strip() for m in pattern.finditer(text)]
        valid = [c for c in candidates if c.upper().startswith("SELECT")]
        if valid:
            return valid[-1]
    select_lines = [ln.strip() for ln in text.splitlines() if ln.strip().upper().startswith("SELECT")]
    if select_lines:
        return select_lines[-1]
    return None


def _ask_for_sql(gateway, tag: str, prompt: str) -> tuple[str, str]:
    """Completion plus one retry when no SQL can be extracted."""
    response = gateway.ask(tag, prompt)
    sql = extract_sql(response.content)
    if sql is None:
        response = gateway.ask(tag, prompt + SQL_RETRY_ADDENDUM)
        sql = extract_sql(response.content)
    if sql is None:
        raise NoSqlFound(f"{tag}: response contained no SQL after retry")
    return sql, response.content


def _generation_slots(ctx: GenerationContext, sub_question: str) -> dict[str, str]:
    return {
        "Constraints": ctx.constraints_text,
        "Database schema": ctx.soft_schema.full_schema_text,
        "Primary keys": ctx.primary_keys_text,
        "Foreign keys": ctx.foreign_keys_text,
        "Detailed descriptions of tables and columns": ctx.soft_schema.detail_block,
        "Evidence": ctx.evidence,
        "Question": sub_question,
        "Matched values": ctx.matched_values_text,
    }


def generate_first_sub_sql(ctx: GenerationContext, sub_question: str, gateway) -> SqlCandidate:
    """Generate the SQL for the first sub-question from scratch."""
    slots = _generation_slots(ctx, sub_question)
    slots["Demonstrations"] = load_asset("demos_first_step")
    prompt = assemble("generate_first", slots)
    sql, raw = _ask_for_sql(gateway, "generator.first", prompt)
    return SqlCandidate(sql=sql, raw_response=raw, stage="first", round=0)


def generate_next_sub_sql(
    ctx: GenerationContext, prev_sub_question: str, prev_sql: str, sub_question: str, gateway
) -> SqlCandidate:
    """Extend the previous (already refined) SQL to the next sub-question."""
    slots = _generation_slots(ctx, sub_question)
    slots["Demonstrations"] = load_asset("demos_next_step")
    slots["Subquestion"] = prev_sub_question
    slots["Sub-SQL"] = prev_sql
    prompt = assemble("generate_next", slots)
    sql, raw = _ask_for_sql(gateway, "generator.next", prompt)
    return SqlCandidate(sql=sql, raw_response=raw, stage="next", round=0)


def refine(
    ctx: GenerationContext,
    candidate: SqlCandidate,
    outcome: ExecutionOutcome,
    gateway,
    sub_question: str | None = None,
) -> SqlCandidate | None:
    """One correction attempt from execution feedback.

    Returns None when even the retry produced no SQL; the caller keeps the
    prior candidate and gives up.
    """
    if outcome.status == "error":
        error_text = outcome.error_message or ""
        error_class = outcome.exception_class or "Error"
    elif outcome.status == "timeout":
        error_text = TIMEOUT_NOTICE
        error_class = TIMEOUT_CLASS
    elif outcome.status == "empty":
        error_text = EMPTY_RESULT_NOTICE
        error_class = EMPTY_RESULT_CLASS
    else:
        raise ValueError(f"refine called on a {outcome.status!r} outcome")
    slots = {
        "Evidence": ctx.evidence,
        "Query": sub_question if sub_question is not None else ctx.question,
        "Database info": ctx.soft_schema.full_schema_text,
        "Primary keys": ctx.primary_keys_text,
        "Foreign keys": ctx.foreign_keys_text,
        "Detailed descriptions of tables and columns": ctx.soft_schema.detail_block,
        "old SQL": candidate.sql,
        "SQLite error": error_text,
        "Exception class": error_class,
    }
    prompt = assemble("refine", slots)
    try:
        sql, raw = _ask_for_sql(gateway, "refiner.refine", prompt)
    except NoSqlFound:
        return None
    return SqlCandidate(sql=sql, raw_response=raw, stage="refined", round=candidate.round + 1)


def refine_loop(
    ctx: GenerationContext,
    candidate: SqlCandidate,
    db_file: Path | str,
    max_rounds: int,
    gateway,
    *,
    sub_question: str | None = None,
    timeout: float = 60.0,
    row_cap: int = 500,
    trace: TraceRecorder | None = None,
) -> tuple[SqlCandidate, list[RefinementRound]]:
    """Alternate execution and correction until the SQL yields rows.

    Accept immediately on rows. An empty result gets at most one correction
    attempt (a legitimately empty answer must not loop), then is accepted.
    Errors and timeouts are refined until rows appear or ``max_rounds``
    corrections are spent, at which point the last candidate is returned
    with action "gave_up".
    """
    trace = trace if trace is not None else TraceRecorder()
    rounds: list[RefinementRound] = []
    refines_used = 0
    empty_refines_used = 0
    current = candidate
    while True:
        outcome = execute_sql(db_file, current.sql, timeout=timeout, row_cap=row_cap)
        if outcome.status == "rows":
            rounds.append(RefinementRound(current, outcome, "accepted"))
            return current, rounds
        if outcome.status == "empty":
            if empty_refines_used >= 1 or refines_used >= max_rounds:
                rounds.append(RefinementRound(current, outcome, "accepted"))
                trace.note("empty result accepted after the allowed correction attempt")
                return current, rounds
            empty_refines_used += 1
        elif refines_used >= max_rounds:
            rounds.append(RefinementRound(current, outcome, "gave_up"))
            return current, rounds
        refined = refine(ctx, current, outcome, gateway, sub_question=sub_question)
        if refined is None:
            trace.warn("refiner produced no SQL; keeping the previous candidate")
            rounds.append(RefinementRound(current, outcome, "gave_up"))
            return current, rounds
        refines_used += 1
        rounds.append(RefinementRound(current, outcome, "refined"))
        current = refined


def run_chain(
    ctx: GenerationContext,
    chain: SubQuestionChain,
    db_file: Path | str,
    gateway,
    config: GenerationConfig | None = None,
    trace: TraceRecorder | None = None,
) -> tuple[str, list[ChainStep]]:
    """Walk the sub-question chain: generate, refine, feed forward.

    Step 1 generates from scratch; every later step extends the previous
    step's refined SQL. The returned SQL is the last step's loop output.
    """
    if not chain.sub_questions:
        raise ValueError("sub-question chain must be non-empty")
    config = config or GenerationConfig()
    trace = trace if trace is not None else TraceRecorder()
    steps: list[ChainStep] = []
    prev_question: str | None = None
    prev_sql: str | None = None
    for index, sub_question in enumerate(chain):
        if index == 0:
            candidate = generate_first_sub_sql(ctx, sub_question, gateway)
        else:
            candidate = generate_next_sub_sql(ctx, prev_question, prev_sql, sub_question, gateway)
        final, rounds = refine_loop(
            ctx,
            candidate,
            db_file,
            config.max_rounds,
            gateway,
            sub_question=sub_question,
            timeout=config.exec_timeout,
            row_cap=config.row_cap,
            trace=trace,
        )
        steps.append(ChainStep(sub_question=sub_question, rounds=rounds, final=final))
        prev_question = sub_question
        prev_sql = final.sql
    return prev_sql, steps
