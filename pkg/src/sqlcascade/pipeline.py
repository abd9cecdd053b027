"""End-to-end composition: catalog -> retrieval -> linking -> decomposition
-> iterative generation, per question, with per-question traces.

Per-item failures never abort the run; they land in the run summary and the
item simply contributes no prediction.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import DatabaseCatalog, load_catalog, render_foreign_keys, render_primary_keys
from .config import RunConfig
from .decomposer import decompose
from .errors import UnparseableLinks, UnparseableSummary
from .evaluation import BenchmarkItem
from .generation import GenerationContext, run_chain
from .linker import EntityLinkResult, build_soft_schema, link_entities, summarize_tables
from .prompts import load_asset
from .trace import TracedGateway, TraceRecorder
from .values import format_matched_values, retrieve_matched_values

logger = logging.getLogger(__name__)


class BundleCaches:
    """Per-run caches shared by workers: catalogs and table summaries.

    A per-db lock keeps concurrent workers from loading the same bundle or
    summarizing the same database twice (which would also double-consume
    replay fixtures).
    """

    def __init__(self):
        self._catalogs: dict[str, DatabaseCatalog] = {}
        self._summaries: dict[str, dict[str, str]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _db_lock(self, db_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(db_id, threading.Lock())

    def catalog(self, bundles_root: Path, db_id: str, config) -> DatabaseCatalog:
        with self._db_lock(db_id):
            if db_id not in self._catalogs:
                self._catalogs[db_id] = load_catalog(bundles_root, db_id, config)
            return self._catalogs[db_id]

    def summaries(self, catalog: DatabaseCatalog, gateway, trace: TraceRecorder) -> dict[str, str]:
        with self._db_lock(catalog.db_id):
            if catalog.db_id not in self._summaries:
                try:
                    self._summaries[catalog.db_id] = summarize_tables(catalog, gateway, trace)
                except UnparseableSummary as exc:
                    trace.warn(f"table summarization unusable ({exc}); continuing with empty summaries")
                    self._summaries[catalog.db_id] = {tbl.name: "" for tbl in catalog.tables}
            return self._summaries[catalog.db_id]


@dataclass
class QuestionResult:
    """What one question produced: a prediction or a recorded failure."""

    question_id: int
    db_id: str
    sql: str | None = None
    error: str | None = None
    trace: TraceRecorder | None = None

    @property
    def ok(self) -> bool:
        return self.sql is not None


def answer_question(
    item: BenchmarkItem, caches: BundleCaches, gateway, config: RunConfig
) -> QuestionResult:
    """Run the full agent cascade for one benchmark item."""
    trace = TraceRecorder(
        question_id=item.question_id,
        db_id=item.db_id,
        question=item.question,
        evidence=item.evidence,
    )
    traced_gateway = TracedGateway(gateway, trace)
    try:
        catalog = caches.catalog(config.bundles_root, item.db_id, config.ingestion)
        matches = retrieve_matched_values(item.question, item.evidence, catalog, config.retrieval)
        matched_values_text = format_matched_values(matches)
        trace.matched_values_text = matched_values_text

        summaries = caches.summaries(catalog, traced_gateway, trace)
        trace.summaries = dict(summaries)

        try:
            links = link_entities(
                item.question, item.evidence, catalog, summaries,
                matched_values_text, traced_gateway, trace,
            )
        except UnparseableLinks as exc:
            trace.warn(f"entity linking unusable ({exc}); selecting all columns")
            links = EntityLinkResult.all_columns(catalog)
        trace.entities = [[entity, cols] for entity, cols in links.entities]
        trace.selected_columns = list(links.selected_columns)

        soft_schema = build_soft_schema(catalog, links, matched_values_text)
        chain = decompose(
            item.question, item.evidence, traced_gateway, trace,
            max_chain_len=config.generation.max_chain_len,
        )
        trace.chain = list(chain.sub_questions)

        ctx = GenerationContext(
            db_id=catalog.db_id,
            soft_schema=soft_schema,
            primary_keys_text=render_primary_keys(catalog),
            foreign_keys_text=render_foreign_keys(catalog),
            evidence=item.evidence,
            question=item.question,
            matched_values_text=matched_values_text,
            constraints_text=load_asset("generation_constraints"),
        )
        final_sql, steps = run_chain(
            ctx, chain, catalog.db_file_path, traced_gateway, config.generation, trace
        )
        trace.steps = [
            {
                "sub_question": step.sub_question,
                "rounds": [
                    {
                        "stage": r.candidate.stage,
                        "round": r.candidate.round,
                        "sql": r.candidate.sql,
                        "status": r.outcome.status,
                        "error_message": r.outcome.error_message,
                        "exception_class": r.outcome.exception_class,
                        "row_count": len(r.outcome.rows),
                        "action": r.action,
                    }
                    for r in step.rounds
                ],
                "final_sql": step.final.sql,
            }
            for step in steps
        ]
        trace.final_sql = final_sql
        return QuestionResult(item.question_id, item.db_id, sql=final_sql, trace=trace)
    except Exception as exc:  # per-item resilience: record, continue the run
        logger.warning("question %s failed: %s", item.question_id, exc)
        trace.status = "failed"
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.warn(f"question failed: {trace.error}")
        return QuestionResult(item.question_id, item.db_id, error=trace.error, trace=trace)


@dataclass
class RunSummary:
    predictions: dict[str, str] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)
    warning_count: int = 0

    @property
    def answered(self) -> int:
        return len(self.predictions)


def run_pipeline(
    items: list[BenchmarkItem],
    config: RunConfig,
    gateway,
    existing_predictions: dict[str, str] | None = None,
) -> RunSummary:
    """Process items through the cascade, writing traces as they finish."""
    summary = RunSummary()
    selected = list(items)
    if config.question_ids is not None:
        wanted = set(config.question_ids)
        selected = [item for item in selected if item.question_id in wanted]
    if existing_predictions and not config.overwrite:
        known = {str(item.question_id) for item in items}
        kept = {qid: sql for qid, sql in existing_predictions.items() if qid in known}
        summary.predictions.update(kept)
        selected = [item for item in selected if str(item.question_id) not in kept]
        summary.skipped = sorted(int(qid) for qid in kept)
    selected.sort(key=lambda item: item.question_id)

    caches = BundleCaches()

    def work(item: BenchmarkItem) -> QuestionResult:
        return answer_question(item, caches, gateway, config)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, selected))
    else:
        results = [work(item) for item in selected]

    for result in sorted(results, key=lambda r: r.question_id):
        if result.trace is not None:
            summary.warning_count += result.trace.warning_count
            if config.traces_dir is not None:
                config.traces_dir.mkdir(parents=True, exist_ok=True)
                result.trace.write(config.traces_dir / f"q{result.question_id}.json")
        if result.ok:
            summary.predictions[str(result.question_id)] = result.sql
        else:
            summary.failures.append(
                {"question_id": result.question_id, "db_id": result.db_id, "error": result.error}
            )
    return summary
