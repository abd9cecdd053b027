"""Schema-linking agent: table summaries, entity-column linking, soft schema.

Soft selection keeps the entire schema visible to downstream agents and only
adds a detail section for the selected columns, so a bad link can never hide
a table or column outright.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .catalog import DatabaseCatalog, render_foreign_keys, render_primary_keys, serialize_schema
from .errors import UnparseableLinks, UnparseableSummary
from .prompts import assemble
from .trace import TraceRecorder

logger = logging.getLogger(__name__)

TableSummaries = dict[str, str]

JSON_REPAIR_ADDENDUM = (
    "\n\nYour previous answer could not be used. "
    "Respond again, and make sure the answer contains exactly one valid JSON object."
)


def extract_last_json_object(text: str) -> dict | None:
    """Last top-level well-formed JSON object in ``text``, or None.

    Models habitually precede the JSON with analysis prose (the instructions
    invite that), so scan forward and keep the final parseable object.
    """
    decoder = json.JSONDecoder()
    found = None
    pos = 0
    while True:
        start = text.find("{", pos)
        if start == -1:
            break
        try:
            obj, end = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            found = obj
        pos = start + end
    return found


@dataclass
class EntityLinkResult:
    """Per-entity ranked column lists plus their deduplicated union."""

    entities: list[tuple[str, list[str]]] = field(default_factory=list)
    selected_columns: list[str] = field(default_factory=list)

    @classmethod
    def all_columns(cls, catalog: DatabaseCatalog) -> "EntityLinkResult":
        """Degenerate no-filtering fallback: every column selected."""
        return cls(entities=[], selected_columns=catalog.qualified_columns())


@dataclass
class SoftSchema:
    """Whole-schema text plus a detail section for the linked columns."""

    full_schema_text: str
    detail_block: str
    matched_values_text: str


def summarize_tables(
    catalog: DatabaseCatalog, gateway, trace: TraceRecorder | None = None
) -> TableSummaries:
    """One-sentence summary per table, via the summarization prompt.

    Malformed JSON gets one repair retry; tables still missing afterwards are
    filled with an empty summary and flagged in the trace. Raises
    UnparseableSummary when both responses contain no JSON object at all.
    """
    trace = trace if trace is not None else TraceRecorder()
    prompt = assemble(
        "table_summary",
        {"DB_ID": catalog.db_id, "Schema": serialize_schema(catalog)},
    )
    response = gateway.ask("linker.summarize", prompt)
    parsed = extract_last_json_object(response.content)
    expected = [tbl.name for tbl in catalog.tables]
    if parsed is None or not set(expected) <= set(parsed):
        retry_prompt = prompt + JSON_REPAIR_ADDENDUM + (
            " The JSON object must map every one of these table names to a one-sentence summary: "
            + ", ".join(expected)
            + "."
        )
        response = gateway.ask("linker.summarize", retry_prompt)
        retried = extract_last_json_object(response.content)
        if retried is not None:
            parsed = retried
    if parsed is None:
        raise UnparseableSummary(f"no JSON summary object for database {catalog.db_id!r} after retry")

    summaries: TableSummaries = {}
    for name in expected:
        if name in parsed:
            summaries[name] = str(parsed[name])
        else:
            summaries[name] = ""
            trace.warn(f"summary missing for table {name!r}; filled with empty text")
    for key in parsed:
        if key not in summaries:
            trace.warn(f"summary for unknown table {key!r} ignored")
    return summaries


def _resolve_qualified(catalog: DatabaseCatalog, raw: str) -> str | None:
    """Canonical ``table.column`` for a model-written reference, or None."""
    cleaned = raw.strip().strip("<>").replace("`", "").strip()
    if "." not in cleaned:
        return None
    table_part, column_part = cleaned.split(".", 1)
    table = catalog.find_table(table_part)
    if table is None:
        return None
    column = table.find_column(column_part)
    if column is None:
        return None
    return f"{table.name}.{column.name}"


def _parse_links(catalog: DatabaseCatalog, parsed: dict, trace: TraceRecorder) -> EntityLinkResult:
    entities: list[tuple[str, list[str]]] = []
    selected: list[str] = []
    for entity, columns in parsed.items():
        if not isinstance(columns, list):
            trace.warn(f"entity {entity!r}: column list is not a list, dropped")
            continue
        resolved: list[str] = []
        for item in columns:
            qualified = _resolve_qualified(catalog, str(item))
            if qualified is None:
                trace.warn(f"entity {entity!r}: column {item!r} does not resolve, dropped")
                continue
            if qualified not in resolved:
                resolved.append(qualified)
        if not resolved:
            trace.warn(f"entity {entity!r}: no resolvable columns, entity dropped")
            continue
        entities.append((str(entity), resolved))
        for qualified in resolved:
            if qualified not in selected:
                selected.append(qualified)
    return EntityLinkResult(entities=entities, selected_columns=selected)


def link_entities(
    question: str,
    evidence: str,
    catalog: DatabaseCatalog,
    summaries: TableSummaries,
    matched_values_text: str,
    gateway,
    trace: TraceRecorder | None = None,
) -> EntityLinkResult:
    """Entity-based column linking over the full schema plus summaries.

    The model's JSON (entity -> ranked ``table.column`` list) is validated
    against the catalog; unresolvable entries are dropped with a warning.
    Malformed JSON or empty lists get one repair retry, after which
    UnparseableLinks is raised (callers fall back to selecting everything).
    """
    trace = trace if trace is not None else TraceRecorder()
    slots = {
        "DB_ID": catalog.db_id,
        "Table summaries": json.dumps(summaries, ensure_ascii=False, indent=2),
        "Schema": serialize_schema(catalog),
        "Primary keys": render_primary_keys(catalog),
        "Foreign keys": render_foreign_keys(catalog),
        "Question": question,
        "Evidence": evidence,
        "Matched values": matched_values_text,
    }
    prompt = assemble("entity_linking", slots)

    def attempt(text: str) -> dict | None:
        parsed = extract_last_json_object(text)
        if parsed is None or not parsed:
            return None
        if any(isinstance(v, list) and len(v) == 0 for v in parsed.values()):
            return None  # empty lists are a contract violation worth a retry
        return parsed

    response = gateway.ask("linker.link", prompt)
    parsed = attempt(response.content)
    if parsed is None:
        retry_prompt = prompt + JSON_REPAIR_ADDENDUM + (
            " Map every extracted entity to a non-empty list of <table.column> strings."
        )
        response = gateway.ask("linker.link", retry_prompt)
        parsed = attempt(response.content)
    if parsed is None:
        raise UnparseableLinks(f"no usable entity-link JSON for {catalog.db_id!r} after retry")
    return _parse_links(catalog, parsed, trace)


def build_soft_schema(
    catalog: DatabaseCatalog, links: EntityLinkResult, matched_values_text: str
) -> SoftSchema:
    """Full elided schema plus a detail section covering the linked columns.

    The full schema text never varies with the selection; only the detail
    block does. An empty selection yields an empty detail block.
    """
    full_text = serialize_schema(catalog, with_column_details=False)
    selected = set(links.selected_columns)
    sections: list[str] = []
    for table in catalog.tables:
        chosen = [col for col in table.columns if f"{table.name}.{col.name}" in selected]
        if not chosen:
            continue
        lines = [f"# Table: {table.name}"]
        for col in chosen:
            parts = [f"{col.name}<{col.data_type}>"]
            if col.description:
                parts.append(col.description)
            if col.value_examples:
                parts.append("Value examples: [" + ", ".join(col.value_examples) + "]")
            lines.append("(" + ", ".join(parts) + ")")
        sections.append("\n".join(lines))
    if sections:
        detail = "Detailed description of tables and columns:\n" + "\n".join(sections)
    else:
        detail = ""
    return SoftSchema(
        full_schema_text=full_text,
        detail_block=detail,
        matched_values_text=matched_values_text,
    )
