"""Per-question audit records: every agent call, decision, and outcome.

Traces are written as JSON and deliberately contain no wall-clock values, so
replayed runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedTrace


@dataclass
class TraceRecorder:
    """Mutable collector for one question's journey through the pipeline."""

    question_id: int | None = None
    db_id: str = ""
    question: str = ""
    evidence: str = ""
    events: list[dict] = field(default_factory=list)
    matched_values_text: str = ""
    summaries: dict = field(default_factory=dict)
    entities: list = field(default_factory=list)
    selected_columns: list = field(default_factory=list)
    chain: list = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    final_sql: str | None = None
    status: str = "ok"
    error: str | None = None

    def warn(self, message: str) -> None:
        self.events.append({"kind": "warning", "message": message})

    def note(self, message: str) -> None:
        self.events.append({"kind": "note", "message": message})

    def llm_call(self, tag: str, messages: list[dict], content: str, source: str) -> None:
        self.events.append(
            {
                "kind": "llm_call",
                "tag": tag,
                "messages": messages,
                "response": content,
                "source": source,
            }
        )

    @property
    def warning_count(self) -> int:
        return sum(1 for e in self.events if e["kind"] == "warning")

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "db_id": self.db_id,
            "question": self.question,
            "evidence": self.evidence,
            "matched_values_text": self.matched_values_text,
            "summaries": self.summaries,
            "entities": self.entities,
            "selected_columns": self.selected_columns,
            "chain": self.chain,
            "steps": self.steps,
            "final_sql": self.final_sql,
            "status": self.status,
            "error": self.error,
            "events": self.events,
        }

    def write(self, path: Path) -> None:
        path.write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )


class TracedGateway:
    """Gateway wrapper that records every ask() into a trace."""

    def __init__(self, inner, trace: TraceRecorder):
        self.inner = inner
        self.trace = trace

    def ask(self, tag: str, prompt: str):
        response = self.inner.ask(tag, prompt)
        self.trace.llm_call(
            tag, [{"role": "user", "content": prompt}], response.content, response.source
        )
        return response


def load_trace(path: Path | str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedTrace(f"cannot read trace {path}: {exc}") from exc
    if not isinstance(data, dict) or "steps" not in data or "question" not in data:
        raise MalformedTrace(f"{path} is not a pipeline trace")
    return data


def render_trace(data: dict) -> str:
    """Human-readable rendering: agent sequence, chain, rounds, final SQL."""
    lines: list[str] = []
    lines.append(f"Question {data.get('question_id')} ({data.get('db_id')})")
    lines.append(f"Q: {data.get('question', '')}")
    if data.get("evidence"):
        lines.append(f"Evidence: {data['evidence']}")
    if data.get("matched_values_text"):
        lines.append("Matched values:")
        for line in data["matched_values_text"].splitlines():
            lines.append(f"  {line}")
    chain = data.get("chain") or []
    lines.append(f"Sub-question chain ({len(chain)} step{'s' if len(chain) != 1 else ''}):")
    for idx, sub in enumerate(chain, start=1):
        lines.append(f"  {idx}. {sub}")
    steps = data.get("steps") or []
    generations = len(steps)
    refinements = 0
    gave_up = False
    for idx, step in enumerate(steps, start=1):
        lines.append(f"Step {idx}: {step.get('sub_question', '')}")
        for round_info in step.get("rounds", []):
            action = round_info.get("action", "")
            status = round_info.get("status", "")
            note = f"  [{round_info.get('stage', '?')} round {round_info.get('round', 0)}] status={status} -> {action}"
            if action == "gave_up":
                gave_up = True
                note += "  (!)"
            if round_info.get("error_message"):
                note += f" ({round_info.get('exception_class')}: {round_info['error_message']})"
            lines.append(note)
            if action == "refined":
                refinements += 1
        lines.append(f"  final: {step.get('final_sql', '')}")
    lines.append(f"Generations: {generations}, refinement rounds: {refinements}")
    llm_calls = [e for e in data.get("events", []) if e.get("kind") == "llm_call"]
    if llm_calls:
        sources = sorted({e.get("source", "?") for e in llm_calls})
        lines.append(f"LLM calls: {len(llm_calls)} ({', '.join(sources)})")
    warnings = [e for e in data.get("events", []) if e.get("kind") == "warning"]
    for event in warnings:
        lines.append(f"warning: {event.get('message', '')}")
    lines.append(f"Final SQL: {data.get('final_sql')}")
    status = data.get("status", "ok")
    if gave_up:
        status += " (refiner gave up on at least one step)"
    lines.append(f"Status: {status}")
    if data.get("error"):
        lines.append(f"Error: {data['error']}")
    return "\n".join(lines)
