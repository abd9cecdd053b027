"""Targets-conditions decomposition into a cascading sub-question chain.

The model splits a question into the targets to retrieve and the conditions
filtering them, then emits one sub-query per accumulated condition, each
marked with a leading ``##``. The last sub-query restates the full question.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .prompts import assemble
from .trace import TraceRecorder

logger = logging.getLogger(__name__)

PARSE_RETRY_ADDENDUM = (
    "\n\nYour previous answer contained no marked Subquery. "
    "Answer again and mark each Subquery with ## in front of it."
)


@dataclass
class SubQuestionChain:
    """Ordered sub-questions; a length-1 chain means no conditions to cascade."""

    sub_questions: list[str]
    original_question: str = ""

    def __len__(self) -> int:
        return len(self.sub_questions)

    def __iter__(self):
        return iter(self.sub_questions)


def parse_subqueries(response_text: str) -> list[str]:
    """All ``##``-marked sub-queries, in order.

    Each piece runs from its marker to the end of the line or the next
    marker; surrounding analysis prose is ignored and items are trimmed.
    """
    parts = response_text.split("##")
    out: list[str] = []
    for chunk in parts[1:]:
        item = chunk.split("\n", 1)[0].strip()
        if item:
            out.append(item)
    return out


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().strip(".?!").casefold()


def decompose(
    question: str,
    evidence: str,
    gateway,
    trace: TraceRecorder | None = None,
    max_chain_len: int = 6,
) -> SubQuestionChain:
    """Ask for a decomposition and parse the ``##``-marked chain.

    An empty parse gets one retry; a still-empty parse falls back to the
    single-step chain [question]. Chains longer than ``max_chain_len`` keep
    their last ``max_chain_len`` entries with the final one forced back to
    the original question.
    """
    trace = trace if trace is not None else TraceRecorder()
    prompt = assemble("decompose", {"Query": question, "Evidence": evidence})
    response = gateway.ask("decomposer.decompose", prompt)
    chain = parse_subqueries(response.content)
    if not chain:
        response = gateway.ask("decomposer.decompose", prompt + PARSE_RETRY_ADDENDUM)
        chain = parse_subqueries(response.content)
    if not chain:
        trace.warn("decomposition produced no sub-queries twice; using the question as a single step")
        chain = [question]
    if len(chain) > max_chain_len:
        trace.warn(
            f"decomposition produced {len(chain)} sub-queries; keeping the last {max_chain_len}"
        )
        chain = chain[-max_chain_len:]
        chain[-1] = question
    if _normalize(chain[-1]) != _normalize(question):
        trace.note("final sub-question does not restate the original question verbatim")
    return SubQuestionChain(sub_questions=chain, original_question=question)
