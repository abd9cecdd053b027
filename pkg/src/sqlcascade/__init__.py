"""Multi-agent text-to-SQL over SQLite benchmark bundles.

The pipeline chains four LLM-backed agents: a schema linker (soft column
selection with table summaries and value retrieval), a question decomposer
(targets and conditions into cascading sub-questions), an iterative SQL
generator, and an execution-guided refiner. A recordable/replayable gateway
makes the whole cascade deterministic and testable offline.
"""

__version__ = "0.1.0"

from .catalog import DatabaseCatalog, load_catalog, serialize_schema
from .decomposer import SubQuestionChain, decompose
from .evaluation import execution_match, score_run
from .gateway import ChatRequest, ChatResponse, LlmGateway, TranscriptStore
from .generation import run_chain
from .linker import SoftSchema, build_soft_schema, link_entities, summarize_tables
from .values import longest_common_substring, retrieve_matched_values

__all__ = [
    "ChatRequest",
    "ChatResponse",
    "DatabaseCatalog",
    "LlmGateway",
    "SoftSchema",
    "SubQuestionChain",
    "TranscriptStore",
    "build_soft_schema",
    "decompose",
    "execution_match",
    "link_entities",
    "load_catalog",
    "longest_common_substring",
    "retrieve_matched_values",
    "run_chain",
    "score_run",
    "serialize_schema",
    "summarize_tables",
]
