"""Configuration dataclasses and config-file/environment helpers.

Precedence everywhere is: command-line flags > environment variables >
config file > built-in defaults. The API key is read from the environment
only (``SQLCASCADE_API_KEY``, falling back to ``OPENAI_API_KEY``).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "SQLCASCADE_"
API_KEY_ENV = "SQLCASCADE_API_KEY"
API_KEY_FALLBACK_ENV = "OPENAI_API_KEY"

GATEWAY_MODES = ("live", "record", "replay")


@dataclass
class IngestionConfig:
    """Knobs for loading a database bundle into a catalog."""

    value_example_count: int = 3
    # Stop scanning a column for distinct values after this many rows.
    value_scan_limit: int = 50_000
    # Rendered value examples longer than this are cut (prompt hygiene).
    value_render_cap: int = 64


@dataclass
class RetrievalConfig:
    """Thresholds for substring-based value retrieval over TEXT columns."""

    min_match_len: int = 6
    min_match_ratio: float = 0.5
    max_matches: int = 20
    # Per-column cap on distinct stored values scanned.
    distinct_value_cap: int = 2000


@dataclass
class GenerationConfig:
    """Bounds for the generate/execute/refine cascade."""

    max_rounds: int = 3
    exec_timeout: float = 60.0
    row_cap: int = 500
    max_chain_len: int = 6


@dataclass
class GatewayConfig:
    """How agent calls reach a model: live HTTP, record, or replay."""

    mode: str = "replay"
    model_id: str = "gpt-4"
    base_url: str = "https://api.openai.com/v1"
    api_key: str | None = None
    temperature: float = 0.0
    max_tokens: int = 1200
    transcript_path: Path | None = None
    max_attempts: int = 3
    backoff_base: float = 0.5
    http_timeout: float = 120.0

    def validate(self) -> None:
        if self.mode not in GATEWAY_MODES:
            raise ConfigError(f"unknown gateway mode {self.mode!r}; expected one of {GATEWAY_MODES}")
        if self.mode in ("replay", "record") and self.transcript_path is None:
            raise ConfigError(f"gateway mode {self.mode!r} requires a transcript path")


@dataclass
class EvalConfig:
    """Execution-accuracy scoring parameters."""

    timeout: float = 120.0
    float_tolerance: float = 1e-6
    # "bag": unordered multiset of rows; "set": duplicates collapse.
    row_semantics: str = "bag"
    row_cap: int = 1_000_000
    workers: int = 1


@dataclass
class RunConfig:
    """Everything cmd_run needs to process a question file."""

    bundles_root: Path
    questions_file: Path
    output_file: Path
    traces_dir: Path | None = None
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    ingestion: IngestionConfig = field(default_factory=IngestionConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    workers: int = 1
    question_ids: list[int] | None = None
    overwrite: bool = False
    bird_format: bool = False

    def validate(self) -> None:
        if self.workers < 1:
            raise ConfigError("worker count must be >= 1")
        self.gateway.validate()


def load_config_file(path: Path) -> dict[str, str]:
    """Read a key=value config file (INI; a bare section-less file also works)."""
    text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError:
        parser.read_string("[sqlcascade]\n" + text)
    merged: dict[str, str] = {}
    for section in parser.sections():
        merged.update(parser.items(section))
    return merged


def env_value(key: str) -> str | None:
    return os.environ.get(ENV_PREFIX + key.upper())


def api_key_from_env() -> str | None:
    return os.environ.get(API_KEY_ENV) or os.environ.get(API_KEY_FALLBACK_ENV)
