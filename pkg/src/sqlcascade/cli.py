"""Command-line entry points: run the pipeline, score predictions, inspect traces.

Flag values win over environment variables (``SQLCASCADE_*``), which win
over the optional config file. The API key comes from the environment only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evaluation
from .config import (
    EvalConfig,
    GatewayConfig,
    GenerationConfig,
    IngestionConfig,
    RetrievalConfig,
    RunConfig,
    api_key_from_env,
    env_value,
    load_config_file,
)
from .errors import ConfigError, MalformedTrace, SqlCascadeError
from .gateway import HttpBackend, LlmGateway, TranscriptStore
from .pipeline import run_pipeline
from .trace import load_trace, render_trace

logger = logging.getLogger(__name__)

BIRD_SEPARATOR = "\t----- bird -----\t"


def _resolve(flag_value, key: str, file_cfg: dict, default, cast=str):
    if flag_value is not None:
        return flag_value
    env = env_value(key)
    if env is not None:
        return cast(env)
    if key in file_cfg:
        return cast(file_cfg[key])
    return default


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bundles", type=Path, help="root directory of database bundles")
    parser.add_argument("--questions", type=Path, help="benchmark question file (JSON array)")
    parser.add_argument("--output", type=Path, help="prediction file to write")
    parser.add_argument("--traces-dir", type=Path, help="directory for per-question trace files")
    parser.add_argument("--mode", choices=("live", "record", "replay"), help="gateway mode")
    parser.add_argument("--transcripts", type=Path, help="transcript file (record/replay)")
    parser.add_argument("--model", help="model id for the chat backend")
    parser.add_argument("--base-url", help="chat-completions base URL")
    parser.add_argument("--temperature", type=float, help="sampling temperature (default 0)")
    parser.add_argument("--max-tokens", type=int, help="completion token budget")
    parser.add_argument("--max-rounds", type=int, help="max refinement corrections per step")
    parser.add_argument("--exec-timeout", type=float, help="per-query execution timeout (s)")
    parser.add_argument("--min-match-len", type=int, help="value retrieval: min substring length")
    parser.add_argument("--min-match-ratio", type=float, help="value retrieval: min match/value ratio")
    parser.add_argument("--max-matches", type=int, help="value retrieval: result cap")
    parser.add_argument("--workers", type=int, help="concurrent question workers")
    parser.add_argument("--question-ids", help="comma-separated question ids to run")
    parser.add_argument("--overwrite", action="store_true", help="redo questions already in the output file")
    parser.add_argument("--bird-format", action="store_true", help="append the BIRD submission separator and db_id")


def _build_run_config(args: argparse.Namespace, forced_mode: str | None = None) -> RunConfig:
    file_cfg = load_config_file(args.config) if args.config else {}

    def need(value, name):
        if value is None:
            raise ConfigError(f"missing required option --{name}")
        return value

    bundles = need(_resolve(args.bundles, "bundles", file_cfg, None, Path), "bundles")
    questions = need(_resolve(args.questions, "questions", file_cfg, None, Path), "questions")
    output = need(_resolve(args.output, "output", file_cfg, None, Path), "output")
    mode = forced_mode or _resolve(args.mode, "mode", file_cfg, "replay")
    transcripts = _resolve(args.transcripts, "transcripts", file_cfg, None, Path)
    traces_dir = _resolve(args.traces_dir, "traces_dir", file_cfg, output.parent / "traces", Path)

    question_ids = None
    if args.question_ids is not None:
        text = args.question_ids.strip()
        question_ids = [int(part) for part in text.split(",") if part.strip()] if text else []

    gateway_cfg = GatewayConfig(
        mode=mode,
        model_id=_resolve(args.model, "model", file_cfg, "gpt-4"),
        base_url=_resolve(args.base_url, "base_url", file_cfg, "https://api.openai.com/v1"),
        api_key=api_key_from_env(),
        temperature=_resolve(args.temperature, "temperature", file_cfg, 0.0, float),
        max_tokens=_resolve(args.max_tokens, "max_tokens", file_cfg, 1200, int),
        transcript_path=transcripts,
    )
    config = RunConfig(
        bundles_root=bundles,
        questions_file=questions,
        output_file=output,
        traces_dir=traces_dir,
        gateway=gateway_cfg,
        ingestion=IngestionConfig(),
        retrieval=RetrievalConfig(
            min_match_len=_resolve(args.min_match_len, "min_match_len", file_cfg, 6, int),
            min_match_ratio=_resolve(args.min_match_ratio, "min_match_ratio", file_cfg, 0.5, float),
            max_matches=_resolve(args.max_matches, "max_matches", file_cfg, 20, int),
        ),
        generation=GenerationConfig(
            max_rounds=_resolve(args.max_rounds, "max_rounds", file_cfg, 3, int),
            exec_timeout=_resolve(args.exec_timeout, "exec_timeout", file_cfg, 60.0, float),
        ),
        workers=_resolve(args.workers, "workers", file_cfg, 1, int),
        question_ids=question_ids,
        overwrite=args.overwrite,
        bird_format=args.bird_format,
    )
    config.validate()
    return config


def build_gateway(config: GatewayConfig) -> LlmGateway:
    """Wire a gateway per config. Replay mode constructs no HTTP machinery."""
    if config.mode == "replay":
        if not Path(config.transcript_path).is_file():
            raise ConfigError(f"transcript file not found: {config.transcript_path}")
        store = TranscriptStore.load(config.transcript_path)
        backend = None
    else:
        if not config.api_key:
            raise ConfigError("live/record modes need an API key (set SQLCASCADE_API_KEY)")
        backend = HttpBackend(
            base_url=config.base_url,
            api_key=config.api_key,
            max_attempts=config.max_attempts,
            backoff_base=config.backoff_base,
            timeout=config.http_timeout,
        )
        store = None
        if config.mode == "record":
            transcript = Path(config.transcript_path)
            transcript.parent.mkdir(parents=True, exist_ok=True)
            store = (
                TranscriptStore.load(transcript) if transcript.is_file() else TranscriptStore(transcript)
            )
    return LlmGateway(
        mode=config.mode,
        backend=backend,
        store=store,
        model_id=config.model_id,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
    )


def _write_predictions(config: RunConfig, items, predictions: dict[str, str]) -> None:
    payload = dict(predictions)
    if config.bird_format:
        db_by_id = {str(item.question_id): item.db_id for item in items}
        payload = {
            qid: f"{sql}{BIRD_SEPARATOR}{db_by_id.get(qid, '')}" for qid, sql in payload.items()
        }
    config.output_file.parent.mkdir(parents=True, exist_ok=True)
    config.output_file.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def cmd_run(config: RunConfig, gateway: LlmGateway | None = None) -> int:
    """Run the agent cascade over a question file; write predictions + traces."""
    items = evaluation.load_benchmark_items(config.questions_file)
    gateway = gateway or build_gateway(config.gateway)
    existing: dict[str, str] | None = None
    if config.output_file.is_file() and not config.overwrite:
        existing = json.loads(config.output_file.read_text(encoding="utf-8"))

    summary = run_pipeline(items, config, gateway, existing_predictions=existing)
    _write_predictions(config, items, summary.predictions)

    report = {
        "questions": len(items),
        "answered": summary.answered,
        "skipped_existing": summary.skipped,
        "failures": summary.failures,
        "warning_count": summary.warning_count,
        "llm_calls": gateway.call_count,
        "prompt_tokens": gateway.total_prompt_tokens,
        "completion_tokens": gateway.total_completion_tokens,
    }
    report_path = Path(str(config.output_file) + ".report.json")
    report_path.write_text(json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    print(
        f"answered {summary.answered}/{len(items)} questions "
        f"({len(summary.failures)} failed, {summary.warning_count} warnings) -> {config.output_file}"
    )
    for failure in summary.failures:
        print(f"  failed q{failure['question_id']}: {failure['error']}")
    return 0


def cmd_eval(
    questions: Path, predictions_file: Path, bundles: Path, out_prefix: Path, config: EvalConfig
) -> int:
    """Score a prediction file; write JSON and text reports."""
    items = evaluation.load_benchmark_items(questions)
    raw = json.loads(predictions_file.read_text(encoding="utf-8"))
    predictions = {
        str(qid): sql.split(BIRD_SEPARATOR, 1)[0] for qid, sql in raw.items()
    }
    report = evaluation.score_run(items, predictions, bundles, config)
    text = evaluation.render_report_text(report, label=predictions_file.name)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(str(out_prefix) + ".json").write_text(
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    Path(str(out_prefix) + ".txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_inspect_trace(trace_file: Path) -> int:
    """Render a per-question trace file for humans."""
    data = load_trace(trace_file)
    print(render_trace(data))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlcascade",
        description="Multi-agent text-to-SQL pipeline over SQLite benchmark bundles.",
    )
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="answer a question file with the agent cascade")
    _add_run_flags(run_parser)

    record_parser = sub.add_parser(
        "record-fixtures", help="run in record mode, persisting transcripts for later replay"
    )
    _add_run_flags(record_parser)

    eval_parser = sub.add_parser("eval", help="score a prediction file (execution accuracy)")
    eval_parser.add_argument("--bundles", type=Path, required=True)
    eval_parser.add_argument("--questions", type=Path, required=True)
    eval_parser.add_argument("--predictions", type=Path, required=True)
    eval_parser.add_argument("--out", type=Path, required=True, help="report path prefix")
    eval_parser.add_argument("--timeout", type=float, default=120.0)
    eval_parser.add_argument("--tolerance", type=float, default=1e-6)
    eval_parser.add_argument("--semantics", choices=("bag", "set"), default="bag")
    eval_parser.add_argument("--workers", type=int, default=1)

    inspect_parser = sub.add_parser("inspect-trace", help="render a question trace file")
    inspect_parser.add_argument("trace_file", type=Path)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return cmd_run(_build_run_config(args))
        if args.command == "record-fixtures":
            return cmd_run(_build_run_config(args, forced_mode="record"))
        if args.command == "eval":
            config = EvalConfig(
                timeout=args.timeout,
                float_tolerance=args.tolerance,
                row_semantics=args.semantics,
                workers=args.workers,
            )
            return cmd_eval(args.questions, args.predictions, args.bundles, args.out, config)
        if args.command == "inspect-trace":
            return cmd_inspect_trace(args.trace_file)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, MalformedTrace) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: unreadable input: {exc}", file=sys.stderr)
        return 2
    except SqlCascadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
