"""Command-line entry point: ``groundcheck {ingest,synth,rationalize,eval,report}``.

Exit status: 0 success, 1 partial (some jobs, manifests or verdicts failed),
2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .ingest import IngestError, assemble_bench, load_manifests
from .judge import judge_many, read_verdicts, write_verdicts
from .llm import PermanentBackendError
from .metrics import ReportError, build_report, render_table
from .prompts import PromptKind, SynthesisKind, template_version
from .rationale import rationalize_dataset
from .schema import InvalidExampleError, RecordFormatError, read_records, write_records
from .synthesis import plan_jobs, read_jobs, run_jobs, write_failures, write_jobs

logger = logging.getLogger("groundcheck")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _template_versions(prefixes: Sequence[str]) -> dict[str, str]:
    names = []
    for p in prefixes:
        names += [f"{p}_{t}" for t in ("nli", "qa", "dialogue", "summarization")] if p in ("classifier", "generative") else [p]
    return {n: template_version(n) for n in names}


def _write_run_manifest(path: Path, args: argparse.Namespace, cfg: RunConfig, started: str,
                        outputs: dict[str, Any], templates: dict[str, str], status: int) -> None:
    doc = {
        "tool": "groundcheck",
        "version": __version__,
        "command": args.command,
        "argv": sys.argv[1:] if args.argv is None else list(args.argv),
        "config": cfg.snapshot(),
        "template_versions": templates,
        "outputs": outputs,
        "exit_status": status,
        "started": started,
        "finished": _now(),
    }
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _sidecar(out: str, suffix: str) -> Path:
    return Path(out).with_name(Path(out).name + suffix)


def cmd_ingest(args: argparse.Namespace, cfg: RunConfig) -> int:
    manifests = list(cfg.manifests)
    if args.manifest:
        if not os.path.exists(args.manifest):
            raise ConfigError(f"manifest file not found: {args.manifest}")
        try:
            manifests += load_manifests(args.manifest, cfg.seed)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{args.manifest}: {exc}") from exc
    if not manifests:
        raise ConfigError("no manifests given (use --manifest or the config 'manifests' key)")
    examples, report = assemble_bench(manifests, strict=False, workers=args.jobs)
    status = EXIT_PARTIAL if report.failed else EXIT_OK
    for entry in report.failed:
        logger.error("manifest %s failed: %s", entry.name, entry.error)
    if args.dry_run:
        print(report.to_json())
        return status
    if not args.out:
        raise ConfigError("--out is required unless --dry-run is given")
    write_records(args.out, examples)
    _sidecar(args.out, ".report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    logger.info("wrote %d examples to %s", len(examples), args.out)
    return status


def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    client = cfg.client(args.backend, args.cache_dir, args.jobs)
    examples = read_records(args.inp)
    if args.job_file:
        jobs = read_jobs(args.job_file, examples)
    else:
        jobs = plan_jobs(
            examples,
            args.kind,
            error_types=args.error_types.split(",") if args.error_types else None,
            target_language=args.target,
            variants=args.variants,
            backend=args.backend,
        )
    if args.dry_run:
        for j in jobs:
            print(json.dumps(j.to_record(), ensure_ascii=False))
        return EXIT_OK
    if args.plan_out:
        write_jobs(args.plan_out, jobs)
    outputs, failures = run_jobs(jobs, client, workers=args.jobs)
    write_records(args.out, outputs)
    write_failures(_sidecar(args.out, ".failed.jsonl"), failures)
    logger.info("%d generated, %d failed", len(outputs), len(failures))
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_rationalize(args: argparse.Namespace, cfg: RunConfig) -> int:
    client = cfg.client(args.backend, args.cache_dir, args.jobs)
    if client.profile.temperature == 0:
        logger.warning("backend %s samples at temperature 0; k samples may be identical", args.backend)
    examples = read_records(args.inp)
    k = args.k or cfg.rationale_k
    if args.dry_run:
        print(json.dumps({"examples": len(examples), "k": k, "calls_at_least": len(examples) * k}))
        return EXIT_OK
    result = rationalize_dataset(examples, client, k=k, min_agreement=args.min_agreement, jobs=args.jobs)
    write_records(args.out, result.retained)
    with open(_sidecar(args.out, ".discards.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
        for entry in result.report:
            fh.write(entry.to_json() + "\n")
    logger.info(
        "%d retained, %d discarded, %d failed", len(result.retained), len(result.discarded), len(result.failed)
    )
    return EXIT_PARTIAL if result.failed else EXIT_OK


def _emit_report(out_dir: Path, verdicts, examples, meta: dict[str, Any]) -> None:
    report = build_report(verdicts, examples, metadata=meta)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    table = render_table(report)
    (out_dir / "report.txt").write_text(table, encoding="utf-8")
    print(table, end="")


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    client = cfg.client(args.judge, args.cache_dir, args.jobs)
    examples = read_records(args.inp)
    out_dir = Path(args.out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    verdict_path = out_dir / "verdicts.jsonl"
    previous = {}
    if args.resume and verdict_path.exists():
        previous = {v.id: v for v in read_verdicts(verdict_path)}
        logger.info("resuming with %d prior verdicts", len(previous))
    if args.dry_run:
        todo = [e.id for e in examples if e.id not in previous or previous[e.id].failed]
        print(json.dumps({"examples": len(examples), "to_judge": len(todo)}))
        return EXIT_OK
    records = judge_many(examples, client, args.template, cfg.chunking, jobs=args.jobs, previous=previous)
    write_verdicts(verdict_path, records)
    meta = {
        "model": client.profile.model_id,
        "backend": args.judge,
        "template_kind": PromptKind(args.template).value,
        "template_versions": _template_versions([PromptKind(args.template).value]),
        "chunking": cfg.chunking.__dict__,
    }
    try:
        _emit_report(out_dir, records, examples, meta)
    except ReportError as exc:
        logger.error("report not written: %s", exc)
        return EXIT_PARTIAL
    failed = sum(r.failed for r in records)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(args: argparse.Namespace, cfg: RunConfig) -> int:
    examples = read_records(args.inp)
    verdicts = read_verdicts(args.verdicts)
    out_dir = Path(args.out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    models = sorted({v.model for v in verdicts})
    meta = {"model": args.model or (models[0] if len(models) == 1 else ",".join(models)), "chunking": cfg.chunking.__dict__}
    _emit_report(out_dir, verdicts, examples, meta)
    return EXIT_OK


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="run config (YAML)")
    parser.add_argument("--jobs", type=int, default=d(1), help="worker cap for concurrent calls")
    parser.add_argument("--seed", type=int, default=d(None), help="override the config seed")
    parser.add_argument("--cache-dir", default=d(None), help="response cache directory")
    parser.add_argument("--dry-run", action="store_true", default=d(False), help="report what would run, write nothing")
    parser.add_argument("--resume", action="store_true", default=d(False), help="reuse verdicts from a previous run")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundcheck",
        description="Build hallucination-detection data and evaluate grounded-verification judges.",
    )
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="assemble unified records from manifests")
    p.add_argument("--manifest", help="manifest file (YAML)")
    p.add_argument("--out", help="output record file")

    p = sub.add_parser("synth", parents=[common], help="generate hallucinated, dialogue or translated variants")
    p.add_argument("--kind", required=True, choices=[k.value for k in SynthesisKind])
    p.add_argument("--backend", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--error-types", help="comma-separated error types to cycle through (default: all six)")
    p.add_argument("--target", choices=["en", "es"], help="target language for --kind translate")
    p.add_argument("--variants", type=int, default=1, help="hallucinated variants per source example")
    p.add_argument("--job-file", help="run the jobs listed in this file instead of planning them")
    p.add_argument("--plan-out", help="also write the planned job file here")

    p = sub.add_parser("rationalize", parents=[common], help="sample rationales and drop inconsistent examples")
    p.add_argument("--backend", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None, help="samples per example (default: config rationale_k)")
    p.add_argument("--min-agreement", type=float, default=0.0, help="fraction of samples that must match gold")

    p = sub.add_parser("eval", parents=[common], help="judge a record file and score it")
    p.add_argument("--judge", required=True)
    p.add_argument("--template", choices=[k.value for k in PromptKind], default=PromptKind.GENERATIVE_CHAT.value)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out-dir")

    p = sub.add_parser("report", parents=[common], help="score an existing verdict file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--verdicts", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--model", help="row name in the rendered table")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "rationalize": cmd_rationalize,
    "eval": cmd_eval,
    "report": cmd_report,
}


def _run_manifest_path(args: argparse.Namespace, cfg: RunConfig) -> Path | None:
    if args.dry_run:
        return None
    if args.command in ("eval", "report"):
        return Path(args.out_dir or cfg.output_dir) / "run_manifest.json"
    out = getattr(args, "out", None)
    return _sidecar(out, ".run.json") if out else None


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    started = _now()
    try:
        cfg = load_config(args.config, seed=args.seed)
        if args.command == "rationalize" and args.k is not None and args.k < 1:
            raise ConfigError("--k must be positive")
        for name in ("backend", "judge"):
            if getattr(args, name, None):
                cfg.backend(getattr(args, name))
        status = _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"groundcheck: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RecordFormatError, InvalidExampleError, IngestError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"groundcheck: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PermanentBackendError as exc:
        print(f"groundcheck: backend rejected the request: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    path = _run_manifest_path(args, cfg)
    if path is not None:
        templates = {
            "eval": lambda: _template_versions([getattr(args, "template", "generative")]),
            "report": lambda: {},
            "ingest": lambda: {},
            "rationalize": lambda: _template_versions(["generative"]),
            "synth": lambda: _template_versions([_SYNTH_TEMPLATES[args.kind]]),
        }[args.command]()
        outputs = {"out": getattr(args, "out", None), "out_dir": getattr(args, "out_dir", None)}
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_run_manifest(path, args, cfg, started, outputs, templates, status)
    return status


_SYNTH_TEMPLATES = {
    SynthesisKind.HALLUCINATE_ANSWER.value: "synth_hallucinate",
    SynthesisKind.QA_TO_DIALOGUE.value: "synth_dialogue",
    SynthesisKind.UNFAITHFUL_SUMMARY.value: "synth_unfaithful_summary",
    SynthesisKind.TRANSLATE.value: "synth_translate",
}


if __name__ == "__main__":
    sys.exit(main())
