"""Command-line entry point.

Verbs mirror the pipeline stages: ``ingest-check`` parses and validates,
``align`` writes per-recording alignment audits, ``features`` and
``reliability`` emit their respective tables, ``batch`` runs everything,
and ``report`` re-renders tables from a saved results file.

Exit codes: 0 success, 1 usage error, 2 completed with per-recording
failures (an errors report is written), 3 fatal. Logging verbosity comes
from the WSW_LOG environment variable (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import batch as batch_mod
from .align import align
from .batch import (
    FEATURE_COLUMNS,
    ICC_COLUMNS,
    RELIABILITY_COLUMNS,
    CorpusManifest,
    PipelineResult,
    RunConfig,
    discover,
    emit_report,
    icc_table,
    reliability_table,
    run_pipeline,
)
from .align import write_alignment_jsonl
from .errors import TalkmetricsError
from .ingest import load_meta, parse_expert, parse_machine, validate

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_FATAL = 3

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for partial
    failures, so remap to 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text}")
    return value


def _add_corpus_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--root", type=Path, help="directory tree of recording triples")
    parser.add_argument("--manifest", type=Path, help="explicit manifest JSON")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file of analysis parameters")
    parser.add_argument(
        "--response-window",
        type=_positive_float,
        help="seconds after an utterance ends in which a reply counts (default 2.5)",
    )
    parser.add_argument(
        "--ld-window",
        type=_positive_float,
        help="lexical diversity window length in seconds (default 60)",
    )
    parser.add_argument("--workers", type=_positive_int, help="parallel worker count")


def _add_out_flags(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--out", type=Path, required=required, help="output directory")
    parser.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="report format (default csv)"
    )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="talkmetrics",
        description="Alignment, language features and reliability statistics for"
        " classroom speech transcripts.",
    )
    sub = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    p = sub.add_parser(
        "ingest-check", parents=[], help="parse every recording and report findings"
    )
    _add_corpus_flags(p)
    p.add_argument("--out", type=Path, help="write a JSON report here")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("align", help="write per-recording alignment audit files")
    _add_corpus_flags(p)
    p.add_argument("--config", type=Path, help="JSON file of analysis parameters")
    _add_out_flags(p)

    p = sub.add_parser("features", help="compute the language-feature table")
    _add_corpus_flags(p)
    _add_run_flags(p)
    _add_out_flags(p)

    p = sub.add_parser("reliability", help="compute agreement statistics")
    _add_corpus_flags(p)
    _add_run_flags(p)
    _add_out_flags(p)

    p = sub.add_parser("batch", help="run the whole pipeline and emit all reports")
    _add_corpus_flags(p)
    _add_run_flags(p)
    _add_out_flags(p)

    p = sub.add_parser("report", help="re-render reports from a saved results file")
    p.add_argument("results", type=Path, help="results.json from a previous run")
    _add_out_flags(p)
    return parser


def _configure_logging() -> None:
    raw = os.environ.get("WSW_LOG", "warn").strip().lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        level = logging.WARNING
        print(
            f"talkmetrics: unknown WSW_LOG value {raw!r}, using warn", file=sys.stderr
        )
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _load_manifest(args: argparse.Namespace, parser: _Parser) -> CorpusManifest:
    if (args.root is None) == (args.manifest is None):
        parser.error("exactly one of --root or --manifest is required")
    return discover(root_dir=args.root, manifest_path=args.manifest)


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if getattr(args, "config", None) is not None:
        with open(args.config, encoding="utf-8") as handle:
            data = json.load(handle)
        if not isinstance(data, dict):
            raise TalkmetricsError(f"{args.config}: config must be a JSON object")
    return RunConfig.from_mapping(
        data,
        response_window=getattr(args, "response_window", None),
        ld_window=getattr(args, "ld_window", None),
        parallelism=getattr(args, "workers", None),
        output_dir=getattr(args, "out", None),
    )


def _cmd_ingest_check(args: argparse.Namespace, parser: _Parser) -> int:
    manifest = _load_manifest(args, parser)
    records = []
    n_failed = 0
    for entry in manifest.entries:
        record: dict = {"recording_id": entry.recording_id}
        try:
            meta = load_meta(entry.meta_path)
            machine = parse_machine(entry.machine_path, meta)
            findings = [
                {"source": "machine", "code": w.code, "utterance_id": w.utterance_id,
                 "message": w.message}
                for w in validate(machine)
            ]
            n_expert = None
            if entry.expert_path is not None:
                expert = parse_expert(entry.expert_path, meta)
                findings.extend(
                    {"source": "expert", "code": w.code, "utterance_id": w.utterance_id,
                     "message": w.message}
                    for w in validate(expert)
                )
                n_expert = len(expert)
            record.update(
                ok=True,
                n_machine_utterances=len(machine),
                n_expert_utterances=n_expert,
                findings=findings,
            )
            if args.format != "json":
                expert_note = f", {n_expert} expert" if n_expert is not None else ""
                print(
                    f"{entry.recording_id}: ok ({len(machine)} machine"
                    f"{expert_note}, {len(findings)} findings)"
                )
        except TalkmetricsError as exc:
            n_failed += 1
            record.update(ok=False, error=str(exc))
            if args.format != "json":
                print(f"{entry.recording_id}: FAIL {exc}")
        records.append(record)
    report = {"recordings": records, "n_checked": len(records), "n_failed": n_failed}
    if args.format == "json":
        print(json.dumps(report, indent=2))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "ingest_report.json", "w", encoding="utf-8") as handle:
            json.dump(report, handle, indent=2)
            handle.write("\n")
    return EXIT_PARTIAL if n_failed else EXIT_OK


def _cmd_align(args: argparse.Namespace, parser: _Parser) -> int:
    manifest = _load_manifest(args, parser)
    cfg = _load_run_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    n_failed = 0
    n_aligned = 0
    for entry in manifest.entries:
        if entry.expert_path is None:
            log.info("%s: no expert transcript, skipping", entry.recording_id)
            continue
        try:
            meta = load_meta(entry.meta_path)
            machine = parse_machine(entry.machine_path, meta)
            expert = parse_expert(entry.expert_path, meta)
            corpus = align(machine, expert, cfg.align)
        except TalkmetricsError as exc:
            n_failed += 1
            print(f"{entry.recording_id}: FAIL {exc}", file=sys.stderr)
            continue
        write_alignment_jsonl(corpus, args.out / f"{entry.recording_id}.alignment.jsonl")
        n_aligned += 1
        print(
            f"{entry.recording_id}: {len(corpus.pairs)} pairs,"
            f" {len(corpus.machine_only)} machine-only,"
            f" {len(corpus.expert_only)} expert-only"
        )
    if n_aligned == 0 and n_failed == 0:
        print("talkmetrics: no recording has an expert transcript", file=sys.stderr)
        return EXIT_FATAL
    return EXIT_PARTIAL if n_failed else EXIT_OK


def _write_errors(result: PipelineResult, out: Path) -> None:
    if not result.errors:
        return
    with open(out / "errors.json", "w", encoding="utf-8") as handle:
        json.dump([e.to_dict() for e in result.errors], handle, indent=2)
        handle.write("\n")


def _cmd_features(args: argparse.Namespace, parser: _Parser) -> int:
    manifest = _load_manifest(args, parser)
    cfg = _load_run_config(args)
    result = run_pipeline(manifest, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        with open(args.out / "features.json", "w", encoding="utf-8") as handle:
            json.dump({"features": [s.to_dict() for s in result.features]}, handle, indent=2)
            handle.write("\n")
    else:
        batch_mod._write_csv(
            args.out / "features.csv",
            FEATURE_COLUMNS,
            [[s.to_dict()[col] for col in FEATURE_COLUMNS] for s in result.features],
        )
    _write_errors(result, args.out)
    print(f"wrote features for {result.corpus['n_recordings']} recordings to {args.out}")
    return EXIT_PARTIAL if result.errors else EXIT_OK


def _cmd_reliability(args: argparse.Namespace, parser: _Parser) -> int:
    manifest = _load_manifest(args, parser)
    cfg = _load_run_config(args)
    result = run_pipeline(manifest, cfg)
    if result.reliability is None:
        print("talkmetrics: no recording has an expert transcript", file=sys.stderr)
        return EXIT_FATAL
    args.out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        with open(args.out / "reliability.json", "w", encoding="utf-8") as handle:
            json.dump({"reliability": result.reliability.to_dict()}, handle, indent=2)
            handle.write("\n")
    else:
        batch_mod._write_csv(
            args.out / "reliability_per_recording.csv",
            RELIABILITY_COLUMNS,
            reliability_table(result.reliability),
        )
        batch_mod._write_csv(args.out / "icc.csv", ICC_COLUMNS, icc_table(result.reliability))
    _write_errors(result, args.out)
    print(
        f"wrote reliability for {len(result.reliability.rows)} recordings to {args.out}"
    )
    return EXIT_PARTIAL if result.errors else EXIT_OK


def _cmd_batch(args: argparse.Namespace, parser: _Parser) -> int:
    manifest = _load_manifest(args, parser)
    cfg = _load_run_config(args)
    result = run_pipeline(manifest, cfg)
    emit_report(result, args.out, args.format)
    n_failed = result.corpus["n_failed"]
    print(
        f"processed {result.corpus['n_recordings']} recordings"
        f" ({n_failed} failed), reports in {args.out}"
    )
    return EXIT_PARTIAL if result.errors else EXIT_OK


def _cmd_report(args: argparse.Namespace, parser: _Parser) -> int:
    try:
        with open(args.results, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise TalkmetricsError(f"cannot read {args.results}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise TalkmetricsError(f"{args.results}: invalid JSON: {exc.msg}") from None
    try:
        result = PipelineResult.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise TalkmetricsError(f"{args.results}: not a results file: {exc}") from None
    written = emit_report(result, args.out, args.format)
    print(f"wrote {len(written)} files to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "ingest-check": _cmd_ingest_check,
    "align": _cmd_align,
    "features": _cmd_features,
    "reliability": _cmd_reliability,
    "batch": _cmd_batch,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.verb](args, parser)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE
    except (TalkmetricsError, OSError) as exc:
        log.debug("fatal error", exc_info=True)
        print(f"talkmetrics: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
