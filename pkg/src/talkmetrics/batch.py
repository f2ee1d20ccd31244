"""Corpus-scale orchestration: discover recordings, fan out per-recording
work, merge deterministically, and emit reports.

A corpus is a set of recordings, each a file triple: ``<id>.machine.jsonl``
(required), ``<id>.meta.json`` (required) and ``<id>.expert.tsv``
(optional; without it a recording gets language features only, no
agreement statistics). An explicit manifest JSON can stand in for
directory-convention discovery.

Recordings are processed independently, possibly in parallel, and merged
in manifest order, so outputs are byte-identical regardless of worker
count. One bad file is recorded in the errors report and the run
continues; year-scale corpora must not abort on a single damaged
recording.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path
from typing import Mapping, Sequence

from .align import AlignConfig, align
from .errors import TalkmetricsError
from .features import (
    DEFAULT_LD_WINDOW,
    DEFAULT_RESPONSE_WINDOW,
    FEATURE_COLUMNS,
    ICC_FEATURES,
    FeatureSummary,
    detect_responses,
    icc_feature_values,
    response_proportion,
    summarize,
)
from .ingest import load_meta, parse_expert, parse_machine, validate
from .reliability import (
    RecordingReliability,
    ReliabilityReport,
    build_report,
    recording_reliability,
)
from .transcript import SpeakerRole, Transcript, iter_roles

log = logging.getLogger(__name__)

MACHINE_SUFFIX = ".machine.jsonl"
EXPERT_SUFFIX = ".expert.tsv"
META_SUFFIX = ".meta.json"


class MissingFile(TalkmetricsError):
    """A manifest entry points at a file that does not exist."""


class EmptyCorpus(TalkmetricsError):
    """Discovery found no recordings."""


class ManifestError(TalkmetricsError):
    """The manifest is malformed (bad JSON, duplicate ids, missing keys)."""


class IoError(TalkmetricsError):
    """Report emission failed at the filesystem."""


@dataclass(frozen=True)
class ManifestEntry:
    """One recording's file triple."""

    recording_id: str
    machine_path: Path
    meta_path: Path
    expert_path: Path | None = None


@dataclass(frozen=True)
class CorpusManifest:
    """The recordings of one run, sorted by recording id."""

    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        ids = [entry.recording_id for entry in self.entries]
        if len(set(ids)) != len(ids):
            seen = set()
            duplicate = next(i for i in ids if i in seen or seen.add(i))
            raise ManifestError(f"duplicate recording_id {duplicate!r}")
        ordered = tuple(sorted(self.entries, key=lambda entry: entry.recording_id))
        object.__setattr__(self, "entries", ordered)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs beyond the manifest.

    ``output_dir`` and ``parallelism`` steer execution only; they never
    reach the result payload, keeping outputs identical across machines
    and worker counts.
    """

    align: AlignConfig = field(default_factory=AlignConfig)
    response_window: float = DEFAULT_RESPONSE_WINDOW
    ld_window: float = DEFAULT_LD_WINDOW
    output_dir: Path | None = None
    parallelism: int = 1
    wer_wearer_match: bool = True

    def __post_init__(self) -> None:
        if self.response_window <= 0:
            raise ValueError(f"response_window must be positive: {self.response_window}")
        if self.ld_window <= 0:
            raise ValueError(f"ld_window must be positive: {self.ld_window}")
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be at least 1: {self.parallelism}")

    def semantic_dict(self) -> dict:
        """The analysis parameters, without execution plumbing."""
        return {
            "align": {
                "similarity_weight": self.align.similarity_weight,
                "gap_penalty": self.align.gap_penalty,
                "min_iou": self.align.min_iou,
                "min_text_similarity": self.align.min_text_similarity,
            },
            "response_window": self.response_window,
            "ld_window": self.ld_window,
            "wer_wearer_match": self.wer_wearer_match,
        }

    @classmethod
    def from_mapping(cls, data: Mapping, **overrides) -> "RunConfig":
        """Build from a config-file mapping; keyword overrides win."""
        align_data = dict(data.get("align", {}))
        kwargs: dict = {
            "align": AlignConfig(**align_data),
            "response_window": data.get("response_window", DEFAULT_RESPONSE_WINDOW),
            "ld_window": data.get("ld_window", DEFAULT_LD_WINDOW),
            "wer_wearer_match": data.get("wer_wearer_match", True),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


def _entry_from_mapping(record: Mapping, base: Path) -> ManifestEntry:
    for key in ("recording_id", "machine_path", "meta_path"):
        if key not in record:
            raise ManifestError(f"manifest entry is missing {key!r}: {record!r}")

    def resolve(value: object) -> Path:
        path = Path(str(value))
        return path if path.is_absolute() else base / path

    expert = record.get("expert_path")
    return ManifestEntry(
        recording_id=str(record["recording_id"]),
        machine_path=resolve(record["machine_path"]),
        meta_path=resolve(record["meta_path"]),
        expert_path=resolve(expert) if expert else None,
    )


def _check_exists(entry: ManifestEntry) -> None:
    for path in (entry.machine_path, entry.meta_path, entry.expert_path):
        if path is not None and not path.is_file():
            raise MissingFile(f"{entry.recording_id}: no such file: {path}")


def discover(
    root_dir: Path | str | None = None, manifest_path: Path | str | None = None
) -> CorpusManifest:
    """Enumerate recordings, either from a manifest or by convention.

    Convention: every ``*.machine.jsonl`` under ``root_dir`` is a
    recording; the meta sidecar must sit next to it, the expert file may.
    Contents are not read here, only paths checked, so year-scale corpora
    enumerate instantly.
    """
    entries: list[ManifestEntry] = []
    if manifest_path is not None:
        manifest_path = Path(manifest_path)
        try:
            with open(manifest_path, encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as exc:
            raise MissingFile(f"cannot read manifest: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{manifest_path}: invalid JSON: {exc.msg}") from None
        records = data.get("entries") if isinstance(data, dict) else data
        if not isinstance(records, list):
            raise ManifestError(f"{manifest_path}: expected a list of entries")
        base = manifest_path.parent
        for record in records:
            if not isinstance(record, Mapping):
                raise ManifestError(f"{manifest_path}: entry is not an object: {record!r}")
            entries.append(_entry_from_mapping(record, base))
    elif root_dir is not None:
        root = Path(root_dir)
        if not root.is_dir():
            raise MissingFile(f"no such directory: {root}")
        for machine_path in sorted(root.rglob(f"*{MACHINE_SUFFIX}")):
            stem = machine_path.name[: -len(MACHINE_SUFFIX)]
            meta_path = machine_path.with_name(stem + META_SUFFIX)
            expert_path = machine_path.with_name(stem + EXPERT_SUFFIX)
            entries.append(
                ManifestEntry(
                    recording_id=stem,
                    machine_path=machine_path,
                    meta_path=meta_path,
                    expert_path=expert_path if expert_path.is_file() else None,
                )
            )
    else:
        raise ValueError("discover needs a root_dir or a manifest_path")
    for entry in entries:
        _check_exists(entry)
    if not entries:
        raise EmptyCorpus("no recordings found")
    return CorpusManifest(entries=tuple(entries))


@dataclass(frozen=True)
class EntryError:
    """One recording's failure: which stage broke and how."""

    recording_id: str
    stage: str
    message: str

    def to_dict(self) -> dict:
        return {"recording_id": self.recording_id, "stage": self.stage, "message": self.message}

    @classmethod
    def from_dict(cls, data: Mapping) -> "EntryError":
        return cls(
            recording_id=data["recording_id"], stage=data["stage"], message=data["message"]
        )


def _aggregate_units(transcript: Transcript, summaries: Sequence[FeatureSummary]) -> dict:
    """Raw per-recording tallies that pool exactly across the corpus."""
    units = {}
    for summary in summaries:
        units[summary.role.value] = {
            "n_utterances": summary.n_utterances,
            "n_questions": summary.n_questions,
            "n_non_questions": summary.n_non_questions,
            "n_responded_questions": summary.n_responded_questions,
            "n_responded_non_questions": summary.n_responded_non_questions,
            "n_responses_given": summary.n_responses_given,
            "total_words": transcript.word_count(summary.role),
            "pct_questions": summary.pct_questions,
            "lexical_diversity_per_minute": summary.lexical_diversity_per_minute,
            "duration_minutes": transcript.meta.duration_minutes,
        }
    return units


def _process_entry(entry: ManifestEntry, cfg: RunConfig) -> dict:
    """Run one recording end to end; return a JSON-ready payload.

    A failure before the machine transcript exists voids the whole entry;
    a failure on the expert side keeps the machine features and drops only
    the agreement statistics.
    """
    payload: dict = {"recording_id": entry.recording_id, "errors": []}
    try:
        meta = load_meta(entry.meta_path)
        machine = parse_machine(entry.machine_path, meta)
    except TalkmetricsError as exc:
        payload["errors"].append(
            {"recording_id": entry.recording_id, "stage": "ingest", "message": str(exc)}
        )
        return payload
    except OSError as exc:
        payload["errors"].append(
            {"recording_id": entry.recording_id, "stage": "ingest", "message": str(exc)}
        )
        return payload

    machine_links = detect_responses(machine, cfg.response_window)
    machine_summaries = [
        summarize(machine, role, machine_links, cfg.response_window, cfg.ld_window)
        for role in iter_roles()
    ]
    payload["duration_minutes"] = meta.duration_minutes
    payload["n_machine_utterances"] = len(machine)
    payload["features"] = [summary.to_dict() for summary in machine_summaries]
    payload["units"] = {"machine": _aggregate_units(machine, machine_summaries)}

    if entry.expert_path is None:
        return payload
    try:
        expert = parse_expert(entry.expert_path, meta)
        corpus = align(machine, expert, cfg.align)
        row = recording_reliability(corpus, cfg.wer_wearer_match)
        expert_links = detect_responses(expert, cfg.response_window)
        expert_summaries = [
            summarize(expert, role, expert_links, cfg.response_window, cfg.ld_window)
            for role in iter_roles()
        ]
    except TalkmetricsError as exc:
        payload["errors"].append(
            {"recording_id": entry.recording_id, "stage": "expert", "message": str(exc)}
        )
        return payload
    except OSError as exc:
        payload["errors"].append(
            {"recording_id": entry.recording_id, "stage": "expert", "message": str(exc)}
        )
        return payload

    payload["n_expert_utterances"] = len(expert)
    payload["features"].extend(summary.to_dict() for summary in expert_summaries)
    payload["units"]["expert"] = _aggregate_units(expert, expert_summaries)
    payload["reliability_row"] = row.to_dict()
    icc_values: dict[str, dict[str, float | None]] = {"machine": {}, "expert": {}}
    for source_name, summaries in (
        ("machine", machine_summaries),
        ("expert", expert_summaries),
    ):
        for summary in summaries:
            values = icc_feature_values(summary, meta.duration_minutes)
            for feature, value in values.items():
                icc_values[source_name][f"{summary.role.value}_{feature}"] = value
    payload["icc"] = icc_values
    return payload


def _pool_source(units_list: list[dict], durations_hint: str = "") -> dict:
    """Pool one source's per-recording tallies into corpus-level features."""
    pooled: dict = {}
    for role in iter_roles():
        rows = [units[role.value] for units in units_list if role.value in units]
        counts = {
            key: sum(row[key] for row in rows)
            for key in (
                "n_utterances",
                "n_questions",
                "n_non_questions",
                "n_responded_questions",
                "n_responded_non_questions",
                "n_responses_given",
                "total_words",
            )
        }
        minutes = sum(row["duration_minutes"] for row in rows)
        pct_values = [row["pct_questions"] for row in rows if row["pct_questions"] is not None]
        ld_values = [row["lexical_diversity_per_minute"] for row in rows]
        pooled[role.value] = {
            "n_recordings": len(rows),
            **counts,
            "mlu_pooled": (
                counts["total_words"] / counts["n_utterances"]
                if counts["n_utterances"]
                else None
            ),
            "words_per_minute_pooled": counts["total_words"] / minutes if minutes else None,
            "prop_responded_questions_pooled": response_proportion(
                counts["n_responded_questions"], counts["n_questions"]
            ),
            "prop_responded_non_questions_pooled": response_proportion(
                counts["n_responded_non_questions"], counts["n_non_questions"]
            ),
            "pct_questions_pooled": response_proportion(
                counts["n_questions"], counts["n_utterances"]
            ),
            "pct_questions_mean": (
                sum(pct_values) / len(pct_values) if pct_values else None
            ),
            "mean_lexical_diversity_per_minute": (
                sum(ld_values) / len(ld_values) if ld_values else None
            ),
        }
    teacher_n = pooled[SpeakerRole.TEACHER.value]["n_utterances"]
    child_n = pooled[SpeakerRole.CHILD.value]["n_utterances"]
    pooled["teacher_child_utterance_ratio"] = teacher_n / child_n if child_n else None
    return pooled


@dataclass(frozen=True)
class PipelineResult:
    """Everything a run produced, ready to serialize.

    Carries only analysis parameters in ``config``; worker counts and
    output paths are execution details and stay out so identical inputs
    serialize identically everywhere.
    """

    config: dict
    corpus: dict
    features: tuple[FeatureSummary, ...]
    reliability: ReliabilityReport | None
    aggregate: dict
    errors: tuple[EntryError, ...]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "corpus": self.corpus,
            "features": [summary.to_dict() for summary in self.features],
            "reliability": self.reliability.to_dict() if self.reliability else None,
            "aggregate": self.aggregate,
            "errors": [error.to_dict() for error in self.errors],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineResult":
        return cls(
            config=dict(data["config"]),
            corpus=dict(data["corpus"]),
            features=tuple(FeatureSummary.from_dict(f) for f in data["features"]),
            reliability=(
                ReliabilityReport.from_dict(data["reliability"])
                if data.get("reliability")
                else None
            ),
            aggregate=data["aggregate"],
            errors=tuple(EntryError.from_dict(e) for e in data["errors"]),
        )


def run_pipeline(manifest: CorpusManifest, cfg: RunConfig) -> PipelineResult:
    """Process every manifest entry and merge in manifest order."""
    if not manifest.entries:
        raise EmptyCorpus("manifest has no entries")
    if cfg.parallelism == 1 or len(manifest.entries) == 1:
        payloads = [_process_entry(entry, cfg) for entry in manifest.entries]
    else:
        chunk = max(1, len(manifest.entries) // (cfg.parallelism * 4))
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            payloads = list(
                pool.map(_process_entry, manifest.entries, repeat(cfg), chunksize=chunk)
            )

    features: list[FeatureSummary] = []
    rows: list[RecordingReliability] = []
    errors: list[EntryError] = []
    feature_pairs: dict[str, list[tuple[float | None, float | None]]] = {}
    machine_units: list[dict] = []
    expert_units: list[dict] = []
    n_machine = 0
    n_expert = 0
    hours = 0.0
    n_success = 0
    for payload in payloads:
        for error in payload["errors"]:
            errors.append(EntryError.from_dict(error))
        if "features" not in payload:
            continue
        n_success += 1
        hours += payload["duration_minutes"] / 60.0
        n_machine += payload["n_machine_utterances"]
        n_expert += payload.get("n_expert_utterances", 0)
        features.extend(FeatureSummary.from_dict(f) for f in payload["features"])
        machine_units.append(payload["units"]["machine"])
        if "expert" in payload.get("units", {}):
            expert_units.append(payload["units"]["expert"])
        if "reliability_row" in payload:
            rows.append(RecordingReliability.from_dict(payload["reliability_row"]))
        if "icc" in payload:
            for key in payload["icc"]["machine"]:
                feature_pairs.setdefault(key, []).append(
                    (payload["icc"]["machine"][key], payload["icc"]["expert"].get(key))
                )

    reliability = build_report(rows, feature_pairs) if rows else None
    aggregate = {"machine": _pool_source(machine_units)}
    if expert_units:
        aggregate["expert"] = _pool_source(expert_units)
    corpus = {
        "n_recordings": n_success,
        "n_failed": len({e.recording_id for e in errors}),
        "hours": hours,
        "n_machine_utterances": n_machine,
        "n_expert_utterances": n_expert,
    }
    return PipelineResult(
        config=cfg.semantic_dict(),
        corpus=corpus,
        features=tuple(features),
        reliability=reliability,
        aggregate=aggregate,
        errors=tuple(errors),
    )


def _fmt(value: object) -> str:
    """CSV cell: blank None, 3-decimal floats, everything else verbatim."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(round(value, 3))
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


RELIABILITY_COLUMNS = (
    "recording_id",
    "duration_minutes",
    "f1_weighted",
    "accuracy",
    "kappa",
    "wer_teacher",
    "wer_child",
)

AGGREGATE_COLUMNS = (
    "source",
    "role",
    "n_recordings",
    "n_utterances",
    "n_questions",
    "n_non_questions",
    "n_responded_questions",
    "n_responded_non_questions",
    "n_responses_given",
    "total_words",
    "mlu_pooled",
    "words_per_minute_pooled",
    "prop_responded_questions_pooled",
    "prop_responded_non_questions_pooled",
    "pct_questions_pooled",
    "pct_questions_mean",
    "mean_lexical_diversity_per_minute",
    "teacher_child_utterance_ratio",
)

ICC_COLUMNS = ("feature", "icc", "n_used", "n_dropped", "zero_variance")


def reliability_table(report: ReliabilityReport) -> list[list[object]]:
    """Per-recording metric rows plus the two summary rows."""
    rows: list[list[object]] = []
    for row in report.rows:
        m = row.metrics
        rows.append(
            [
                row.recording_id,
                row.duration_minutes,
                m.f1_weighted,
                m.accuracy,
                m.kappa,
                m.wer_teacher,
                m.wer_child,
            ]
        )
    total_minutes = sum(r.duration_minutes for r in report.rows)
    for label, metrics, minutes in (
        ("Time-Weighted Mean", report.time_weighted, total_minutes),
        ("Overall", report.overall, None),
    ):
        rows.append(
            [
                label,
                minutes,
                metrics.f1_weighted,
                metrics.accuracy,
                metrics.kappa,
                metrics.wer_teacher,
                metrics.wer_child,
            ]
        )
    return rows


def icc_table(report: ReliabilityReport) -> list[list[object]]:
    """One row per feature in the rater-agreement grid."""
    return [
        [name, entry.value, entry.n_used, entry.n_dropped, entry.zero_variance]
        for name, entry in sorted(report.iccs.items())
    ]


def emit_report(result: PipelineResult, out_dir: Path | str, format: str = "csv") -> list[Path]:
    """Write results to ``out_dir``; returns the files written.

    ``json`` emits the full-precision results file alone; ``csv`` adds the
    per-recording feature table, the per-recording reliability table with
    time-weighted and pooled summary rows, the ICC grid, and the corpus
    aggregate table. CSV cells are rounded to 3 decimals; the JSON is not.
    """
    if format not in ("csv", "json"):
        raise ValueError(f"format must be csv or json: {format!r}")
    out = Path(out_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        results_path = out / "results.json"
        with open(results_path, "w", encoding="utf-8") as handle:
            json.dump(result.to_dict(), handle, indent=2)
            handle.write("\n")
        written.append(results_path)
        if result.errors:
            errors_path = out / "errors.json"
            with open(errors_path, "w", encoding="utf-8") as handle:
                json.dump([e.to_dict() for e in result.errors], handle, indent=2)
                handle.write("\n")
            written.append(errors_path)
        if format == "json":
            return written

        features_path = out / "features.csv"
        _write_csv(
            features_path,
            FEATURE_COLUMNS,
            [[summary.to_dict()[col] for col in FEATURE_COLUMNS] for summary in result.features],
        )
        written.append(features_path)

        reliability_path = out / "reliability_per_recording.csv"
        reliability_rows = (
            reliability_table(result.reliability) if result.reliability is not None else []
        )
        _write_csv(reliability_path, RELIABILITY_COLUMNS, reliability_rows)
        written.append(reliability_path)

        icc_path = out / "icc.csv"
        icc_rows = icc_table(result.reliability) if result.reliability is not None else []
        _write_csv(icc_path, ICC_COLUMNS, icc_rows)
        written.append(icc_path)

        aggregate_path = out / "aggregate_features.csv"
        aggregate_rows: list[list[object]] = []
        for source in ("machine", "expert"):
            pooled = result.aggregate.get(source)
            if pooled is None:
                continue
            for role in iter_roles():
                stats = pooled[role.value]
                aggregate_rows.append(
                    [source, role.value]
                    + [stats[col] for col in AGGREGATE_COLUMNS[2:-1]]
                    + [pooled["teacher_child_utterance_ratio"]]
                )
        _write_csv(aggregate_path, AGGREGATE_COLUMNS, aggregate_rows)
        written.append(aggregate_path)
        return written
    except OSError as exc:
        raise IoError(f"cannot write report to {out}: {exc}") from None
