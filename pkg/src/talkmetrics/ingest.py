"""Readers, writers and validators for the on-disk transcript formats.

Machine transcripts arrive as UTF-8 JSONL, one utterance object per line
with keys ``start``, ``end``, ``text``, ``speaker`` and an optional
``confidence``. Utterance ids are the 1-based line numbers.

Expert transcripts are tab-separated with a header of ``start``, ``end``,
``speaker``, ``text`` and an optional ``machine_id`` column; when at least
90% of rows carry a machine id the transcript is marked linked, which
enables index-based alignment.

Recording metadata lives in a JSON sidecar with ``recording_id``,
``wearer_role``, ``classroom_id``, ``academic_year`` and
``duration_minutes``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import TalkmetricsError
from .transcript import RecordingMeta, SpeakerRole, Source, Transcript, Utterance

LINKED_THRESHOLD = 0.9

EXPERT_COLUMNS = ("start", "end", "speaker", "text")


class ParseError(TalkmetricsError):
    """A transcript file could not be parsed; carries path and line."""

    def __init__(self, path: Path | str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class MalformedRecord(ParseError):
    """A line is not a well-formed record (bad JSON, missing keys, wrong
    cell count or type)."""


class InvalidTimestamps(ParseError):
    """Timestamps are negative, non-finite, or end before they start."""


class UnknownSpeakerLabel(ParseError):
    """Speaker label outside the closed set; never coerced silently,
    a mislabeled file would corrupt every downstream confusion count."""


class MissingHeader(ParseError):
    """The expert table header is absent or lacks a required column."""


class MetaError(TalkmetricsError):
    """The metadata sidecar is missing a field or holds a bad value."""


@dataclass(frozen=True)
class ValidationWarning:
    """A non-fatal data-quality finding from validate()."""

    code: str
    utterance_id: str
    message: str


def _parse_time(value: object, path: Path | str, line: int, column: str) -> float:
    try:
        parsed = float(value)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise MalformedRecord(path, line, f"{column} is not a number: {value!r}") from None
    if parsed != parsed or parsed in (float("inf"), float("-inf")):
        raise InvalidTimestamps(path, line, f"{column} is not finite: {value!r}")
    if parsed < 0:
        raise InvalidTimestamps(path, line, f"{column} is negative: {value!r}")
    return parsed


def _parse_role(value: object, path: Path | str, line: int) -> SpeakerRole:
    if not isinstance(value, str):
        raise MalformedRecord(path, line, f"speaker is not a string: {value!r}")
    try:
        return SpeakerRole.from_label(value)
    except ValueError as exc:
        raise UnknownSpeakerLabel(path, line, str(exc)) from None


def parse_machine(path: Path | str, meta: RecordingMeta) -> Transcript:
    """Read a machine transcript from JSONL. Ids are 1-based line numbers."""
    utterances = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, 1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise MalformedRecord(path, line_no, "line is not a JSON object")
            for key in ("start", "end", "text", "speaker"):
                if key not in record:
                    raise MalformedRecord(path, line_no, f"missing key {key!r}")
            onset = _parse_time(record["start"], path, line_no, "start")
            offset = _parse_time(record["end"], path, line_no, "end")
            if offset < onset:
                raise InvalidTimestamps(path, line_no, f"end {offset} before start {onset}")
            text = record["text"]
            if not isinstance(text, str):
                raise MalformedRecord(path, line_no, f"text is not a string: {text!r}")
            confidence = record.get("confidence")
            if confidence is not None:
                try:
                    confidence = float(confidence)
                except (TypeError, ValueError):
                    raise MalformedRecord(
                        path, line_no, f"confidence is not a number: {confidence!r}"
                    ) from None
            utterances.append(
                Utterance(
                    id=str(line_no),
                    onset=onset,
                    offset=offset,
                    raw_text=text,
                    role=_parse_role(record["speaker"], path, line_no),
                    source=Source.MACHINE,
                    confidence=confidence,
                )
            )
    return Transcript(meta=meta, utterances=tuple(utterances))


def parse_expert(path: Path | str, meta: RecordingMeta, delimiter: str = "\t") -> Transcript:
    """Read an expert transcript from a delimiter-separated table.

    The header must contain start/end/speaker/text in any order; a
    machine_id column is optional and, when filled on at least 90% of
    rows, marks the transcript linked.
    """
    utterances = []
    link_count = 0
    with open(path, encoding="utf-8", newline="") as handle:
        header_line = handle.readline()
        if not header_line:
            raise MissingHeader(path, 1, "empty file, expected a header row")
        header = [column.strip() for column in header_line.rstrip("\r\n").split(delimiter)]
        missing = [column for column in EXPERT_COLUMNS if column not in header]
        if missing:
            raise MissingHeader(path, 1, f"header is missing columns: {', '.join(missing)}")
        index = {column: header.index(column) for column in header}
        has_link_column = "machine_id" in index
        for line_no, line in enumerate(handle, 2):
            row = line.rstrip("\r\n")
            if not row.strip():
                continue
            cells = row.split(delimiter)
            if len(cells) < len(EXPERT_COLUMNS):
                raise MalformedRecord(
                    path, line_no, f"expected at least {len(EXPERT_COLUMNS)} cells, got {len(cells)}"
                )
            def cell(column: str) -> str:
                position = index[column]
                return cells[position] if position < len(cells) else ""
            onset = _parse_time(cell("start"), path, line_no, "start")
            offset = _parse_time(cell("end"), path, line_no, "end")
            if offset < onset:
                raise InvalidTimestamps(path, line_no, f"end {offset} before start {onset}")
            linked_id = None
            if has_link_column:
                raw_link = cell("machine_id").strip()
                if raw_link:
                    linked_id = raw_link
                    link_count += 1
            utterances.append(
                Utterance(
                    id=f"e{line_no - 1}",
                    onset=onset,
                    offset=offset,
                    raw_text=cell("text"),
                    role=_parse_role(cell("speaker"), path, line_no),
                    source=Source.EXPERT,
                    linked_id=linked_id,
                )
            )
    linked = bool(utterances) and link_count / len(utterances) >= LINKED_THRESHOLD
    return Transcript(meta=meta, utterances=tuple(utterances), linked=linked)


def load_meta(path: Path | str) -> RecordingMeta:
    """Read the metadata sidecar."""
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise MetaError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise MetaError(f"{path}: metadata must be a JSON object")
    for key in ("recording_id", "wearer_role", "classroom_id", "academic_year", "duration_minutes"):
        if key not in data:
            raise MetaError(f"{path}: missing key {key!r}")
    try:
        wearer = SpeakerRole.from_label(str(data["wearer_role"]))
    except ValueError as exc:
        raise MetaError(f"{path}: {exc}") from None
    try:
        duration = float(data["duration_minutes"])
    except (TypeError, ValueError):
        raise MetaError(
            f"{path}: duration_minutes is not a number: {data['duration_minutes']!r}"
        ) from None
    try:
        return RecordingMeta(
            recording_id=str(data["recording_id"]),
            wearer_role=wearer,
            classroom_id=str(data["classroom_id"]),
            academic_year=str(data["academic_year"]),
            duration_minutes=duration,
        )
    except ValueError as exc:
        raise MetaError(f"{path}: {exc}") from None


def dump_meta(meta: RecordingMeta, path: Path | str) -> None:
    payload = {
        "recording_id": meta.recording_id,
        "wearer_role": meta.wearer_role.value,
        "classroom_id": meta.classroom_id,
        "academic_year": meta.academic_year,
        "duration_minutes": meta.duration_minutes,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def validate(transcript: Transcript) -> list[ValidationWarning]:
    """Non-fatal data-quality checks.

    Flags overlapping same-role utterances, utterances running more than a
    second past the recorded duration, and zero-word utterances. Returned
    in utterance order; an empty list means no findings.
    """
    findings: list[ValidationWarning] = []
    limit = transcript.meta.duration_seconds + 1.0
    last_offset: dict[SpeakerRole, tuple[float, str]] = {}
    for utt in transcript.utterances:
        previous = last_offset.get(utt.role)
        if previous is not None and utt.onset < previous[0]:
            findings.append(
                ValidationWarning(
                    code="overlap",
                    utterance_id=utt.id,
                    message=(
                        f"{utt.role.value} utterance {utt.id} starts at {utt.onset:.3f}"
                        f" before {previous[1]} ends at {previous[0]:.3f}"
                    ),
                )
            )
        if previous is None or utt.offset > previous[0]:
            last_offset[utt.role] = (utt.offset, utt.id)
        if utt.offset > limit:
            findings.append(
                ValidationWarning(
                    code="past_duration",
                    utterance_id=utt.id,
                    message=(
                        f"utterance {utt.id} ends at {utt.offset:.3f}, past the"
                        f" recording duration of {transcript.meta.duration_seconds:.1f}s"
                    ),
                )
            )
        if utt.word_count == 0:
            findings.append(
                ValidationWarning(
                    code="zero_words",
                    utterance_id=utt.id,
                    message=f"utterance {utt.id} normalizes to zero words: {utt.raw_text!r}",
                )
            )
    return findings


def write_machine_jsonl(transcript: Transcript, path: Path | str) -> None:
    """Serialize a transcript in the machine JSONL format."""
    with open(path, "w", encoding="utf-8") as handle:
        for utt in transcript.utterances:
            record: dict = {
                "start": utt.onset,
                "end": utt.offset,
                "text": utt.raw_text,
                "speaker": utt.role.value,
            }
            if utt.confidence is not None:
                record["confidence"] = utt.confidence
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")


def write_expert_table(transcript: Transcript, path: Path | str, delimiter: str = "\t") -> None:
    """Serialize a transcript in the expert table format.

    The machine_id column is emitted only when some utterance carries a
    link.
    """
    any_link = any(utt.linked_id is not None for utt in transcript.utterances)
    columns = list(EXPERT_COLUMNS) + (["machine_id"] if any_link else [])
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(delimiter.join(columns) + "\n")
        for utt in transcript.utterances:
            cells = [
                repr(utt.onset),
                repr(utt.offset),
                utt.role.value,
                utt.raw_text.replace(delimiter, " ").replace("\n", " "),
            ]
            if any_link:
                cells.append(utt.linked_id or "")
            handle.write(delimiter.join(cells) + "\n")


def load_recording(
    machine_path: Path | str, expert_path: Path | str, meta_path: Path | str
) -> tuple[Transcript, Transcript, RecordingMeta]:
    """Convenience loader for one recording's three files."""
    meta = load_meta(meta_path)
    machine = parse_machine(machine_path, meta)
    expert = parse_expert(expert_path, meta)
    return machine, expert, meta
