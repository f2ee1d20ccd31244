"""Agreement statistics between machine and expert transcripts.

Covers word-level Levenshtein distance and word error rate, 2x2 confusion
matrix metrics (accuracy, support-weighted F1, Cohen's kappa), time-weighted
aggregation across recordings, and the two-way absolute-agreement
single-measure intraclass correlation (ICC) with recordings as units and
machine/expert as the two raters.

Conventions, fixed once here so every report uses the same rules:

* WER of a matched pair is Levenshtein distance over the expert (reference)
  word count. An utterance present on only one side counts as WER 1.0 (all
  of its words wrong).
* Unmatched (residue) utterances are excluded from the confusion matrix but
  included in WER; their counts are carried on the matrix for reporting.
* Per-recording metrics use per-recording counts; "overall" metrics pool
  counts across recordings; the time-weighted mean weights per-recording
  values by recording duration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .errors import TalkmetricsError
from .transcript import SpeakerRole, Utterance

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .align import AlignedCorpus


class BothAbsent(TalkmetricsError):
    """utterance_wer needs at least one side of the pair."""


class EmptySelection(TalkmetricsError):
    """No utterances matched the requested role/wearer selection."""


class EmptyMatrix(TalkmetricsError):
    """Confusion metrics are undefined on an all-zero matrix."""


class LengthMismatch(TalkmetricsError):
    """values and durations must pair up one-to-one."""


class ZeroTotalWeight(TalkmetricsError):
    """No usable weight remained after skipping missing values."""


class TooFewRows(TalkmetricsError):
    """ICC needs at least two complete recordings."""


class DegenerateRatings(TalkmetricsError):
    """The ICC denominator vanished on unequal ratings (only possible for
    n=2 with mirrored values); the statistic is undefined there."""


class ZeroVarianceWarning(UserWarning):
    """All ratings identical: ICC is returned as 1.0 by convention."""


def levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    """Minimum insertions + deletions + substitutions (unit costs) turning
    token list ``a`` into ``b``. Symmetric; 0 iff the lists are equal."""
    if a == b or list(a) == list(b):
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, word_a in enumerate(a, 1):
        current = [i]
        append = current.append
        prev_diag = previous[0]
        for j, word_b in enumerate(b, 1):
            prev_j = previous[j]
            cost = prev_diag if word_a == word_b else prev_diag + 1
            up = prev_j + 1
            if up < cost:
                cost = up
            left = current[j - 1] + 1
            if left < cost:
                cost = left
            append(cost)
            prev_diag = prev_j
        previous = current
    return previous[-1]


def utterance_wer(hyp: Utterance | None, ref: Utterance | None) -> float:
    """Word error rate for one aligned slot.

    Both present: distance / reference word count (falling back to the
    hypothesis count when the reference is empty). A missing side means the
    whole utterance is wrong: 1.0. Never rounds; display code rounds.
    """
    if hyp is None and ref is None:
        raise BothAbsent("utterance_wer called with neither side present")
    if hyp is None or ref is None:
        return 1.0
    distance = levenshtein(hyp.tokens, ref.tokens)
    denominator = ref.word_count or hyp.word_count
    if denominator == 0:
        return 0.0
    return distance / denominator


def wer_units(
    corpus: "AlignedCorpus", role: SpeakerRole, wearer_match: bool = False
) -> tuple[float, int]:
    """(sum of per-utterance WERs, unit count) for one recording and role.

    Pairs are selected by expert role; residues enter at WER 1.0 under the
    role of whichever side exists. With ``wearer_match`` set, a recording
    whose wearer is not ``role`` contributes nothing: speech is scored only
    against the microphone its speaker wore.
    """
    if wearer_match and corpus.meta.wearer_role is not role:
        return 0.0, 0
    total = 0.0
    count = 0
    for pair in corpus.pairs:
        if pair.expert_utt.role is role:
            total += utterance_wer(pair.machine_utt, pair.expert_utt)
            count += 1
    for utt in corpus.expert_only:
        if utt.role is role:
            total += 1.0
            count += 1
    for utt in corpus.machine_only:
        if utt.role is role:
            total += 1.0
            count += 1
    return total, count


def corpus_wer(
    corpus: "AlignedCorpus", role: SpeakerRole, wearer_match: bool = False
) -> float:
    """Mean utterance WER over one aligned recording for ``role``."""
    total, count = wer_units(corpus, role, wearer_match)
    if count == 0:
        raise EmptySelection(
            f"no utterances for role {role.value!r}"
            + (" after wearer filtering" if wearer_match else "")
        )
    return total / count


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 teacher/child cross-classification counts.

    Rows are the expert (truth), columns the machine, ordered
    (teacher, child). Pairs involving OTHER and unmatched residues are
    excluded from ``counts`` but tallied alongside.
    """

    counts: tuple[tuple[int, int], tuple[int, int]]
    excluded_other: int = 0
    residue_machine: int = 0
    residue_expert: int = 0

    def __post_init__(self) -> None:
        flat = [c for row in self.counts for c in row]
        if len(self.counts) != 2 or any(len(row) != 2 for row in self.counts):
            raise ValueError("counts must be 2x2")
        if any(c < 0 for c in flat):
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(c for row in self.counts for c in row)

    @property
    def row_totals(self) -> tuple[int, int]:
        return (self.counts[0][0] + self.counts[0][1], self.counts[1][0] + self.counts[1][1])

    @property
    def col_totals(self) -> tuple[int, int]:
        return (self.counts[0][0] + self.counts[1][0], self.counts[0][1] + self.counts[1][1])

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        a, b = self.counts, other.counts
        return ConfusionMatrix(
            counts=(
                (a[0][0] + b[0][0], a[0][1] + b[0][1]),
                (a[1][0] + b[1][0], a[1][1] + b[1][1]),
            ),
            excluded_other=self.excluded_other + other.excluded_other,
            residue_machine=self.residue_machine + other.residue_machine,
            residue_expert=self.residue_expert + other.residue_expert,
        )

    def to_dict(self) -> dict:
        return {
            "counts": [list(row) for row in self.counts],
            "excluded_other": self.excluded_other,
            "residue_machine": self.residue_machine,
            "residue_expert": self.residue_expert,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConfusionMatrix":
        rows = data["counts"]
        return cls(
            counts=((int(rows[0][0]), int(rows[0][1])), (int(rows[1][0]), int(rows[1][1]))),
            excluded_other=int(data.get("excluded_other", 0)),
            residue_machine=int(data.get("residue_machine", 0)),
            residue_expert=int(data.get("residue_expert", 0)),
        )


def accuracy(m: ConfusionMatrix) -> float:
    """Trace over total."""
    total = m.total
    if total == 0:
        raise EmptyMatrix("accuracy undefined on an empty confusion matrix")
    return (m.counts[0][0] + m.counts[1][1]) / total


def weighted_f1(m: ConfusionMatrix) -> float:
    """Support-weighted mean of per-class F1 scores.

    A class with zero precision+recall gets F1 0; a class with no support
    carries no weight.
    """
    total = m.total
    if total == 0:
        raise EmptyMatrix("weighted F1 undefined on an empty confusion matrix")
    rows, cols = m.row_totals, m.col_totals
    score = 0.0
    for cls in (0, 1):
        tp = m.counts[cls][cls]
        precision = tp / cols[cls] if cols[cls] else 0.0
        recall = tp / rows[cls] if rows[cls] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        score += rows[cls] / total * f1
    return score


def cohen_kappa(m: ConfusionMatrix) -> float | None:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    Expected agreement p_e comes from the row/column marginals. Returns
    None when the marginals are degenerate (p_e = 1), where kappa is
    undefined.
    """
    total = m.total
    if total == 0:
        raise EmptyMatrix("kappa undefined on an empty confusion matrix")
    rows, cols = m.row_totals, m.col_totals
    p_observed = (m.counts[0][0] + m.counts[1][1]) / total
    p_expected = (rows[0] * cols[0] + rows[1] * cols[1]) / (total * total)
    if p_expected == 1.0:
        return None
    return (p_observed - p_expected) / (1.0 - p_expected)


def time_weighted_mean(
    values: Sequence[float | None], durations: Sequence[float]
) -> float:
    """Duration-weighted mean of per-recording metric values.

    None values are skipped together with their weights.
    """
    if len(values) != len(durations):
        raise LengthMismatch(
            f"{len(values)} values vs {len(durations)} durations"
        )
    weighted = 0.0
    weight = 0.0
    for value, duration in zip(values, durations):
        if value is None:
            continue
        weighted += value * duration
        weight += duration
    if weight <= 0.0:
        raise ZeroTotalWeight("no usable values to weight")
    return weighted / weight


def drop_incomplete_rows(
    ratings: Sequence[Sequence[float | None]],
) -> tuple[np.ndarray, int]:
    """Drop rows with a missing cell on either side; report the drop count."""
    kept = [
        (float(row[0]), float(row[1]))
        for row in ratings
        if row[0] is not None
        and row[1] is not None
        and not (np.isnan(row[0]) or np.isnan(row[1]))
    ]
    return np.asarray(kept, dtype=float).reshape(len(kept), 2), len(ratings) - len(kept)


def icc_absolute(ratings: Sequence[Sequence[float]] | np.ndarray) -> float:
    """Two-way, absolute-agreement, single-measure intraclass correlation.

    ``ratings`` is an n x 2 matrix: rows are recordings, columns the two
    raters (machine, expert). With mean squares from the two-way ANOVA
    (MSR rows, MSC columns, MSE residual) and k raters:

        ICC = (MSR - MSE) / (MSR + (k-1)*MSE + (k/n)*(MSC - MSE))

    Absolute agreement: a constant offset between the raters lowers the
    value. An all-equal matrix is defined as 1.0 by convention and flagged
    with :class:`ZeroVarianceWarning`.
    """
    matrix = np.asarray(ratings, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != 2:
        raise ValueError(f"ratings must be n x 2, got shape {matrix.shape}")
    if np.isnan(matrix).any():
        raise ValueError("ratings contain missing cells; drop them pairwise first")
    n, k = matrix.shape
    if n < 2:
        raise TooFewRows(f"ICC needs at least 2 recordings, got {n}")
    grand = matrix.mean()
    if np.all(matrix == matrix.flat[0]):
        warnings.warn(
            "all ratings identical; ICC defined as 1.0", ZeroVarianceWarning, stacklevel=2
        )
        return 1.0
    if np.array_equal(matrix[:, 0], matrix[:, 1]):
        # exact column agreement: MSE and MSC vanish, so the ratio is
        # exactly 1; computing it through the sums of squares would leave
        # cancellation residue on the order of 1e-16
        return 1.0
    row_means = matrix.mean(axis=1)
    col_means = matrix.mean(axis=0)
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    ss_total = float(((matrix - grand) ** 2).sum())
    ss_error = max(ss_total - ss_rows - ss_cols, 0.0)
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_error / ((n - 1) * (k - 1))
    denominator = msr + (k - 1) * mse + (k / n) * (msc - mse)
    if denominator == 0.0:
        raise DegenerateRatings("ICC denominator is zero on unequal ratings")
    return float((msr - mse) / denominator)


@dataclass(frozen=True)
class MetricSet:
    """The Table-style metric bundle for one row of a reliability report."""

    f1_weighted: float | None
    accuracy: float | None
    kappa: float | None
    wer_teacher: float | None
    wer_child: float | None

    def to_dict(self) -> dict:
        return {
            "f1_weighted": self.f1_weighted,
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "wer_teacher": self.wer_teacher,
            "wer_child": self.wer_child,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricSet":
        return cls(
            f1_weighted=data.get("f1_weighted"),
            accuracy=data.get("accuracy"),
            kappa=data.get("kappa"),
            wer_teacher=data.get("wer_teacher"),
            wer_child=data.get("wer_child"),
        )


@dataclass(frozen=True)
class RecordingReliability:
    """Per-recording agreement results plus the raw counts needed to pool."""

    recording_id: str
    classroom_id: str
    academic_year: str
    wearer_role: SpeakerRole
    duration_minutes: float
    confusion: ConfusionMatrix
    metrics: MetricSet
    wer_sum_teacher: float
    wer_count_teacher: int
    wer_sum_child: float
    wer_count_child: int

    def to_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "classroom_id": self.classroom_id,
            "academic_year": self.academic_year,
            "wearer_role": self.wearer_role.value,
            "duration_minutes": self.duration_minutes,
            "confusion": self.confusion.to_dict(),
            "metrics": self.metrics.to_dict(),
            "wer_sum_teacher": self.wer_sum_teacher,
            "wer_count_teacher": self.wer_count_teacher,
            "wer_sum_child": self.wer_sum_child,
            "wer_count_child": self.wer_count_child,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RecordingReliability":
        return cls(
            recording_id=data["recording_id"],
            classroom_id=data["classroom_id"],
            academic_year=data["academic_year"],
            wearer_role=SpeakerRole(data["wearer_role"]),
            duration_minutes=data["duration_minutes"],
            confusion=ConfusionMatrix.from_dict(data["confusion"]),
            metrics=MetricSet.from_dict(data["metrics"]),
            wer_sum_teacher=data["wer_sum_teacher"],
            wer_count_teacher=data["wer_count_teacher"],
            wer_sum_child=data["wer_sum_child"],
            wer_count_child=data["wer_count_child"],
        )


@dataclass(frozen=True)
class IccEntry:
    """One feature's ICC with the sample actually used."""

    value: float | None
    n_used: int
    n_dropped: int
    zero_variance: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "n_used": self.n_used,
            "n_dropped": self.n_dropped,
            "zero_variance": self.zero_variance,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "IccEntry":
        return cls(
            value=data.get("value"),
            n_used=int(data.get("n_used", 0)),
            n_dropped=int(data.get("n_dropped", 0)),
            zero_variance=bool(data.get("zero_variance", False)),
        )


@dataclass(frozen=True)
class ReliabilityReport:
    """Agreement statistics for a set of recordings.

    ``rows`` hold per-recording results in recording-id order; ``overall``
    pools counts across recordings, ``time_weighted`` weights per-recording
    metric values by duration, and ``iccs`` maps feature names to
    absolute-agreement ICC entries.
    """

    rows: tuple[RecordingReliability, ...]
    overall: MetricSet
    time_weighted: MetricSet
    iccs: dict[str, IccEntry] = field(default_factory=dict)

    @property
    def per_recording(self) -> dict[str, MetricSet]:
        return {row.recording_id: row.metrics for row in self.rows}

    def to_dict(self) -> dict:
        return {
            "rows": [row.to_dict() for row in self.rows],
            "overall": self.overall.to_dict(),
            "time_weighted": self.time_weighted.to_dict(),
            "iccs": {name: entry.to_dict() for name, entry in sorted(self.iccs.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ReliabilityReport":
        return cls(
            rows=tuple(RecordingReliability.from_dict(r) for r in data["rows"]),
            overall=MetricSet.from_dict(data["overall"]),
            time_weighted=MetricSet.from_dict(data["time_weighted"]),
            iccs={
                name: IccEntry.from_dict(entry)
                for name, entry in data.get("iccs", {}).items()
            },
        )


def confusion_metrics(m: ConfusionMatrix) -> tuple[float | None, float | None, float | None]:
    """(weighted F1, accuracy, kappa) with None where undefined."""
    if m.total == 0:
        return None, None, None
    return weighted_f1(m), accuracy(m), cohen_kappa(m)


def build_report(
    rows: Sequence[RecordingReliability],
    feature_pairs: Mapping[str, Sequence[tuple[float | None, float | None]]] | None = None,
) -> ReliabilityReport:
    """Assemble per-recording rows into overall/time-weighted metrics and ICCs.

    ``feature_pairs`` maps a feature name to (machine, expert) value pairs,
    one per recording; rows with a missing side are dropped pairwise and the
    drop count kept in the report.
    """
    ordered = tuple(sorted(rows, key=lambda r: r.recording_id))
    pooled_confusion = ConfusionMatrix(counts=((0, 0), (0, 0)))
    for row in ordered:
        pooled_confusion = pooled_confusion + row.confusion
    f1, acc, kappa = confusion_metrics(pooled_confusion)

    def pooled_wer(sums: list[float], counts: list[int]) -> float | None:
        total_count = sum(counts)
        if total_count == 0:
            return None
        return sum(sums) / total_count

    overall = MetricSet(
        f1_weighted=f1,
        accuracy=acc,
        kappa=kappa,
        wer_teacher=pooled_wer(
            [r.wer_sum_teacher for r in ordered], [r.wer_count_teacher for r in ordered]
        ),
        wer_child=pooled_wer(
            [r.wer_sum_child for r in ordered], [r.wer_count_child for r in ordered]
        ),
    )

    durations = [r.duration_minutes for r in ordered]

    def weighted(metric: str) -> float | None:
        values = [getattr(r.metrics, metric) for r in ordered]
        try:
            return time_weighted_mean(values, durations)
        except (ZeroTotalWeight, LengthMismatch):
            return None

    time_weighted = MetricSet(
        f1_weighted=weighted("f1_weighted"),
        accuracy=weighted("accuracy"),
        kappa=weighted("kappa"),
        wer_teacher=weighted("wer_teacher"),
        wer_child=weighted("wer_child"),
    )

    iccs: dict[str, IccEntry] = {}
    for name, pairs in sorted((feature_pairs or {}).items()):
        clean, dropped = drop_incomplete_rows(pairs)
        if len(clean) < 2:
            iccs[name] = IccEntry(value=None, n_used=len(clean), n_dropped=dropped)
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ZeroVarianceWarning)
            try:
                value = icc_absolute(clean)
            except DegenerateRatings:
                iccs[name] = IccEntry(value=None, n_used=len(clean), n_dropped=dropped)
                continue
            flagged = any(issubclass(w.category, ZeroVarianceWarning) for w in caught)
        iccs[name] = IccEntry(
            value=value, n_used=len(clean), n_dropped=dropped, zero_variance=flagged
        )
    return ReliabilityReport(
        rows=ordered, overall=overall, time_weighted=time_weighted, iccs=iccs
    )


def recording_reliability(
    corpus: "AlignedCorpus", wearer_match: bool = True
) -> RecordingReliability:
    """Compute one recording's agreement row from its aligned corpus."""
    from .align import cross_classify  # local import to avoid module cycle

    confusion = cross_classify(corpus)
    f1, acc, kappa = confusion_metrics(confusion)
    sums: dict[SpeakerRole, tuple[float, int]] = {}
    for role in (SpeakerRole.TEACHER, SpeakerRole.CHILD):
        sums[role] = wer_units(corpus, role, wearer_match)
    wer_t = sums[SpeakerRole.TEACHER]
    wer_c = sums[SpeakerRole.CHILD]
    meta = corpus.meta
    return RecordingReliability(
        recording_id=meta.recording_id,
        classroom_id=meta.classroom_id,
        academic_year=meta.academic_year,
        wearer_role=meta.wearer_role,
        duration_minutes=meta.duration_minutes,
        confusion=confusion,
        metrics=MetricSet(
            f1_weighted=f1,
            accuracy=acc,
            kappa=kappa,
            wer_teacher=wer_t[0] / wer_t[1] if wer_t[1] else None,
            wer_child=wer_c[0] / wer_c[1] if wer_c[1] else None,
        ),
        wer_sum_teacher=wer_t[0],
        wer_count_teacher=wer_t[1],
        wer_sum_child=wer_c[0],
        wer_count_child=wer_c[1],
    )
