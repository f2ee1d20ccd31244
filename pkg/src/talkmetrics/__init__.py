"""Alignment, language features and reliability statistics for classroom
speech transcripts.

The pipeline: ingest machine (ASR) and expert transcripts, align them
utterance by utterance, extract teacher and child language features, and
quantify machine-expert agreement (word error rate, speaker-classification
metrics, intraclass correlations) per recording and corpus-wide.
"""

from .align import (
    AlignConfig,
    AlignedCorpus,
    AlignedPair,
    NotLinked,
    align,
    align_by_index,
    align_by_time,
    cross_classify,
    text_similarity,
    time_iou,
    write_alignment_jsonl,
)
from .batch import (
    CorpusManifest,
    EmptyCorpus,
    EntryError,
    ManifestEntry,
    MissingFile,
    PipelineResult,
    RunConfig,
    discover,
    emit_report,
    run_pipeline,
)
from .errors import TalkmetricsError
from .features import (
    FEATURE_COLUMNS,
    ICC_FEATURES,
    FeatureSummary,
    ResponseLink,
    detect_responses,
    icc_feature_values,
    lexical_diversity_per_minute,
    lexical_diversity_pooled,
    mlu,
    response_proportion,
    summarize,
    words_per_minute,
)
from .ingest import (
    InvalidTimestamps,
    MalformedRecord,
    MetaError,
    MissingHeader,
    ParseError,
    UnknownSpeakerLabel,
    ValidationWarning,
    dump_meta,
    load_meta,
    load_recording,
    parse_expert,
    parse_machine,
    validate,
    write_expert_table,
    write_machine_jsonl,
)
from .reliability import (
    ConfusionMatrix,
    IccEntry,
    MetricSet,
    RecordingReliability,
    ReliabilityReport,
    ZeroVarianceWarning,
    accuracy,
    build_report,
    cohen_kappa,
    corpus_wer,
    icc_absolute,
    levenshtein,
    recording_reliability,
    time_weighted_mean,
    utterance_wer,
    weighted_f1,
)
from .transcript import (
    RecordingMeta,
    SpeakerRole,
    Source,
    Transcript,
    Utterance,
    is_question,
    normalize,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "AlignConfig",
    "AlignedCorpus",
    "AlignedPair",
    "ConfusionMatrix",
    "CorpusManifest",
    "EmptyCorpus",
    "EntryError",
    "FEATURE_COLUMNS",
    "FeatureSummary",
    "ICC_FEATURES",
    "IccEntry",
    "InvalidTimestamps",
    "MalformedRecord",
    "ManifestEntry",
    "MetaError",
    "MetricSet",
    "MissingFile",
    "MissingHeader",
    "NotLinked",
    "ParseError",
    "UnknownSpeakerLabel",
    "PipelineResult",
    "RecordingMeta",
    "RecordingReliability",
    "ReliabilityReport",
    "ResponseLink",
    "RunConfig",
    "SpeakerRole",
    "Source",
    "TalkmetricsError",
    "Transcript",
    "Utterance",
    "ValidationWarning",
    "ZeroVarianceWarning",
    "accuracy",
    "align",
    "align_by_index",
    "align_by_time",
    "build_report",
    "cohen_kappa",
    "corpus_wer",
    "cross_classify",
    "detect_responses",
    "discover",
    "dump_meta",
    "emit_report",
    "icc_absolute",
    "icc_feature_values",
    "is_question",
    "levenshtein",
    "lexical_diversity_per_minute",
    "lexical_diversity_pooled",
    "load_meta",
    "load_recording",
    "mlu",
    "normalize",
    "parse_expert",
    "parse_machine",
    "recording_reliability",
    "response_proportion",
    "run_pipeline",
    "summarize",
    "text_similarity",
    "time_iou",
    "time_weighted_mean",
    "tokenize",
    "utterance_wer",
    "validate",
    "weighted_f1",
    "words_per_minute",
    "write_alignment_jsonl",
    "write_expert_table",
    "write_machine_jsonl",
]
