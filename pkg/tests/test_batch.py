"""Corpus discovery, pipeline runs, failure isolation, and report files."""

import json

import pytest

import synthetic as syn
from talkmetrics import (
    CorpusManifest,
    ManifestEntry,
    PipelineResult,
    RunConfig,
    discover,
    emit_report,
    run_pipeline,
)
from talkmetrics.batch import (
    AGGREGATE_COLUMNS,
    ICC_COLUMNS,
    RELIABILITY_COLUMNS,
    EmptyCorpus,
    ManifestError,
    MissingFile,
    _fmt,
    icc_table,
    reliability_table,
)


def corpus_dir(tmp_path, n=3, seed=0, with_expert=True):
    """A small on-disk corpus of linked machine/expert recording triples."""
    import random

    rng = random.Random(seed)
    root = tmp_path / "corpus"
    for i in range(n):
        machine_rows = []
        expert_rows = []
        clock = 0.0
        for j in range(rng.randrange(4, 9)):
            length = rng.uniform(0.8, 3.0)
            text = " ".join(rng.choice(syn.TEXT_POOL).split())
            role = rng.choice(("teacher", "child"))
            machine_rows.append(
                {"start": round(clock, 2), "end": round(clock + length, 2), "text": text, "speaker": role}
            )
            if with_expert:
                expert_rows.append(
                    {
                        "start": round(clock, 2),
                        "end": round(clock + length, 2),
                        "speaker": role,
                        "text": text,
                        "machine_id": j + 1,
                    }
                )
            clock += length + rng.uniform(0.2, 2.0)
        syn.write_recording(
            root,
            f"rec{i:02d}",
            machine_rows,
            expert_rows if with_expert else None,
            duration_minutes=max(clock / 60.0 + 0.5, 1.0),
        )
    return root


class TestDiscover:
    def test_convention_layout(self, tmp_path):
        root = corpus_dir(tmp_path, n=3)
        manifest = discover(root_dir=root)
        assert [e.recording_id for e in manifest.entries] == ["rec00", "rec01", "rec02"]
        assert all(e.expert_path is not None for e in manifest.entries)

    def test_nested_directories(self, tmp_path):
        syn.write_weather_recording(tmp_path / "a" / "deep", "w1")
        syn.write_weather_recording(tmp_path / "b", "w2")
        manifest = discover(root_dir=tmp_path)
        assert [e.recording_id for e in manifest.entries] == ["w1", "w2"]

    def test_expert_file_optional(self, tmp_path):
        root = corpus_dir(tmp_path, n=1, with_expert=False)
        manifest = discover(root_dir=root)
        assert manifest.entries[0].expert_path is None

    def test_missing_meta_rejected(self, tmp_path):
        root = corpus_dir(tmp_path, n=1)
        (root / "rec00.meta.json").unlink()
        with pytest.raises(MissingFile):
            discover(root_dir=root)

    def test_missing_root(self, tmp_path):
        with pytest.raises(MissingFile):
            discover(root_dir=tmp_path / "nowhere")

    def test_empty_root(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(EmptyCorpus):
            discover(root_dir=tmp_path / "empty")

    def test_manifest_with_entries_key(self, tmp_path):
        root = corpus_dir(tmp_path, n=2)
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text(
            json.dumps(
                {
                    "entries": [
                        {
                            "recording_id": "rec00",
                            "machine_path": "corpus/rec00.machine.jsonl",
                            "meta_path": "corpus/rec00.meta.json",
                            "expert_path": "corpus/rec00.expert.tsv",
                        }
                    ]
                }
            ),
            encoding="utf-8",
        )
        manifest = discover(manifest_path=manifest_path)
        assert len(manifest) == 1
        assert manifest.entries[0].machine_path == root / "rec00.machine.jsonl"

    def test_manifest_bare_list(self, tmp_path):
        corpus_dir(tmp_path, n=1)
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text(
            json.dumps(
                [
                    {
                        "recording_id": "rec00",
                        "machine_path": "corpus/rec00.machine.jsonl",
                        "meta_path": "corpus/rec00.meta.json",
                    }
                ]
            ),
            encoding="utf-8",
        )
        manifest = discover(manifest_path=manifest_path)
        assert manifest.entries[0].expert_path is None

    def test_manifest_missing_key(self, tmp_path):
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text(json.dumps([{"recording_id": "x"}]), encoding="utf-8")
        with pytest.raises(ManifestError):
            discover(manifest_path=manifest_path)

    def test_manifest_invalid_json(self, tmp_path):
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text("{", encoding="utf-8")
        with pytest.raises(ManifestError):
            discover(manifest_path=manifest_path)

    def test_manifest_dangling_path(self, tmp_path):
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text(
            json.dumps(
                [
                    {
                        "recording_id": "x",
                        "machine_path": "gone.machine.jsonl",
                        "meta_path": "gone.meta.json",
                    }
                ]
            ),
            encoding="utf-8",
        )
        with pytest.raises(MissingFile):
            discover(manifest_path=manifest_path)

    def test_duplicate_ids_rejected(self, tmp_path):
        entry = ManifestEntry("same", tmp_path / "a", tmp_path / "b")
        with pytest.raises(ManifestError):
            CorpusManifest(entries=(entry, entry))

    def test_entries_sorted(self, tmp_path):
        entries = (
            ManifestEntry("zz", tmp_path / "a", tmp_path / "b"),
            ManifestEntry("aa", tmp_path / "a", tmp_path / "b"),
        )
        manifest = CorpusManifest(entries=entries)
        assert [e.recording_id for e in manifest.entries] == ["aa", "zz"]


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(response_window=0.0)
        with pytest.raises(ValueError):
            RunConfig(parallelism=0)

    def test_semantic_dict_excludes_execution_fields(self):
        cfg = RunConfig(parallelism=8, output_dir="somewhere")
        data = cfg.semantic_dict()
        assert "parallelism" not in data and "output_dir" not in data
        assert data["response_window"] == 2.5

    def test_from_mapping_with_overrides(self):
        data = {"response_window": 3.0, "align": {"gap_penalty": 0.1}}
        cfg = RunConfig.from_mapping(data, ld_window=30.0, response_window=None)
        assert cfg.response_window == 3.0  # None override is skipped
        assert cfg.ld_window == 30.0
        assert cfg.align.gap_penalty == 0.1

    def test_from_mapping_defaults(self):
        cfg = RunConfig.from_mapping({})
        assert cfg == RunConfig()


class TestRunPipeline:
    def test_weather_fixture_end_to_end(self, tmp_path):
        syn.write_weather_recording(tmp_path)
        manifest = discover(root_dir=tmp_path)
        result = run_pipeline(manifest, RunConfig())
        assert result.corpus["n_recordings"] == 1
        assert result.corpus["n_failed"] == 0
        assert result.corpus["n_machine_utterances"] == 10
        assert result.corpus["n_expert_utterances"] == 10
        # two roles for each of machine and expert
        assert len(result.features) == 4
        assert result.reliability is not None
        assert result.reliability.overall.accuracy == 1.0
        assert result.errors == ()

    def test_features_only_without_expert(self, tmp_path):
        root = corpus_dir(tmp_path, n=2, with_expert=False)
        result = run_pipeline(discover(root_dir=root), RunConfig())
        assert result.reliability is None
        assert "expert" not in result.aggregate
        assert len(result.features) == 4  # two roles per recording, machine only

    def test_bad_recording_is_isolated(self, tmp_path):
        root = corpus_dir(tmp_path, n=3)
        (root / "rec01.machine.jsonl").write_text("{broken\n", encoding="utf-8")
        result = run_pipeline(discover(root_dir=root), RunConfig())
        assert result.corpus["n_recordings"] == 2
        assert result.corpus["n_failed"] == 1
        assert [e.recording_id for e in result.errors] == ["rec01"]
        assert result.errors[0].stage == "ingest"
        survivor_ids = {s.recording_id for s in result.features}
        assert survivor_ids == {"rec00", "rec02"}

    def test_damaged_run_matches_clean_subset(self, tmp_path):
        root_a = corpus_dir(tmp_path / "a", n=3, seed=5)
        (root_a / "rec01.machine.jsonl").write_text("nonsense\n", encoding="utf-8")
        root_b = corpus_dir(tmp_path / "b", n=3, seed=5)
        (root_b / "rec01.machine.jsonl").unlink()
        (root_b / "rec01.expert.tsv").unlink()
        (root_b / "rec01.meta.json").unlink()
        damaged = run_pipeline(discover(root_dir=root_a), RunConfig())
        clean = run_pipeline(discover(root_dir=root_b), RunConfig())
        assert damaged.features == clean.features
        assert damaged.reliability == clean.reliability
        assert damaged.aggregate == clean.aggregate

    def test_expert_failure_keeps_machine_features(self, tmp_path):
        root = corpus_dir(tmp_path, n=1)
        (root / "rec00.expert.tsv").write_text("bad header\n", encoding="utf-8")
        result = run_pipeline(discover(root_dir=root), RunConfig())
        assert [e.stage for e in result.errors] == ["expert"]
        assert result.corpus["n_recordings"] == 1
        assert len(result.features) == 2  # machine side only
        assert result.reliability is None

    def test_repeat_runs_identical(self, tmp_path):
        root = corpus_dir(tmp_path, n=3, seed=9)
        manifest = discover(root_dir=root)
        first = run_pipeline(manifest, RunConfig())
        second = run_pipeline(manifest, RunConfig())
        assert first.to_dict() == second.to_dict()

    def test_worker_count_does_not_change_output(self, tmp_path):
        root = corpus_dir(tmp_path, n=4, seed=11)
        manifest = discover(root_dir=root)
        serial = run_pipeline(manifest, RunConfig(parallelism=1))
        parallel = run_pipeline(manifest, RunConfig(parallelism=2))
        assert serial.to_dict() == parallel.to_dict()

    def test_json_round_trip(self, tmp_path):
        root = corpus_dir(tmp_path, n=2, seed=13)
        result = run_pipeline(discover(root_dir=root), RunConfig())
        clone = PipelineResult.from_dict(json.loads(json.dumps(result.to_dict())))
        assert clone == result

    def test_aggregate_utterance_ratio(self, tmp_path):
        rows_teacher = [
            {"start": 3.0 * i, "end": 3.0 * i + 1, "text": "w", "speaker": "teacher"}
            for i in range(6)
        ]
        rows_child = [
            {"start": 3.0 * i + 1.5, "end": 3.0 * i + 2, "text": "w", "speaker": "child"}
            for i in range(3)
        ]
        rows = sorted(rows_teacher + rows_child, key=lambda r: r["start"])
        syn.write_recording(tmp_path, "ratio", rows, duration_minutes=1.0)
        result = run_pipeline(discover(root_dir=tmp_path), RunConfig())
        assert result.aggregate["machine"]["teacher_child_utterance_ratio"] == 2.0


class TestEmitReport:
    def test_csv_file_set(self, tmp_path):
        syn.write_weather_recording(tmp_path / "data")
        result = run_pipeline(discover(root_dir=tmp_path / "data"), RunConfig())
        out = tmp_path / "out"
        written = emit_report(result, out, format="csv")
        names = sorted(p.name for p in written)
        assert names == [
            "aggregate_features.csv",
            "features.csv",
            "icc.csv",
            "reliability_per_recording.csv",
            "results.json",
        ]
        header = (out / "reliability_per_recording.csv").read_text().splitlines()[0]
        assert header == ",".join(RELIABILITY_COLUMNS)
        header = (out / "icc.csv").read_text().splitlines()[0]
        assert header == ",".join(ICC_COLUMNS)
        header = (out / "aggregate_features.csv").read_text().splitlines()[0]
        assert header == ",".join(AGGREGATE_COLUMNS)

    def test_json_format_writes_results_only(self, tmp_path):
        syn.write_weather_recording(tmp_path / "data")
        result = run_pipeline(discover(root_dir=tmp_path / "data"), RunConfig())
        written = emit_report(result, tmp_path / "out", format="json")
        assert [p.name for p in written] == ["results.json"]

    def test_errors_file_only_when_failures(self, tmp_path):
        root = corpus_dir(tmp_path / "data", n=2)
        (root / "rec00.machine.jsonl").write_text("}{", encoding="utf-8")
        result = run_pipeline(discover(root_dir=root), RunConfig())
        written = emit_report(result, tmp_path / "out", format="json")
        assert sorted(p.name for p in written) == ["errors.json", "results.json"]
        errors = json.loads((tmp_path / "out" / "errors.json").read_text())
        assert errors[0]["recording_id"] == "rec00"

    def test_results_json_round_trips(self, tmp_path):
        syn.write_weather_recording(tmp_path / "data")
        result = run_pipeline(discover(root_dir=tmp_path / "data"), RunConfig())
        emit_report(result, tmp_path / "out", format="json")
        data = json.loads((tmp_path / "out" / "results.json").read_text())
        assert PipelineResult.from_dict(data) == result

    def test_csv_cells_rounded_to_three_decimals(self, tmp_path):
        syn.write_weather_recording(tmp_path / "data")
        result = run_pipeline(discover(root_dir=tmp_path / "data"), RunConfig())
        emit_report(result, tmp_path / "out", format="csv")
        features_csv = (tmp_path / "out" / "features.csv").read_text()
        assert "6.667" in features_csv  # teacher question MLU of 20/3
        assert "6.6666" not in features_csv

    def test_reliability_table_summary_rows(self, tmp_path):
        syn.write_weather_recording(tmp_path / "data")
        result = run_pipeline(discover(root_dir=tmp_path / "data"), RunConfig())
        rows = reliability_table(result.reliability)
        assert rows[-2][0] == "Time-Weighted Mean"
        assert rows[-1][0] == "Overall"
        assert rows[-1][1] is None  # pooled row has no duration
        assert rows[-2][1] == pytest.approx(1.0)  # fixture is one minute long

    def test_icc_table_sorted_by_feature(self, tmp_path):
        syn.write_weather_recording(tmp_path / "data")
        result = run_pipeline(discover(root_dir=tmp_path / "data"), RunConfig())
        names = [row[0] for row in icc_table(result.reliability)]
        assert names == sorted(names)

    def test_bad_format_rejected(self, tmp_path):
        syn.write_weather_recording(tmp_path / "data")
        result = run_pipeline(discover(root_dir=tmp_path / "data"), RunConfig())
        with pytest.raises(ValueError):
            emit_report(result, tmp_path / "out", format="xlsx")


class TestCellFormat:
    def test_rounding(self):
        assert _fmt(1 / 3) == "0.333"
        assert _fmt(5 / 6) == "0.833"
        assert _fmt(2.0) == "2.0"

    def test_none_blank(self):
        assert _fmt(None) == ""

    def test_bool_lowercase(self):
        assert _fmt(True) == "true"

    def test_int_verbatim(self):
        assert _fmt(42) == "42"
