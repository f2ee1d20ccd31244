"""Command-line behavior: verbs, flags, exit codes, artifacts, logging."""

import json
import subprocess
import sys

import pytest

import synthetic as syn
from talkmetrics.cli import EXIT_FATAL, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, main


@pytest.fixture()
def weather_dir(tmp_path):
    syn.write_weather_recording(tmp_path / "data")
    return tmp_path / "data"


class TestUsageErrors:
    def test_no_verb(self, capsys):
        assert main([]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_unknown_verb(self, capsys):
        assert main(["destroy"]) == EXIT_USAGE

    def test_corpus_flags_required(self, capsys):
        assert main(["batch", "--out", "x"]) == EXIT_USAGE
        assert "exactly one of --root or --manifest" in capsys.readouterr().err

    def test_corpus_flags_exclusive(self, tmp_path, capsys):
        code = main(
            ["batch", "--root", str(tmp_path), "--manifest", str(tmp_path / "m.json"),
             "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_USAGE

    def test_bad_response_window(self, tmp_path, capsys):
        code = main(
            ["features", "--root", str(tmp_path), "--out", str(tmp_path / "out"),
             "--response-window", "-1"]
        )
        assert code == EXIT_USAGE

    def test_bad_workers(self, tmp_path):
        code = main(
            ["batch", "--root", str(tmp_path), "--out", str(tmp_path / "out"),
             "--workers", "0"]
        )
        assert code == EXIT_USAGE

    def test_bad_format(self, tmp_path):
        code = main(
            ["batch", "--root", str(tmp_path), "--out", str(tmp_path / "out"),
             "--format", "xml"]
        )
        assert code == EXIT_USAGE

    def test_missing_out(self, tmp_path):
        assert main(["batch", "--root", str(tmp_path)]) == EXIT_USAGE


class TestFatalErrors:
    def test_missing_root(self, tmp_path, capsys):
        code = main(
            ["batch", "--root", str(tmp_path / "nowhere"), "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_FATAL
        assert "talkmetrics: error:" in capsys.readouterr().err

    def test_empty_root(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code = main(
            ["batch", "--root", str(tmp_path / "empty"), "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_FATAL

    def test_report_missing_file(self, tmp_path, capsys):
        code = main(["report", str(tmp_path / "gone.json"), "--out", str(tmp_path / "out")])
        assert code == EXIT_FATAL

    def test_report_not_a_results_file(self, tmp_path, capsys):
        path = tmp_path / "junk.json"
        path.write_text('{"surprise": true}', encoding="utf-8")
        code = main(["report", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_FATAL
        assert "not a results file" in capsys.readouterr().err


class TestIngestCheck:
    def test_clean_corpus(self, weather_dir, capsys):
        assert main(["ingest-check", "--root", str(weather_dir)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "weather: ok" in out
        assert "10 machine" in out

    def test_failure_exits_partial(self, weather_dir, capsys):
        (weather_dir / "weather.machine.jsonl").write_text("{broken\n", encoding="utf-8")
        assert main(["ingest-check", "--root", str(weather_dir)]) == EXIT_PARTIAL
        assert "FAIL" in capsys.readouterr().out

    def test_json_output(self, weather_dir, capsys):
        code = main(["ingest-check", "--root", str(weather_dir), "--format", "json"])
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["n_checked"] == 1 and report["n_failed"] == 0
        assert report["recordings"][0]["ok"]

    def test_report_file(self, weather_dir, tmp_path, capsys):
        out = tmp_path / "check"
        assert main(["ingest-check", "--root", str(weather_dir), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "ingest_report.json").read_text())
        assert report["recordings"][0]["n_expert_utterances"] == 10

    def test_validation_findings_reported(self, tmp_path, capsys):
        rows = [
            {"start": 0.0, "end": 5.0, "text": "first", "speaker": "teacher"},
            {"start": 3.0, "end": 6.0, "text": "second", "speaker": "teacher"},
        ]
        syn.write_recording(tmp_path / "data", "noisy", rows)
        code = main(["ingest-check", "--root", str(tmp_path / "data"), "--format", "json"])
        assert code == EXIT_OK  # findings are warnings, not failures
        report = json.loads(capsys.readouterr().out)
        codes = [f["code"] for f in report["recordings"][0]["findings"]]
        assert codes == ["overlap"]


class TestAlign:
    def test_writes_audit_files(self, weather_dir, tmp_path, capsys):
        out = tmp_path / "aligned"
        assert main(["align", "--root", str(weather_dir), "--out", str(out)]) == EXIT_OK
        lines = (out / "weather.alignment.jsonl").read_text().splitlines()
        assert len(lines) == 10
        assert "10 pairs" in capsys.readouterr().out

    def test_no_expert_anywhere_is_fatal(self, tmp_path, capsys):
        rows = [{"start": 0.0, "end": 1.0, "text": "x", "speaker": "teacher"}]
        syn.write_recording(tmp_path / "data", "solo", rows)
        code = main(["align", "--root", str(tmp_path / "data"), "--out", str(tmp_path / "out")])
        assert code == EXIT_FATAL

    def test_broken_expert_is_partial(self, weather_dir, tmp_path, capsys):
        (weather_dir / "weather.expert.tsv").write_text("wrong\n", encoding="utf-8")
        code = main(["align", "--root", str(weather_dir), "--out", str(tmp_path / "out")])
        assert code == EXIT_PARTIAL


class TestFeatures:
    def test_csv_artifact(self, weather_dir, tmp_path):
        out = tmp_path / "feat"
        assert main(["features", "--root", str(weather_dir), "--out", str(out)]) == EXIT_OK
        lines = (out / "features.csv").read_text().splitlines()
        assert lines[0].startswith("recording_id,source,role,")
        assert len(lines) == 5  # header + two roles for each source

    def test_json_artifact(self, weather_dir, tmp_path):
        out = tmp_path / "feat"
        code = main(
            ["features", "--root", str(weather_dir), "--out", str(out), "--format", "json"]
        )
        assert code == EXIT_OK
        data = json.loads((out / "features.json").read_text())
        assert len(data["features"]) == 4

    def test_response_window_flag_changes_results(self, weather_dir, tmp_path):
        out_narrow = tmp_path / "narrow"
        out_wide = tmp_path / "wide"
        main(["features", "--root", str(weather_dir), "--out", str(out_narrow),
              "--response-window", "0.1"])
        main(["features", "--root", str(weather_dir), "--out", str(out_wide),
              "--response-window", "10"])
        narrow = (out_narrow / "features.csv").read_text()
        wide = (out_wide / "features.csv").read_text()
        assert narrow != wide


class TestReliability:
    def test_csv_artifacts(self, weather_dir, tmp_path):
        out = tmp_path / "rel"
        assert main(["reliability", "--root", str(weather_dir), "--out", str(out)]) == EXIT_OK
        rows = (out / "reliability_per_recording.csv").read_text().splitlines()
        assert rows[0] == "recording_id,duration_minutes,f1_weighted,accuracy,kappa,wer_teacher,wer_child"
        assert rows[1].startswith("weather,")
        assert (out / "icc.csv").is_file()

    def test_machine_only_corpus_is_fatal(self, tmp_path, capsys):
        rows = [{"start": 0.0, "end": 1.0, "text": "x", "speaker": "teacher"}]
        syn.write_recording(tmp_path / "data", "solo", rows)
        code = main(
            ["reliability", "--root", str(tmp_path / "data"), "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_FATAL

    def test_json_artifact(self, weather_dir, tmp_path):
        out = tmp_path / "rel"
        code = main(
            ["reliability", "--root", str(weather_dir), "--out", str(out), "--format", "json"]
        )
        assert code == EXIT_OK
        data = json.loads((out / "reliability.json").read_text())
        assert data["reliability"]["overall"]["accuracy"] == 1.0


class TestBatch:
    def test_full_run(self, weather_dir, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["batch", "--root", str(weather_dir), "--out", str(out)]) == EXIT_OK
        for name in (
            "results.json",
            "features.csv",
            "reliability_per_recording.csv",
            "icc.csv",
            "aggregate_features.csv",
        ):
            assert (out / name).is_file(), name
        assert "processed 1 recordings (0 failed)" in capsys.readouterr().out

    def test_partial_failure(self, tmp_path, capsys):
        syn.write_weather_recording(tmp_path / "data", "good")
        syn.write_weather_recording(tmp_path / "data", "bad")
        (tmp_path / "data" / "bad.machine.jsonl").write_text("][", encoding="utf-8")
        out = tmp_path / "out"
        code = main(["batch", "--root", str(tmp_path / "data"), "--out", str(out)])
        assert code == EXIT_PARTIAL
        errors = json.loads((out / "errors.json").read_text())
        assert errors[0]["recording_id"] == "bad"

    def test_manifest_input(self, weather_dir, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps(
                [
                    {
                        "recording_id": "weather",
                        "machine_path": str(weather_dir / "weather.machine.jsonl"),
                        "meta_path": str(weather_dir / "weather.meta.json"),
                        "expert_path": str(weather_dir / "weather.expert.tsv"),
                    }
                ]
            ),
            encoding="utf-8",
        )
        out = tmp_path / "out"
        assert main(["batch", "--manifest", str(manifest), "--out", str(out)]) == EXIT_OK

    def test_config_file_and_flag_override(self, weather_dir, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"response_window": 4.0}), encoding="utf-8")
        out = tmp_path / "out"
        main(["batch", "--root", str(weather_dir), "--out", str(out),
              "--config", str(config)])
        results = json.loads((out / "results.json").read_text())
        assert results["config"]["response_window"] == 4.0
        out2 = tmp_path / "out2"
        main(["batch", "--root", str(weather_dir), "--out", str(out2),
              "--config", str(config), "--response-window", "1.5"])
        results = json.loads((out2 / "results.json").read_text())
        assert results["config"]["response_window"] == 1.5

    def test_worker_count_leaves_output_unchanged(self, tmp_path):
        for i in range(3):
            syn.write_weather_recording(tmp_path / "data", f"rec{i}")
        out1 = tmp_path / "serial"
        out2 = tmp_path / "parallel"
        assert main(["batch", "--root", str(tmp_path / "data"), "--out", str(out1),
                     "--workers", "1"]) == EXIT_OK
        assert main(["batch", "--root", str(tmp_path / "data"), "--out", str(out2),
                     "--workers", "2"]) == EXIT_OK
        for name in ("results.json", "features.csv", "aggregate_features.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestReport:
    def test_round_trip_reproduces_files(self, weather_dir, tmp_path):
        first = tmp_path / "first"
        second = tmp_path / "second"
        assert main(["batch", "--root", str(weather_dir), "--out", str(first)]) == EXIT_OK
        code = main(["report", str(first / "results.json"), "--out", str(second)])
        assert code == EXIT_OK
        for name in (
            "results.json",
            "features.csv",
            "reliability_per_recording.csv",
            "icc.csv",
            "aggregate_features.csv",
        ):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_accepts_externally_built_results(self, tmp_path):
        # a results file whose metrics came from somewhere else entirely
        # must still render; only the shape matters
        from test_acceptance import external_results_payload

        path = tmp_path / "results.json"
        path.write_text(json.dumps(external_results_payload()), encoding="utf-8")
        out = tmp_path / "out"
        assert main(["report", str(path), "--out", str(out)]) == EXIT_OK
        assert (out / "reliability_per_recording.csv").is_file()


class TestLogging:
    def test_unknown_level_noted(self, weather_dir, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("WSW_LOG", "shout")
        out = tmp_path / "out"
        assert main(["batch", "--root", str(weather_dir), "--out", str(out)]) == EXIT_OK
        assert "unknown WSW_LOG" in capsys.readouterr().err

    def test_known_levels_accepted(self, weather_dir, tmp_path, monkeypatch, capsys):
        for level in ("error", "warn", "info", "debug"):
            monkeypatch.setenv("WSW_LOG", level)
            out = tmp_path / f"out-{level}"
            assert main(["batch", "--root", str(weather_dir), "--out", str(out)]) == EXIT_OK
            assert "unknown WSW_LOG" not in capsys.readouterr().err


class TestConsoleEntryPoint:
    def test_module_invocation(self, weather_dir, tmp_path):
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "talkmetrics.cli", "batch",
             "--root", str(weather_dir), "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == EXIT_OK, proc.stderr
        assert (out / "results.json").is_file()

    def test_usage_exit_code_from_subprocess(self):
        proc = subprocess.run(
            [sys.executable, "-m", "talkmetrics.cli"], capture_output=True, text=True
        )
        assert proc.returncode == EXIT_USAGE
