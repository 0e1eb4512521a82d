import json
from pathlib import Path

import pytest

from conftest import E2E_VIDEOS, load_e2e_transcript, make_workspace, run_cli

from stepmine.dataset import read_manifest
from stepmine.transcript import TranscriptFormat, serialize_transcript

INSTRUCTIONAL = ("knots", "omelette", "potato")


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full pipeline run; tests inspect its artifacts."""
    config = make_workspace(tmp_path_factory.mktemp("cli") / "ws")
    codes = {
        cmd: run_cli(cmd, "--config", str(config))
        for cmd in (
            "parse",
            "filter",
            "extract",
            "align",
            "assemble",
            "stats",
            "split",
            "sample",
            "eval",
        )
    }
    out = config.parent / "out"
    return config, out, codes


def test_exit_codes(pipeline):
    _, _, codes = pipeline
    expected = {cmd: 0 for cmd in codes}
    expected["extract"] = 3  # one video fails step validation
    assert codes == expected


def test_parse_writes_canonical_transcripts(pipeline):
    _, out, _ = pipeline
    files = sorted(
        p.name for p in (out / "parse").glob("*.json") if not p.name.startswith("_")
    )
    assert files == [f"{v}.json" for v in E2E_VIDEOS]
    for video_id in E2E_VIDEOS:
        expected = serialize_transcript(
            load_e2e_transcript(video_id), TranscriptFormat.SENTENCE_JSON
        )
        assert (out / "parse" / f"{video_id}.json").read_bytes() == expected


def test_filter_verdicts(pipeline):
    _, out, _ = pipeline
    lines = (out / "filter" / "verdicts.jsonl").read_text().splitlines()
    verdicts = {json.loads(ln)["video_id"]: json.loads(ln) for ln in lines}
    assert sorted(verdicts) == sorted(E2E_VIDEOS)
    assert [json.loads(ln)["video_id"] for ln in lines] == sorted(E2E_VIDEOS)
    assert verdicts["gamereview"]["is_instructional"] is False
    for video_id in INSTRUCTIONAL + ("birdhouse",):
        assert verdicts[video_id]["is_instructional"] is True
        assert verdicts[video_id]["explanation"]


def test_extract_steps_and_error_ledger(pipeline):
    _, out, _ = pipeline
    present = sorted(p.stem for p in (out / "extract").glob("*.json"))
    present.remove("_cache")
    assert present == sorted(INSTRUCTIONAL)  # no gamereview, no birdhouse
    errors = [
        json.loads(ln)
        for ln in (out / "extract" / "errors.jsonl").read_text().splitlines()
    ]
    assert len(errors) == 1
    assert errors[0]["video_id"] == "birdhouse"
    assert errors[0]["error"] == "MalformedSteps"
    assert "EMPTY(2)" in errors[0]["message"]
    potato = json.loads((out / "extract" / "potato.json").read_text())
    assert len(potato["steps"]) == 6


def test_align_outputs(pipeline):
    _, out, _ = pipeline
    files = sorted(p.stem for p in (out / "align").glob("*.json"))
    files.remove("_cache")
    assert files == sorted(INSTRUCTIONAL)
    potato = json.loads((out / "align" / "potato.json").read_text())
    assert [s["frame_timestamp"] for s in potato["steps"]] == [
        16.0,
        33.0,
        47.0,
        66.0,
        97.0,
        112.0,
    ]
    assert potato["total_score"] == pytest.approx(6.0, abs=1e-4)


def test_assembled_manifest(pipeline):
    _, out, _ = pipeline
    manifest = read_manifest(out / "assemble" / "manifest.jsonl")
    assert [r.video_id for r in manifest.records] == ["knots", "omelette", "potato"]
    assert [r.task_id for r in manifest.records] == [2, 1, 0]
    assert [len(r.items) for r in manifest.records] == [3, 4, 6]
    potato = manifest.records[-1]
    assert potato.category == "Food and Entertaining"
    assert potato.items[0].instruction.startswith("Place")
    ts = [it.frame_timestamp for it in potato.items]
    assert ts == sorted(ts)


def test_stats_report(pipeline):
    _, out, _ = pipeline
    report = json.loads((out / "stats" / "report.json").read_text())
    assert report["n_sequences"] == 3
    assert report["steps_per_seq"]["mean"] == pytest.approx(13 / 3)
    assert report["length_histogram"] == {"3": 1, "4": 1, "6": 1}
    assert report["pct_len_2_to_16"] == 100.0
    assert report["category_distribution"] == {
        "Food and Entertaining": 2,
        "Hobbies and Crafts": 1,
    }
    table = (out / "stats" / "table.txt").read_text()
    assert "steps/sequence" in table and "category" in table


def test_split_artifacts(pipeline):
    _, out, _ = pipeline
    train = read_manifest(out / "split" / "train.jsonl", split="train")
    test = read_manifest(out / "split" / "test.jsonl", split="test")
    assert len(test.records) == 1 and len(train.records) == 2
    # two of three tasks are food tasks, so the single test task is one
    assert test.records[0].category == "Food and Entertaining"
    assert not {r.video_id for r in test.records} & {r.video_id for r in train.records}
    assert {r.video_id for r in test.records} | {r.video_id for r in train.records} == set(
        INSTRUCTIONAL
    )


def test_sample_windows(pipeline):
    _, out, _ = pipeline
    source = {
        r.video_id: [it.instruction for it in r.items]
        for r in read_manifest(out / "split" / "train.jsonl").records
    }
    lines = (out / "sample" / "windows.jsonl").read_text().splitlines()
    assert len(lines) == 8
    for ln in lines:
        payload = json.loads(ln)
        assert 2 <= payload["k"] <= 4
        record = payload["record"]
        got = [it["instruction"] for it in record["items"]]
        full = source[record["video_id"]]
        assert len(got) == min(payload["k"], len(full))
        start = full.index(got[0])
        assert full[start : start + len(got)] == got  # contiguous window


def test_eval_report_and_table(pipeline):
    _, out, _ = pipeline
    report = json.loads((out / "eval" / "report.json").read_text())
    assert report["step_faithfulness"] == 1.0
    assert report["scene_consistency"] == 1.0
    assert report["task_faithfulness"] == 1.0
    table = (out / "eval" / "table.txt").read_text()
    assert "source sequences" in table
    assert "random (expected)" in table
    source_row = next(ln for ln in table.splitlines() if ln.startswith("source"))
    assert source_row.count("1.00") == 3


def test_rerun_is_cached_and_byte_stable(tmp_path):
    config = make_workspace(tmp_path / "ws")
    assert run_cli("parse", "--config", str(config)) == 0
    target = tmp_path / "ws" / "out" / "parse" / "potato.json"
    before = (target.read_bytes(), target.stat().st_mtime_ns)
    assert run_cli("parse", "--config", str(config)) == 0
    assert (target.read_bytes(), target.stat().st_mtime_ns) == before  # skipped, not rewritten


def test_workers_flag_gives_identical_bytes(tmp_path):
    serial = make_workspace(tmp_path / "a", seed=7)
    threaded = make_workspace(tmp_path / "b", seed=7)
    run_cli("parse", "--config", str(serial))
    run_cli("parse", "--config", str(threaded), "--workers", "4")
    run_cli("filter", "--config", str(serial))
    run_cli("filter", "--config", str(threaded), "--workers", "4")
    for rel in ("parse/potato.json", "filter/verdicts.jsonl"):
        a = (tmp_path / "a" / "out" / rel).read_bytes()
        b = (tmp_path / "b" / "out" / rel).read_bytes()
        assert a == b


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("frobnicate")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc2:
        run_cli()
    assert exc2.value.code == 1


def test_missing_inputs_exit_2(tmp_path, capsys):
    config = make_workspace(tmp_path / "ws")
    code = run_cli("parse", "--config", str(config), "--transcripts-dir", str(tmp_path / "void"))
    assert code == 2
    assert "error" in capsys.readouterr().err.lower()
    assert run_cli("stats", "--config", str(config)) == 2  # no manifest assembled yet


def test_mock_gateway_missing_script_is_input_problem(tmp_path, capsys):
    config = make_workspace(tmp_path / "ws")
    (tmp_path / "ws" / "mock.json").write_text("{}")
    assert run_cli("parse", "--config", str(config)) == 0
    assert run_cli("filter", "--config", str(config)) == 3  # every video errors
    errors = (tmp_path / "ws" / "out" / "filter" / "errors.jsonl").read_text()
    assert len(errors.splitlines()) == len(E2E_VIDEOS)
    assert "ServiceError" in errors
