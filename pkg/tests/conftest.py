import json
import shutil
from pathlib import Path

import pytest

from stepmine.filtering import build_filter_prompt
from stepmine.llm_gateway import prompt_digest
from stepmine.step_extraction import build_step_prompt
from stepmine.transcript import TranscriptFormat, parse_transcript, transcript_excerpt

FIXTURES = Path(__file__).resolve().parent / "fixtures"
E2E = FIXTURES / "e2e"
STORES = FIXTURES / "stores"

_FMT = {
    ".srt": TranscriptFormat.SRT,
    ".vtt": TranscriptFormat.WEBVTT,
    ".json": TranscriptFormat.SENTENCE_JSON,
}

E2E_VIDEOS = ("birdhouse", "gamereview", "knots", "omelette", "potato")


def e2e_meta() -> dict:
    return json.loads((E2E / "videos.json").read_text(encoding="utf-8"))


def load_e2e_transcript(video_id: str):
    info = e2e_meta()[video_id]
    path = next(
        p for p in (E2E / "transcripts").iterdir() if p.stem == video_id
    )
    return parse_transcript(
        path.read_bytes(),
        _FMT[path.suffix],
        video_id=video_id,
        title=info["title"],
        duration_s=info["duration_s"],
    )


def build_mock_script() -> dict[str, str]:
    """Scripted gateway replies keyed by the digest of the live-built prompt,
    so any drift in the prompt templates shows up as a missing script entry
    instead of silently testing stale prompts."""
    script = {}
    for video_id in E2E_VIDEOS:
        t = load_e2e_transcript(video_id)
        filter_prompt = build_filter_prompt(t.title, transcript_excerpt(t, 6000))
        script[prompt_digest(filter_prompt)] = (
            E2E / "responses" / f"filter_{video_id}.txt"
        ).read_text(encoding="utf-8")
        if video_id != "gamereview":
            step_prompt = build_step_prompt(t.title, t)
            script[prompt_digest(step_prompt)] = (
                E2E / "responses" / f"steps_{video_id}.txt"
            ).read_text(encoding="utf-8")
    return script


def make_workspace(root: Path, seed: int = 20240501) -> Path:
    """Lay out a self-contained pipeline workspace and return its config path."""
    root.mkdir(parents=True, exist_ok=True)
    shutil.copytree(E2E / "transcripts", root / "transcripts")
    shutil.copy(E2E / "videos.json", root / "videos.json")
    (root / "mock.json").write_text(
        json.dumps(build_mock_script(), indent=2, sort_keys=True), encoding="utf-8"
    )
    cfg = {
        "transcripts_dir": str(root / "transcripts"),
        "metadata_path": str(root / "videos.json"),
        "stores_dir": str(STORES),
        "out_dir": str(root / "out"),
        "seed": seed,
        "split": {"n_test_tasks": 1, "per_task_quota": 1},
        "sample": {"count": 8, "k_max": 4},
        "gateway": {"mock_responses": str(root / "mock.json")},
        "eval": {"row_name": "source sequences", "with_random_baseline": True},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return config_path


@pytest.fixture
def workspace(tmp_path):
    return make_workspace(tmp_path / "ws")


def run_cli(*argv: str) -> int:
    from stepmine.cli import main

    return main(list(argv))
