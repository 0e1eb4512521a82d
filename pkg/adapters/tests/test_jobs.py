"""Job contracts: sentence merging, grids, determinism, failure modes."""
from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import read_store_raw

from stepmine_adapters.backends import HashedBackend, Word, get_backend
from stepmine_adapters.errors import (
    DecodeFailure,
    DuplicateKey,
    JobConfigError,
    ModelUnavailable,
)
from stepmine_adapters.jobs import (
    ExtractorJob,
    embed_frames,
    embed_scene,
    embed_texts,
    merge_words,
    transcribe,
)


class TestMergeWords:
    def test_punctuation_and_gap_flushes(self):
        words = [
            Word("Hello", 0.0, 0.4),
            Word("world.", 0.5, 0.9),
            Word("Next", 3.5, 3.9),   # 2.6 s gap -> previous already flushed
            Word("part", 4.0, 4.3),
            Word("here", 8.0, 8.2),   # 3.7 s gap flushes "Next part"
        ]
        assert merge_words(words) == [
            {"start": 0.0, "end": 0.9, "text": "Hello world."},
            {"start": 3.5, "end": 4.3, "text": "Next part"},
            {"start": 8.0, "end": 8.2, "text": "here"},
        ]

    def test_exact_two_second_gap_does_not_flush(self):
        words = [Word("a", 0.0, 1.0), Word("b", 3.0, 3.5)]
        assert merge_words(words) == [{"start": 0.0, "end": 3.5, "text": "a b"}]

    def test_question_and_bang_end_sentences(self):
        words = [Word("ok?", 0.0, 0.5), Word("go!", 0.6, 1.0), Word("now", 1.1, 1.4)]
        assert [s["text"] for s in merge_words(words)] == ["ok?", "go!", "now"]

    def test_out_of_order_input_is_sorted(self):
        words = [Word("second", 5.0, 5.5), Word("first.", 0.0, 0.5)]
        assert [s["text"] for s in merge_words(words)] == ["first.", "second"]

    def test_millisecond_rounding_and_whitespace(self):
        words = [Word("  spaced \t out ", 0.123456, 0.987654)]
        assert merge_words(words) == [
            {"start": 0.123, "end": 0.988, "text": "spaced out"}
        ]

    def test_blank_words_dropped(self):
        assert merge_words([Word("   ", 0.0, 0.1)]) == []
        assert merge_words([]) == []


class TestTranscribe:
    def test_sidecar_to_sentence_json(self, tmp_path):
        sidecar = tmp_path / "clip.json"
        sidecar.write_text(
            json.dumps(
                [
                    {"word": "Mix", "start": 1.0, "end": 1.3},
                    {"word": "well.", "start": 1.4, "end": 1.8},
                    {"word": "Serve", "start": 9.0, "end": 9.4},
                ]
            ),
            encoding="utf-8",
        )
        out = transcribe(ExtractorJob(sidecar, tmp_path / "out.json"))
        expected = [
            {"start": 1.0, "end": 1.8, "text": "Mix well."},
            {"start": 9.0, "end": 9.4, "text": "Serve"},
        ]
        assert out.read_bytes() == (
            json.dumps(expected, ensure_ascii=False, indent=2) + "\n"
        ).encode("utf-8")

    def test_silent_clip_yields_empty_array(self, tmp_path):
        silent = tmp_path / "quiet.wav"
        silent.write_bytes(b"")
        out = transcribe(ExtractorJob(silent, tmp_path / "out.json"))
        assert out.read_bytes() == b"[]\n"

    def test_empty_sidecar_yields_empty_array(self, tmp_path):
        sidecar = tmp_path / "clip.json"
        sidecar.write_text("[]", encoding="utf-8")
        out = transcribe(ExtractorJob(sidecar, tmp_path / "out.json"))
        assert out.read_bytes() == b"[]\n"

    def test_audio_bytes_are_deterministic_and_monotone(self, tmp_path):
        clip = tmp_path / "talk.wav"
        clip.write_bytes(b"fake audio payload 123")
        out1 = transcribe(ExtractorJob(clip, tmp_path / "a.json"))
        out2 = transcribe(ExtractorJob(clip, tmp_path / "b.json"))
        assert out1.read_bytes() == out2.read_bytes()
        sentences = json.loads(out1.read_text(encoding="utf-8"))
        assert sentences, "hash backend should produce words for non-empty audio"
        starts = [s["start"] for s in sentences]
        assert starts == sorted(starts)
        assert all(s["end"] >= s["start"] for s in sentences)
        other = tmp_path / "other.wav"
        other.write_bytes(b"different payload")
        out3 = transcribe(ExtractorJob(other, tmp_path / "c.json"))
        assert out3.read_bytes() != out1.read_bytes()

    def test_bad_sidecar_rows(self, tmp_path):
        sidecar = tmp_path / "clip.json"
        for payload in (
            '{"not": "a list"}',
            '[{"word": "x", "start": 1.0}]',
            '[{"word": "x", "start": 2.0, "end": 1.0}]',
            '[{"word": "x", "start": -1.0, "end": 1.0}]',
            "not json",
        ):
            sidecar.write_text(payload, encoding="utf-8")
            with pytest.raises(DecodeFailure):
                transcribe(ExtractorJob(sidecar, tmp_path / "out.json"))

    def test_missing_input(self, tmp_path):
        with pytest.raises(JobConfigError, match="does not exist"):
            transcribe(ExtractorJob(tmp_path / "nope.wav", tmp_path / "out.json"))

    def test_sidecar_never_needs_a_model(self, tmp_path):
        # Word timestamps are already on disk, so a heavyweight ASR model
        # configured in the job must not be constructed at all.
        sidecar = tmp_path / "clip.json"
        sidecar.write_text('[{"word": "hi.", "start": 0.0, "end": 0.4}]', encoding="utf-8")
        out = transcribe(ExtractorJob(sidecar, tmp_path / "out.json", model="whisperx"))
        assert json.loads(out.read_text(encoding="utf-8"))[0]["text"] == "hi."

    def test_audio_with_unavailable_model(self, tmp_path):
        clip = tmp_path / "talk.wav"
        clip.write_bytes(b"audio")
        with pytest.raises(ModelUnavailable):
            transcribe(ExtractorJob(clip, tmp_path / "out.json", model="whisperx"))


class TestEmbedJobs:
    def test_frame_grid_at_default_rate(self, frames_dir, tmp_path):
        out = embed_frames(ExtractorJob(frames_dir, tmp_path / "f.shte", dim=8))
        raw = read_store_raw(out)
        assert raw["kind"] == 0
        assert raw["dim"] == 8
        assert raw["normalized"] is True
        assert raw["ids"] == [("clip_frames", float(i)) for i in range(10)]

    def test_frame_grid_at_two_hertz(self, frames_dir, tmp_path):
        job = ExtractorJob(
            frames_dir, tmp_path / "f.shte", frame_rate_hz=2.0, video_id="clip"
        )
        raw = read_store_raw(embed_frames(job))
        assert raw["ids"] == [("clip", i / 2.0) for i in range(10)]

    def test_scene_store_kind_and_same_grid(self, frames_dir, tmp_path):
        f = read_store_raw(embed_frames(ExtractorJob(frames_dir, tmp_path / "f.shte")))
        s = read_store_raw(embed_scene(ExtractorJob(frames_dir, tmp_path / "s.shte")))
        assert s["kind"] == 2
        assert s["ids"] == f["ids"]
        # Same hashed backend family, but the stores are independent models
        # in real life; identical inputs giving identical vectors is fine.

    def test_frame_rows_are_unit_and_deterministic(self, frames_dir, tmp_path):
        a = embed_frames(ExtractorJob(frames_dir, tmp_path / "a.shte"))
        b = embed_frames(ExtractorJob(frames_dir, tmp_path / "b.shte"))
        assert a.read_bytes() == b.read_bytes()
        raw = read_store_raw(a)
        norms = np.linalg.norm(raw["vectors"].astype(np.float64), axis=1)
        assert float(np.max(np.abs(norms - 1.0))) < 1e-4

    def test_empty_or_missing_frame_dir(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(JobConfigError, match="no image files"):
            embed_frames(ExtractorJob(empty, tmp_path / "f.shte"))
        with pytest.raises(JobConfigError, match="not a directory"):
            embed_frames(ExtractorJob(tmp_path / "gone", tmp_path / "f.shte"))

    def test_texts_store_keys_in_order(self, tmp_path):
        src = tmp_path / "prompts.json"
        src.write_text(
            json.dumps(
                [
                    {"key": "tasks#0", "text": "Carve a spoon"},
                    {"key": "tasks#1", "text": "Fold a crane"},
                ]
            ),
            encoding="utf-8",
        )
        raw = read_store_raw(embed_texts(ExtractorJob(src, tmp_path / "t.shte", dim=6)))
        assert raw["kind"] == 1
        assert raw["ids"] == ["tasks#0", "tasks#1"]
        assert raw["dim"] == 6

    def test_duplicate_text_keys_rejected(self, tmp_path):
        src = tmp_path / "prompts.json"
        src.write_text(
            json.dumps([{"key": "k", "text": "a"}, {"key": "k", "text": "b"}]),
            encoding="utf-8",
        )
        with pytest.raises(DuplicateKey):
            embed_texts(ExtractorJob(src, tmp_path / "t.shte"))

    def test_malformed_text_input(self, tmp_path):
        src = tmp_path / "prompts.json"
        src.write_text("[]", encoding="utf-8")
        with pytest.raises(JobConfigError, match="non-empty"):
            embed_texts(ExtractorJob(src, tmp_path / "t.shte"))
        src.write_text('[{"key": 3, "text": "a"}]', encoding="utf-8")
        with pytest.raises(DecodeFailure):
            embed_texts(ExtractorJob(src, tmp_path / "t.shte"))
        src.write_text("oops", encoding="utf-8")
        with pytest.raises(DecodeFailure):
            embed_texts(ExtractorJob(src, tmp_path / "t.shte"))


class TestJobAndBackendConfig:
    def test_job_validation(self, tmp_path):
        with pytest.raises(JobConfigError, match="frame_rate_hz"):
            ExtractorJob(tmp_path / "x", tmp_path / "y", frame_rate_hz=0.0)
        with pytest.raises(JobConfigError, match="frame_rate_hz"):
            ExtractorJob(tmp_path / "x", tmp_path / "y", frame_rate_hz=-1.0)
        with pytest.raises(JobConfigError, match="dim"):
            ExtractorJob(tmp_path / "x", tmp_path / "y", dim=0)

    def test_video_id_defaults_to_stem(self, tmp_path):
        job = ExtractorJob(tmp_path / "howto_042.wav", tmp_path / "out.json")
        assert job.video_id == "howto_042"
        job = ExtractorJob(tmp_path / "a.wav", tmp_path / "o.json", video_id="custom")
        assert job.video_id == "custom"

    def test_unknown_model_name(self, tmp_path):
        with pytest.raises(ValueError, match="unknown model"):
            ExtractorJob(tmp_path / "x.wav", tmp_path / "y.json", model="nonsense").make_backend()

    def test_heavy_models_fail_only_on_construction(self):
        for name in ("whisperx", "dfn-clip", "dinov2"):
            with pytest.raises(ModelUnavailable):
                get_backend(name)

    def test_hashed_backend_embeddings(self):
        b = HashedBackend(dim=12)
        v1 = b.embed_text("chop the onions")
        v2 = b.embed_text("chop the onions")
        v3 = b.embed_text("dice the carrots")
        np.testing.assert_array_equal(v1, v2)
        assert not np.array_equal(v1, v3)
        assert v1.shape == (12,)
        assert abs(np.linalg.norm(v1) - 1.0) < 1e-9
        # image and text spaces are salted apart
        assert not np.array_equal(
            b.embed_text("same bytes"), b.embed_image(b"same bytes")
        )
