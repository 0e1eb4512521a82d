"""Extraction jobs: one media input in, one interchange file out.

Each job function takes an :class:`ExtractorJob` and writes exactly one
artifact the downstream pipeline can load directly:

* :func:`transcribe`    -> sentence-JSON transcript
* :func:`embed_frames`  -> frame embedding store on the sampling grid
* :func:`embed_texts`   -> text embedding store keyed by caller-chosen ids
* :func:`embed_scene`   -> scene embedding store on the sampling grid

Frame and scene ids are ``(video_id, i / frame_rate_hz)`` for row ``i``, i.e.
a strictly increasing uniform grid starting at 0.0.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import Word, decode_words_json, get_backend
from .errors import DecodeFailure, DuplicateKey, JobConfigError
from .store_writer import KIND_FRAME, KIND_SCENE, KIND_TEXT, write_store

#: Silence longer than this between words ends the current sentence.
SENTENCE_GAP_S = 2.0
_SENTENCE_END = (".", "!", "?")
_IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".webp"}


@dataclass
class ExtractorJob:
    """Everything one extraction run needs.

    ``video_id`` defaults to the input path's stem; ``device`` is a hint the
    backend may ignore (the hashed backend always does).
    """

    input_path: Path
    out_path: Path
    model: str = "hashed"
    frame_rate_hz: float = 1.0
    device: str = "cpu"
    video_id: str = ""
    dim: int = 16
    backend_options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_path = Path(self.input_path)
        self.out_path = Path(self.out_path)
        if not (self.frame_rate_hz > 0):
            raise JobConfigError(f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")
        if self.dim < 1:
            raise JobConfigError(f"dim must be >= 1, got {self.dim}")
        if not self.video_id:
            self.video_id = self.input_path.stem
        if not self.video_id:
            raise JobConfigError("video_id is empty and cannot be inferred")

    def make_backend(self):
        return get_backend(self.model, dim=self.dim, device=self.device, **self.backend_options)


def _atomic_write(path: Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_bytes(data)
        tmp.replace(path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return path


def merge_words(words: list[Word]) -> list[dict]:
    """Group a word stream into sentence objects.

    A sentence closes when a word ends with sentence-final punctuation or when
    the following word starts more than :data:`SENTENCE_GAP_S` seconds after
    it ends.  Words are first sorted by time, so output starts never regress.
    Timestamps are rounded to milliseconds.
    """
    words = sorted(
        (w for w in words if w.word.strip()), key=lambda w: (w.start, w.end)
    )
    sentences: list[dict] = []
    current: list[Word] = []

    def flush():
        if current:
            sentences.append(
                {
                    "start": round(current[0].start, 3),
                    "end": round(current[-1].end, 3),
                    # Collapse any whitespace runs so the written form is
                    # already in the canonical single-spaced shape.
                    "text": " ".join(" ".join(w.word.split()) for w in current),
                }
            )
            current.clear()

    for i, w in enumerate(words):
        current.append(w)
        nxt = words[i + 1] if i + 1 < len(words) else None
        if w.word.rstrip().endswith(_SENTENCE_END):
            flush()
        elif nxt is not None and nxt.start - w.end > SENTENCE_GAP_S:
            flush()
    flush()
    return sentences


def transcribe(job: ExtractorJob) -> Path:
    """Produce the sentence-JSON transcript for one clip.

    A ``.json`` input is read as a word-timestamp sidecar (array of
    ``{"word", "start", "end"}`` objects); anything else is handed as raw
    bytes to the configured speech model.  A silent clip (empty input, or a
    sidecar with no words) yields an empty sentence array, not an error.
    """
    if not job.input_path.exists():
        raise JobConfigError(f"input {job.input_path} does not exist")
    if job.input_path.suffix.lower() == ".json":
        try:
            payload = json.loads(job.input_path.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DecodeFailure(f"word sidecar {job.input_path} is unreadable: {e}") from e
        words = decode_words_json(payload)
    else:
        words = job.make_backend().transcribe(job.input_path.read_bytes())
    sentences = merge_words(words)
    data = (json.dumps(sentences, ensure_ascii=False, indent=2) + "\n").encode("utf-8")
    return _atomic_write(job.out_path, data)


def _listed_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise JobConfigError(f"frame input {directory} is not a directory")
    files = sorted(
        p
        for p in directory.iterdir()
        if p.is_file()
        and not p.name.startswith(".")
        and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not files:
        raise JobConfigError(f"no image files found in {directory}")
    return files


def _embed_grid(job: ExtractorJob, kind: int) -> Path:
    backend = job.make_backend()
    files = _listed_images(job.input_path)
    rows = np.stack([backend.embed_image(p.read_bytes()) for p in files])
    ids = [(job.video_id, i / job.frame_rate_hz) for i in range(len(files))]
    return write_store(kind, ids, rows.astype(np.float32), job.out_path, normalized=True)


def embed_frames(job: ExtractorJob) -> Path:
    """Embed the clip's frame images (sorted by filename) on the time grid."""
    return _embed_grid(job, KIND_FRAME)


def embed_scene(job: ExtractorJob) -> Path:
    """Embed the clip's frames with the scene model on the same time grid."""
    return _embed_grid(job, KIND_SCENE)


def embed_texts(job: ExtractorJob) -> Path:
    """Embed a JSON array of ``{"key", "text"}`` entries into a text store."""
    if not job.input_path.exists():
        raise JobConfigError(f"input {job.input_path} does not exist")
    try:
        payload = json.loads(job.input_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DecodeFailure(f"text input {job.input_path} is unreadable: {e}") from e
    if not isinstance(payload, list) or not payload:
        raise JobConfigError("text input must be a non-empty JSON array")
    keys: list[str] = []
    texts: list[str] = []
    seen: set[str] = set()
    for i, row in enumerate(payload):
        if not isinstance(row, dict) or not isinstance(row.get("key"), str) or not isinstance(row.get("text"), str):
            raise DecodeFailure(f"text entry {i} must be an object with string key/text")
        if row["key"] in seen:
            raise DuplicateKey(f"text key {row['key']!r} appears twice")
        seen.add(row["key"])
        keys.append(row["key"])
        texts.append(row["text"])
    backend = job.make_backend()
    rows = np.stack([backend.embed_text(t) for t in texts])
    return write_store(KIND_TEXT, keys, rows.astype(np.float32), job.out_path, normalized=True)
