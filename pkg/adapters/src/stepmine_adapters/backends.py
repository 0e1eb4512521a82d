"""Model backends behind the extraction jobs.

The registry maps short model names to factories.  Heavy production models
are registered lazily and only fail when actually constructed, so tests and
offline runs can rely on the pure-Python ``hashed`` backend, which derives
deterministic unit vectors and a canned transcript from content hashes.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DecodeFailure, ModelUnavailable


@dataclass(frozen=True)
class Word:
    """One recognized word with its utterance interval in seconds."""

    word: str
    start: float
    end: float


def _seed_for(token: bytes) -> int:
    return int.from_bytes(hashlib.sha256(token).digest()[:8], "little")


class HashedBackend:
    """Deterministic stand-in for ASR and embedding models.

    Every output is a pure function of the input bytes/strings, so exports
    are reproducible across runs and machines without model weights.
    """

    def __init__(self, dim: int = 16):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)

    # -- embeddings -------------------------------------------------------
    def _vector(self, token: bytes) -> np.ndarray:
        rng = np.random.default_rng(_seed_for(token))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_image(self, data: bytes) -> np.ndarray:
        return self._vector(b"img\x00" + data)

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector(b"txt\x00" + text.encode("utf-8"))

    # -- speech recognition -----------------------------------------------
    def transcribe(self, data: bytes) -> list[Word]:
        """Emit a deterministic word stream for the given audio bytes.

        Empty input is a silent clip and produces no words.  Word count and
        spacing are hash-derived; timestamps are strictly increasing.
        """
        if not data:
            return []
        rng = np.random.default_rng(_seed_for(b"asr\x00" + data))
        n = int(rng.integers(4, 24))
        words: list[Word] = []
        t = float(rng.uniform(0.0, 1.0))
        for i in range(n):
            dur = float(rng.uniform(0.15, 0.6))
            word = f"w{int(rng.integers(0, 999)):03d}"
            if i == n - 1 or rng.random() < 0.18:
                word += "."
            words.append(Word(word, round(t, 3), round(t + dur, 3)))
            t += dur + float(rng.uniform(0.05, 0.4))
            if rng.random() < 0.1:
                t += float(rng.uniform(2.1, 4.0))  # occasional long pause
        return words


def _unavailable(name: str, hint: str):
    def factory(**_kwargs):
        raise ModelUnavailable(
            f"model {name!r} needs {hint}, which is not installed in this environment"
        )

    return factory


_REGISTRY = {
    "hashed": lambda dim=16, **_k: HashedBackend(dim=dim),
    "whisperx": _unavailable("whisperx", "the whisperx package and model weights"),
    "dfn-clip": _unavailable("dfn-clip", "the open_clip package and DFN weights"),
    "dinov2": _unavailable("dinov2", "torch hub access to the dinov2 weights"),
}


def get_backend(name: str, **kwargs):
    """Construct a backend by registry name.

    Unknown names are configuration errors; known-but-heavy names raise
    :class:`ModelUnavailable` only at construction time.
    """
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; registered: {sorted(_REGISTRY)}"
        ) from None
    return factory(**kwargs)


def register_backend(name: str, factory) -> None:
    """Plug in an additional backend under ``name``."""
    _REGISTRY[name] = factory


def decode_words_json(payload) -> list[Word]:
    """Parse a word-timestamp sidecar: a JSON array of word/start/end objects."""
    if not isinstance(payload, list):
        raise DecodeFailure("word sidecar must be a JSON array")
    words: list[Word] = []
    for i, row in enumerate(payload):
        if not isinstance(row, dict):
            raise DecodeFailure(f"word {i} is not an object")
        try:
            word = row["word"]
            start = float(row["start"])
            end = float(row["end"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeFailure(f"word {i} is malformed: {exc}") from None
        if not isinstance(word, str):
            raise DecodeFailure(f"word {i} text must be a string")
        if start < 0:
            raise DecodeFailure(f"word {i} starts at a negative time ({start})")
        if end < start:
            raise DecodeFailure(f"word {i} ends before it starts ({start} > {end})")
        words.append(Word(word, start, end))
    return words
