"""Writer for the pipeline's binary embedding store files.

Implemented from the file layout alone (all little-endian)::

    magic   4 bytes  b"SHTE"
    version u32      1
    kind    u8       0 = frame, 1 = text, 2 = scene
    dim     u32
    count   u32
    normed  u8
    ids     count records
              frame/scene: u16 byte-length + UTF-8 video_id + f64 timestamp
              text:        u16 byte-length + UTF-8 key
    vectors count * dim float32, row-major

Deliberately independent of the consumer package: this module only packs
bytes, so the two implementations can be tested against each other.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import DuplicateKey, JobConfigError

MAGIC = b"SHTE"
VERSION = 1
NORM_TOL = 1e-4

KIND_FRAME = 0
KIND_TEXT = 1
KIND_SCENE = 2

_KIND_NAMES = {"frame": KIND_FRAME, "text": KIND_TEXT, "scene": KIND_SCENE}


def unit_rows(raw: np.ndarray) -> np.ndarray:
    """L2-normalize rows in float64, return float32 (the stored precision)."""
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 2:
        raise JobConfigError(f"embedding matrix must be 2-D, got shape {v.shape}")
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if not np.all(norms > 0.0):
        row = int(np.argmin(norms))
        raise JobConfigError(f"row {row} has zero norm and cannot be normalized")
    return (v / norms).astype(np.float32)


def _coerce_kind(kind) -> int:
    if isinstance(kind, str):
        try:
            return _KIND_NAMES[kind.lower()]
        except KeyError:
            raise JobConfigError(f"unknown store kind {kind!r}") from None
    kind = int(kind)
    if kind not in (KIND_FRAME, KIND_TEXT, KIND_SCENE):
        raise JobConfigError(f"unknown store kind {kind}")
    return kind


def write_store(kind, ids, vectors, path, *, normalized: bool = True) -> Path:
    """Pack and atomically write one store file; returns the final path.

    ``ids`` are strings for text stores and ``(video_id, timestamp)`` pairs
    otherwise.  Frame/scene timestamps must be strictly increasing per video.
    When ``normalized`` is claimed, every row norm must sit within
    ``NORM_TOL`` of 1 — callers normally pass vectors through
    :func:`unit_rows` first.
    """
    kind = _coerce_kind(kind)
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise JobConfigError(f"embedding matrix must be 2-D, got shape {vectors.shape}")
    count, dim = vectors.shape
    ids = list(ids)
    if len(ids) != count:
        raise JobConfigError(f"{len(ids)} ids for {count} rows")
    if not np.all(np.isfinite(vectors)):
        raise JobConfigError("embedding matrix contains non-finite values")
    if normalized:
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        if norms.size and float(np.max(np.abs(norms - 1.0))) > NORM_TOL:
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise JobConfigError(
                f"row {worst} norm {norms[worst]:.6f} violates the normalization claim"
            )

    parts = [MAGIC, struct.pack("<IBIIB", VERSION, kind, dim, count, int(normalized))]
    if kind == KIND_TEXT:
        seen: set[str] = set()
        for key in ids:
            if not isinstance(key, str):
                raise JobConfigError(f"text store ids must be strings, got {key!r}")
            if key in seen:
                raise DuplicateKey(f"text key {key!r} appears twice")
            seen.add(key)
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise JobConfigError("text key longer than 65535 bytes")
            parts.append(struct.pack("<H", len(raw)) + raw)
    else:
        last: dict[str, float] = {}
        seen_pairs: set[tuple[str, float]] = set()
        for rid in ids:
            video_id, timestamp = rid
            timestamp = float(timestamp)
            if (video_id, timestamp) in seen_pairs:
                raise DuplicateKey(f"frame id {(video_id, timestamp)!r} appears twice")
            seen_pairs.add((video_id, timestamp))
            if video_id in last and timestamp <= last[video_id]:
                raise JobConfigError(
                    f"frame timestamps for {video_id!r} must strictly increase "
                    f"({timestamp} after {last[video_id]})"
                )
            last[video_id] = timestamp
            raw = video_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise JobConfigError("video id longer than 65535 bytes")
            parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<d", timestamp))
    parts.append(vectors.tobytes(order="C"))

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + f".tmp{os.getpid()}")
    try:
        tmp.write_bytes(b"".join(parts))
        tmp.replace(target)
    finally:
        if tmp.exists():  # only on a failed replace
            tmp.unlink()
    return target
