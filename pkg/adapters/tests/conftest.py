"""Shared helpers for the adapter tests."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import pytest


def read_store_raw(path: Path) -> dict:
    """Decode a store file directly with struct — no library involved.

    Deliberately independent of both the writer under test and the consumer
    package, so format assertions are a third opinion on the byte layout.
    """
    buf = Path(path).read_bytes()
    assert buf[:4] == b"SHTE", "bad magic"
    version, kind, dim, count, normalized = struct.unpack_from("<IBIIB", buf, 4)
    off = 4 + struct.calcsize("<IBIIB")
    ids = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + ln].decode("utf-8")
        off += ln
        if kind in (0, 2):  # frame / scene ids carry a timestamp
            (ts,) = struct.unpack_from("<d", buf, off)
            off += 8
            ids.append((name, ts))
        else:
            ids.append(name)
    vectors = np.frombuffer(buf, dtype="<f4", offset=off, count=count * dim)
    assert off + count * dim * 4 == len(buf), "trailing bytes"
    return {
        "version": version,
        "kind": kind,
        "dim": dim,
        "count": count,
        "normalized": bool(normalized),
        "ids": ids,
        "vectors": vectors.reshape(count, dim),
    }


@pytest.fixture
def frames_dir(tmp_path: Path) -> Path:
    """A directory of ten small fake frame images with deterministic bytes."""
    d = tmp_path / "clip_frames"
    d.mkdir()
    for i in range(10):
        (d / f"frame_{i:04d}.png").write_bytes(b"PNGDATA:" + bytes([i]) * 16)
    (d / "notes.txt").write_text("not an image", encoding="utf-8")
    (d / ".hidden.png").write_bytes(b"skip me")
    return d
