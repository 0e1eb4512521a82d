"""Embedding stores: a small binary format plus the vector math on top.

File layout (all little-endian)::

    magic   4 bytes  b"SHTE"
    version u32      currently 1
    kind    u8       0 = frame, 1 = text, 2 = scene
    dim     u32
    count   u32
    normed  u8       1 if rows are unit L2 norm
    ids     count records
              frame/scene: u16 byte-length + UTF-8 video_id + f64 timestamp
              text:        u16 byte-length + UTF-8 key
    vectors count * dim float32, row-major

Round-trips are bit-exact: vectors are stored and loaded as float32 without
any re-encoding.  Frame/scene rows are identified by ``(video_id, timestamp)``
pairs, text rows by string keys; id order in the file is row order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Collection, NamedTuple, Union

import numpy as np

from .errors import (
    DimMismatch,
    EmptyGallery,
    MagicMismatch,
    NotNormalized,
    TruncatedFile,
    VersionUnsupported,
    ZeroVector,
)

MAGIC = b"SHTE"
VERSION = 1
#: Tolerance on row norms for a store claiming to be normalized.
NORM_TOL = 1e-4


class StoreKind(IntEnum):
    FRAME = 0
    TEXT = 1
    SCENE = 2


class FrameId(NamedTuple):
    """Identity of one sampled frame; tuple order is the canonical order."""

    video_id: str
    timestamp: float


RowId = Union[FrameId, str]


@dataclass
class EmbeddingStore:
    """An ordered set of identified vectors (treated as immutable once built)."""

    kind: StoreKind
    dim: int
    ids: tuple
    vectors: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise DimMismatch(
                f"vectors shape {self.vectors.shape} does not match dim {self.dim}"
            )
        if len(self.ids) != self.vectors.shape[0]:
            raise DimMismatch(
                f"{len(self.ids)} ids for {self.vectors.shape[0]} vector rows"
            )
        self.ids = tuple(self.ids)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("row ids must be unique")
        if self.normalized and len(self.ids):
            norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
            bad = np.where(np.abs(norms - 1.0) > NORM_TOL)[0]
            if bad.size:
                raise NotNormalized(
                    f"row {bad[0]} has norm {norms[bad[0]]:.6f} but store claims unit rows"
                )
        self.vectors.flags.writeable = False

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def row_index(self) -> dict:
        """id -> row position lookup (built on demand)."""
        return {rid: i for i, rid in enumerate(self.ids)}


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the store in the binary format above (atomic: tmp + rename)."""
    parts = [MAGIC, struct.pack("<IBIIB", VERSION, int(store.kind), store.dim,
                                 len(store), int(store.normalized))]
    for rid in store.ids:
        if store.kind is StoreKind.TEXT:
            key = rid.encode("utf-8")
            if len(key) > 0xFFFF:
                raise ValueError("text key longer than 65535 bytes")
            parts.append(struct.pack("<H", len(key)) + key)
        else:
            vid = rid.video_id.encode("utf-8")
            if len(vid) > 0xFFFF:
                raise ValueError("video_id longer than 65535 bytes")
            parts.append(struct.pack("<H", len(vid)) + vid + struct.pack("<d", rid.timestamp))
    parts.append(store.vectors.astype("<f4", copy=False).tobytes(order="C"))
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(target)


class _Cursor:
    """Sequential reader that converts overruns into TruncatedFile."""

    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFile(
                f"{self.path}: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_store(path: str | Path) -> EmbeddingStore:
    """Read a store; raises the specific format error for corrupt files."""
    p = Path(path)
    cur = _Cursor(p.read_bytes(), str(p))
    if cur.take(4) != MAGIC:
        raise MagicMismatch(f"{p}: bad magic")
    version, kind_b, dim, count, normed = cur.unpack("<IBIIB")
    if version != VERSION:
        raise VersionUnsupported(f"{p}: version {version}, reader supports {VERSION}")
    try:
        kind = StoreKind(kind_b)
    except ValueError:
        raise VersionUnsupported(f"{p}: unknown store kind byte {kind_b}") from None
    ids: list = []
    for _ in range(count):
        (klen,) = cur.unpack("<H")
        name = cur.take(klen).decode("utf-8")
        if kind is StoreKind.TEXT:
            ids.append(name)
        else:
            (ts,) = cur.unpack("<d")
            ids.append(FrameId(name, ts))
    payload = cur.take(count * dim * 4)
    if cur.pos != len(cur.buf):
        raise TruncatedFile(f"{p}: {len(cur.buf) - cur.pos} unexpected trailing bytes")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    return EmbeddingStore(kind=kind, dim=dim, ids=tuple(ids), vectors=vectors,
                          normalized=bool(normed))


def normalize_rows(store: EmbeddingStore) -> EmbeddingStore:
    """Return a copy with unit-L2 rows.  Idempotent to float precision.

    Raises:
        ZeroVector: some row has zero norm (its index is on the error).
    """
    v = store.vectors.astype(np.float64)
    norms = np.linalg.norm(v, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise ZeroVector(int(zero[0]))
    unit = (v / norms[:, None]).astype(np.float32)
    return EmbeddingStore(kind=store.kind, dim=store.dim, ids=store.ids,
                          vectors=unit, normalized=True)


@dataclass
class SimilarityMatrix:
    """Dense query-by-gallery cosine scores (float64, clipped to [-1, 1])."""

    scores: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.scores.shape[0]

    @property
    def n_cols(self) -> int:
        return self.scores.shape[1]


def similarity(queries: EmbeddingStore, gallery: EmbeddingStore) -> SimilarityMatrix:
    """Cosine scores between two normalized stores (rows x rows)."""
    if not queries.normalized or not gallery.normalized:
        raise NotNormalized("similarity requires both stores normalized")
    if queries.dim != gallery.dim:
        raise DimMismatch(f"query dim {queries.dim} vs gallery dim {gallery.dim}")
    q = queries.vectors.astype(np.float64)
    g = gallery.vectors.astype(np.float64)
    scores = np.clip(q @ g.T, -1.0, 1.0)
    return SimilarityMatrix(scores=scores)


def nearest_neighbor(
    query_row: np.ndarray,
    gallery: EmbeddingStore,
    exclude: Collection[RowId] = (),
) -> tuple[RowId, float]:
    """Highest-dot-product gallery row for one query vector.

    Excluded ids are never returned.  Exact score ties break toward the
    smallest id in canonical order (tuple order for frames, string order for
    text keys), so retrieval is total and deterministic.

    Raises:
        EmptyGallery: nothing remains after exclusions.
        DimMismatch: query length differs from the gallery dim.
    """
    q = np.asarray(query_row, dtype=np.float64).reshape(-1)
    if q.shape[0] != gallery.dim:
        raise DimMismatch(f"query has {q.shape[0]} dims, gallery {gallery.dim}")
    excluded = set(exclude)
    if excluded:
        keep = np.fromiter(
            (rid not in excluded for rid in gallery.ids), dtype=bool, count=len(gallery)
        )
    else:
        keep = np.ones(len(gallery), dtype=bool)
    if not keep.any():
        raise EmptyGallery("no gallery rows left after exclusions")
    scores = gallery.vectors.astype(np.float64) @ q
    scores[~keep] = -np.inf
    best = scores.max()
    tied = np.where(scores == best)[0]
    winner = min(tied, key=lambda i: gallery.ids[i])
    return gallery.ids[winner], float(best)
