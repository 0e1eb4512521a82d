import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepmine.embeddings import (
    MAGIC,
    NORM_TOL,
    VERSION,
    EmbeddingStore,
    FrameId,
    StoreKind,
    load_store,
    nearest_neighbor,
    normalize_rows,
    save_store,
    similarity,
)
from stepmine.errors import (
    DimMismatch,
    EmptyGallery,
    MagicMismatch,
    NotNormalized,
    TruncatedFile,
    VersionUnsupported,
    ZeroVector,
)


def frame_store(vectors, video_id="v", kind=StoreKind.FRAME, normalized=False):
    vectors = np.asarray(vectors, dtype=np.float32)
    ids = tuple(FrameId(video_id, float(i)) for i in range(vectors.shape[0]))
    return EmbeddingStore(kind, vectors.shape[1], ids, vectors, normalized)


def test_store_validates_shapes_and_ids():
    with pytest.raises(DimMismatch):
        EmbeddingStore(StoreKind.TEXT, 3, ("a",), np.zeros((1, 2)))
    with pytest.raises(DimMismatch):
        EmbeddingStore(StoreKind.TEXT, 2, ("a", "b"), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        EmbeddingStore(StoreKind.TEXT, 2, ("a", "a"), np.zeros((2, 2)))


def test_store_rejects_false_normalized_claim():
    with pytest.raises(NotNormalized):
        frame_store([[0.5, 0.5]], normalized=True)
    # within NORM_TOL passes
    frame_store([[1.0 + NORM_TOL / 2, 0.0]], normalized=True)


def test_vectors_are_frozen():
    store = frame_store([[1.0, 0.0]])
    with pytest.raises(ValueError):
        store.vectors[0, 0] = 5.0


def test_save_load_round_trip_bitexact(tmp_path):
    rng = np.random.default_rng(3)
    vectors = rng.standard_normal((5, 7)).astype(np.float32)
    ids = (
        FrameId("vid a", 0.0),
        FrameId("vid a", 1.5),
        FrameId("vid-β", 2.25),
        FrameId("vid-β", 3.125),
        FrameId("vid-β", 1e-9),
    )
    store = EmbeddingStore(StoreKind.SCENE, 7, ids, vectors)
    path = tmp_path / "s.shte"
    save_store(store, path)
    back = load_store(path)
    assert back.kind is StoreKind.SCENE
    assert back.ids == ids
    assert back.normalized is False
    assert back.vectors.tobytes() == vectors.tobytes()
    # writing the loaded store again produces identical bytes
    twice = tmp_path / "s2.shte"
    save_store(back, twice)
    assert twice.read_bytes() == path.read_bytes()


def test_text_store_round_trip(tmp_path):
    store = EmbeddingStore(
        StoreKind.TEXT, 2, ("vid#1", "vid#2"),
        np.array([[1, 0], [0, 1]], dtype=np.float32), True,
    )
    path = tmp_path / "t.shte"
    save_store(store, path)
    back = load_store(path)
    assert back.ids == ("vid#1", "vid#2")
    assert back.normalized is True
    assert back.row_index() == {"vid#1": 0, "vid#2": 1}


def header(version=VERSION, kind=0, dim=2, count=0, normed=0):
    return MAGIC + struct.pack("<IBIIB", version, kind, dim, count, normed)


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.shte"
    path.write_bytes(b"NOPE" + header()[4:])
    with pytest.raises(MagicMismatch):
        load_store(path)


def test_load_rejects_unknown_version_and_kind(tmp_path):
    path = tmp_path / "v9.shte"
    path.write_bytes(header(version=9))
    with pytest.raises(VersionUnsupported):
        load_store(path)
    path.write_bytes(header(kind=7))
    with pytest.raises(VersionUnsupported):
        load_store(path)


def test_load_rejects_truncation_and_trailing_garbage(tmp_path):
    store = frame_store(np.eye(3, dtype=np.float32), normalized=True)
    path = tmp_path / "s.shte"
    save_store(store, path)
    raw = path.read_bytes()

    clipped = tmp_path / "clipped.shte"
    clipped.write_bytes(raw[:-5])
    with pytest.raises(TruncatedFile):
        load_store(clipped)

    short_header = tmp_path / "short.shte"
    short_header.write_bytes(raw[:9])
    with pytest.raises(TruncatedFile):
        load_store(short_header)

    padded = tmp_path / "padded.shte"
    padded.write_bytes(raw + b"\x00")
    with pytest.raises(TruncatedFile):
        load_store(padded)


_ID_TEXT = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), max_codepoint=0x2FF),
    min_size=1,
    max_size=12,
)


@st.composite
def stores(draw):
    kind = draw(st.sampled_from(list(StoreKind)))
    dim = draw(st.integers(1, 16))
    count = draw(st.integers(0, 12))
    if kind is StoreKind.TEXT:
        ids = tuple(
            draw(st.lists(_ID_TEXT, min_size=count, max_size=count, unique=True))
        )
    else:
        vids = draw(st.lists(_ID_TEXT, min_size=1, max_size=3))
        pairs = draw(
            st.lists(
                st.tuples(st.sampled_from(vids), st.floats(0, 1e6, width=32)),
                min_size=count,
                max_size=count,
                unique=True,
            )
        )
        ids = tuple(FrameId(v, float(ts)) for v, ts in pairs)
    vectors = draw(
        st.lists(
            st.lists(st.floats(-100, 100, width=32), min_size=dim, max_size=dim),
            min_size=count,
            max_size=count,
        )
    )
    return EmbeddingStore(kind, dim, ids, np.asarray(vectors, np.float32).reshape(count, dim))


@settings(max_examples=60)
@given(stores())
def test_fuzzed_round_trip(tmp_path_factory, store):
    path = tmp_path_factory.mktemp("shte") / "f.shte"
    save_store(store, path)
    back = load_store(path)
    assert back.kind == store.kind
    assert back.ids == store.ids
    assert back.vectors.tobytes() == store.vectors.tobytes()


def test_normalize_rows():
    store = frame_store([[3.0, 4.0], [0.0, 2.0]])
    unit = normalize_rows(store)
    assert unit.normalized
    np.testing.assert_allclose(unit.vectors, [[0.6, 0.8], [0.0, 1.0]], atol=1e-7)
    again = normalize_rows(unit)
    np.testing.assert_array_equal(again.vectors, unit.vectors)


def test_normalize_rows_zero_vector():
    with pytest.raises(ZeroVector) as exc:
        normalize_rows(frame_store([[1.0, 0.0], [0.0, 0.0]]))
    assert exc.value.row == 1


def test_similarity_requires_normalized_and_matching_dims():
    a = normalize_rows(frame_store([[1.0, 0.0]]))
    b = frame_store([[1.0, 0.0]])
    with pytest.raises(NotNormalized):
        similarity(a, b)
    c = normalize_rows(frame_store([[1.0, 0.0, 0.0]]))
    with pytest.raises(DimMismatch):
        similarity(a, c)
    m = similarity(a, normalize_rows(b))
    assert m.n_rows == m.n_cols == 1
    assert m.scores[0, 0] == 1.0  # clipped exactly


def test_nearest_neighbor_exclusions_and_ties():
    vectors = np.array([[1, 0], [1, 0], [0, 1]], dtype=np.float32)
    ids = (FrameId("b", 1.0), FrameId("a", 9.0), FrameId("a", 2.0))
    gallery = EmbeddingStore(StoreKind.FRAME, 2, ids, vectors, True)
    rid, score = nearest_neighbor([1.0, 0.0], gallery)
    assert rid == FrameId("a", 9.0)  # tie broken by canonical id order
    assert score == 1.0
    rid, _ = nearest_neighbor([1.0, 0.0], gallery, exclude={FrameId("a", 9.0)})
    assert rid == FrameId("b", 1.0)
    with pytest.raises(EmptyGallery):
        nearest_neighbor([1.0, 0.0], gallery, exclude=set(ids))
    with pytest.raises(DimMismatch):
        nearest_neighbor([1.0, 0.0, 0.0], gallery)
