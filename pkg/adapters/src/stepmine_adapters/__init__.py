"""Media-side extractors feeding the instruction-mining pipeline.

Turns raw clips into the two interchange artifacts the pipeline consumes:
sentence-JSON transcripts and binary embedding stores (frame, text, scene).
Backends are pluggable by name; the default ``hashed`` backend is
deterministic and needs no model weights.
"""
from .backends import HashedBackend, Word, get_backend, register_backend
from .errors import (
    AdapterError,
    DecodeFailure,
    DuplicateKey,
    JobConfigError,
    ModelUnavailable,
)
from .jobs import ExtractorJob, embed_frames, embed_scene, embed_texts, merge_words, transcribe
from .store_writer import unit_rows, write_store

__all__ = [
    "AdapterError",
    "DecodeFailure",
    "DuplicateKey",
    "ExtractorJob",
    "HashedBackend",
    "JobConfigError",
    "ModelUnavailable",
    "Word",
    "embed_frames",
    "embed_scene",
    "embed_texts",
    "get_backend",
    "merge_words",
    "register_backend",
    "transcribe",
    "unit_rows",
    "write_store",
]

__version__ = "0.1.0"
