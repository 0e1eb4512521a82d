"""stepmine: mine step/frame instruction sequences from narrated how-to videos.

Pipeline stages: parse transcripts, screen for instructional content, extract
time-bounded steps with an LLM, align steps to video frames, assemble a
sequence corpus, and score generated sequences against it.
"""
from __future__ import annotations

__version__ = "0.1.0"

from . import (  # noqa: F401
    alignment,
    dataset,
    embeddings,
    errors,
    filtering,
    llm_gateway,
    metrics,
    step_extraction,
    transcript,
)
