"""Scoring generated instruction sequences against their source corpus.

A generated sequence for a source record with ``m`` image/text pairs keeps
pair 0 as the conditioning input and generates images for pairs ``1..m-1``,
so with ``n = m - 1`` generated images there are ``n + 1`` prompt classes.

Three checks, each averaged per sequence first and then unweighted across
sequences (so long sequences don't dominate):

* **step faithfulness** -- does each generated image embed closest to *its
  own* step prompt among all the sequence's prompts (zero-shot argmax over
  ``n + 1`` classes)?
* **scene consistency** -- does each generated image retrieve, from the
  gallery of all test-set frames (inputs excluded), a frame of the *same
  video* (nearest neighbour in scene-representation space)?
* **task faithfulness** -- does the mean of the generated image embeddings,
  re-normalized, classify to the sequence's own task among all test tasks?

All classification decisions are argmaxes of dot products, so uniformly
rescaling any embedding store leaves every decision -- and every metric
value -- unchanged.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Iterable, Sequence

import numpy as np

from .dataset import DatasetManifest
from .embeddings import EmbeddingStore, FrameId, RowId, StoreKind, nearest_neighbor
from .errors import DimMismatch, MissingPrompt, MissingTask

_COLUMNS = ("Step Faithf.", "Scene Consist.", "Task Faithf.")


@dataclass
class GeneratedSequence:
    """One model output: n generated images for a source sequence."""

    video_id: str
    task_id: int
    prompts: tuple[str, ...]  # n+1 text-store keys; index 0 is the input pair's
    gen_clip: np.ndarray  # (n, d) rows for generated images, step order
    gen_scene: np.ndarray  # (n, d_scene) rows in the scene space
    input_image_id: FrameId | None = None

    def __post_init__(self):
        self.gen_clip = np.asarray(self.gen_clip, dtype=np.float32)
        self.gen_scene = np.asarray(self.gen_scene, dtype=np.float32)
        n = self.gen_clip.shape[0]
        if n < 1:
            raise ValueError("need at least one generated image")
        if self.gen_scene.shape[0] != n:
            raise DimMismatch("gen_clip and gen_scene row counts differ")
        if len(self.prompts) != n + 1:
            raise DimMismatch(
                f"{len(self.prompts)} prompts for {n} generated images (need n+1)"
            )

    @property
    def n(self) -> int:
        return self.gen_clip.shape[0]


@dataclass(frozen=True)
class SequenceMetrics:
    video_id: str
    step_faithfulness: float
    scene_consistency: float
    task_faithfulness: float


@dataclass(frozen=True)
class MetricReport:
    step_faithfulness: float
    scene_consistency: float
    task_faithfulness: float
    per_sequence: tuple[SequenceMetrics, ...] = ()
    fid: float | None = None  # display-only slot for an externally computed FID


def step_faithfulness(seq: GeneratedSequence, text_store: EmbeddingStore) -> float:
    """Fraction of generated images whose closest prompt is their own."""
    if seq.gen_clip.shape[1] != text_store.dim:
        raise DimMismatch(
            f"gen_clip dim {seq.gen_clip.shape[1]} vs text store dim {text_store.dim}"
        )
    index = text_store.row_index()
    rows = []
    for key in seq.prompts:
        if key not in index:
            raise MissingPrompt(f"prompt key {key!r} not in text store")
        rows.append(index[key])
    classes = text_store.vectors[rows].astype(np.float64)  # (n+1, d)
    scores = seq.gen_clip.astype(np.float64) @ classes.T  # (n, n+1)
    predicted = np.argmax(scores, axis=1)  # ties -> lowest class index
    correct = sum(1 for i, p in enumerate(predicted, start=1) if p == i)
    return correct / seq.n


def scene_consistency(
    seq: GeneratedSequence,
    gallery: EmbeddingStore,
    exclusions: Collection[RowId] = (),
) -> float:
    """Fraction of generated images retrieving a same-video gallery frame."""
    if gallery.kind is StoreKind.TEXT:
        raise ValueError("scene gallery must hold frame-identified rows")
    correct = 0
    for row in seq.gen_scene:
        rid, _ = nearest_neighbor(row, gallery, exclude=exclusions)
        if rid.video_id == seq.video_id:
            correct += 1
    return correct / seq.n


def task_faithfulness(seq: GeneratedSequence, task_store: EmbeddingStore) -> int:
    """1 if the averaged generated embedding classifies to the right task."""
    if not 0 <= seq.task_id < len(task_store):
        raise MissingTask(f"task_id {seq.task_id} outside store of {len(task_store)} tasks")
    if seq.gen_clip.shape[1] != task_store.dim:
        raise DimMismatch(
            f"gen_clip dim {seq.gen_clip.shape[1]} vs task store dim {task_store.dim}"
        )
    mean = seq.gen_clip.astype(np.float64).mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm > 0.0:
        mean = mean / norm
    scores = task_store.vectors.astype(np.float64) @ mean
    return int(int(np.argmax(scores)) == seq.task_id)


def evaluate(
    sequences: Iterable[GeneratedSequence],
    text_store: EmbeddingStore,
    scene_gallery: EmbeddingStore,
    task_store: EmbeddingStore,
    exclusions: Collection[RowId] = (),
) -> MetricReport:
    """Score every sequence and macro-average (per sequence first)."""
    rows = []
    for seq in sequences:
        rows.append(
            SequenceMetrics(
                video_id=seq.video_id,
                step_faithfulness=step_faithfulness(seq, text_store),
                scene_consistency=scene_consistency(seq, scene_gallery, exclusions),
                task_faithfulness=float(task_faithfulness(seq, task_store)),
            )
        )
    if not rows:
        raise ValueError("no sequences to evaluate")
    n = len(rows)
    return MetricReport(
        step_faithfulness=sum(r.step_faithfulness for r in rows) / n,
        scene_consistency=sum(r.scene_consistency for r in rows) / n,
        task_faithfulness=sum(r.task_faithfulness for r in rows) / n,
        per_sequence=tuple(rows),
    )


def random_baseline(manifest: DatasetManifest, n_tasks: int) -> MetricReport:
    """Expected metric values for uniformly random generations.

    Only records with at least two items produce a generated sequence (the
    first pair is the conditioning input), matching what ``evaluate`` sees.
    Step chance for a record of ``m`` items is ``1/m`` (one correct class of
    ``m``); scene chance is the record's share of gallery frames; task chance
    is ``1/n_tasks``.
    """
    if n_tasks < 1:
        raise ValueError("n_tasks must be positive")
    usable = [r for r in manifest.records if len(r.items) >= 2]
    if not usable:
        raise ValueError("no records with >= 2 items")
    gallery_total = sum(len(r.items) - 1 for r in usable)
    rows = []
    for r in usable:
        m = len(r.items)
        rows.append(
            SequenceMetrics(
                video_id=r.video_id,
                step_faithfulness=1.0 / m,
                scene_consistency=(m - 1) / gallery_total,
                task_faithfulness=1.0 / n_tasks,
            )
        )
    n = len(rows)
    return MetricReport(
        step_faithfulness=sum(r.step_faithfulness for r in rows) / n,
        scene_consistency=sum(r.scene_consistency for r in rows) / n,
        task_faithfulness=sum(r.task_faithfulness for r in rows) / n,
        per_sequence=tuple(rows),
    )


def render_table(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """Aligned plain-text table, one line per (method name, report)."""
    name_w = max(20, *(len(name) for name, _ in rows)) if rows else 20
    header = f"{'Method':<{name_w}}" + "".join(f"{c:>16}" for c in _COLUMNS)
    lines = [header, "-" * len(header)]
    for name, rep in rows:
        vals = (rep.step_faithfulness, rep.scene_consistency, rep.task_faithfulness)
        lines.append(f"{name:<{name_w}}" + "".join(f"{v:>16.2f}" for v in vals))
    return "\n".join(lines) + "\n"


def report_to_json(report: MetricReport) -> dict:
    return {
        "step_faithfulness": report.step_faithfulness,
        "scene_consistency": report.scene_consistency,
        "task_faithfulness": report.task_faithfulness,
        "fid": report.fid,
        "per_sequence": [
            {
                "video_id": r.video_id,
                "step_faithfulness": r.step_faithfulness,
                "scene_consistency": r.scene_consistency,
                "task_faithfulness": r.task_faithfulness,
            }
            for r in report.per_sequence
        ],
    }


def write_report(report: MetricReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_json(report), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
