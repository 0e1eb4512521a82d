"""Sequence corpus: assembly, manifests, statistics, splits, and sampling.

A sequence record pairs each instruction of one video with the frame chosen
for it by alignment.  Manifests are line-delimited JSON, one record per line,
and video ids are unique within a manifest.
"""
from __future__ import annotations

import json
import random
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

from .alignment import Alignment
from .errors import EmptyManifest, InsufficientTasks, LengthMismatch
from .step_extraction import StepList

DEFAULT_MAX_BATCH_LEN = 8


@dataclass(frozen=True)
class SequenceItem:
    instruction: str
    frame_timestamp: float
    alignment_score: float


@dataclass(frozen=True)
class SequenceMeta:
    """Task bookkeeping attached to a video when its record is assembled."""

    task_id: int
    task_name: str
    category: str


@dataclass(frozen=True)
class SequenceRecord:
    video_id: str
    task_id: int
    task_name: str
    category: str
    items: tuple[SequenceItem, ...]

    def mean_alignment_score(self) -> float:
        return statistics.fmean(it.alignment_score for it in self.items)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[SequenceRecord, ...]
    split: str = "all"  # "all" | "train" | "test"


@dataclass(frozen=True)
class CorpusStats:
    n_sequences: int
    steps_per_seq_mean: float
    steps_per_seq_std: float
    words_per_step_mean: float
    words_per_step_std: float
    length_histogram: dict[int, int]
    pct_len_2_to_16: float
    category_distribution: dict[str, int]


def assemble_sequence(steps: StepList, a: Alignment, meta: SequenceMeta) -> SequenceRecord:
    """Zip one video's instructions with its aligned frames."""
    if len(steps.steps) != len(a.assignments):
        raise LengthMismatch(
            f"{len(steps.steps)} steps but {len(a.assignments)} aligned frames"
        )
    items = tuple(
        SequenceItem(
            instruction=st.instruction,
            frame_timestamp=asg.timestamp,
            alignment_score=asg.score,
        )
        for st, asg in zip(steps.steps, a.assignments)
    )
    return SequenceRecord(
        video_id=steps.video_id,
        task_id=meta.task_id,
        task_name=meta.task_name,
        category=meta.category,
        items=items,
    )


def compute_stats(manifest: DatasetManifest) -> CorpusStats:
    """Corpus-level statistics.  Standard deviations are population (divisor n)."""
    records = manifest.records
    if not records:
        raise EmptyManifest("no records to summarize")
    lengths = [len(r.items) for r in records]
    word_counts = [
        len(it.instruction.split()) for r in records for it in r.items
    ]
    histogram = {}
    for ln in lengths:
        histogram[ln] = histogram.get(ln, 0) + 1
    categories: dict[str, int] = {}
    for r in records:
        categories[r.category] = categories.get(r.category, 0) + 1
    in_range = sum(1 for ln in lengths if 2 <= ln <= 16)
    return CorpusStats(
        n_sequences=len(records),
        steps_per_seq_mean=statistics.fmean(lengths),
        steps_per_seq_std=statistics.pstdev(lengths),
        words_per_step_mean=statistics.fmean(word_counts),
        words_per_step_std=statistics.pstdev(word_counts),
        length_histogram=dict(sorted(histogram.items())),
        pct_len_2_to_16=100.0 * in_range / len(records),
        category_distribution=dict(sorted(categories.items())),
    )


def split_dataset(
    manifest: DatasetManifest, n_test_tasks: int, per_task_quota: int, seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """Carve out a test split of whole tasks; everything else trains.

    Test tasks are drawn per category, proportionally to each category's
    share of distinct tasks (largest-remainder rounding), using the seeded
    RNG.  Within a chosen task the records with the highest mean alignment
    score fill the quota (ties broken by video id).  Videos never straddle
    the split.
    """
    records = manifest.records
    if not records:
        raise EmptyManifest("cannot split an empty manifest")
    if n_test_tasks <= 0 or per_task_quota <= 0:
        raise ValueError("n_test_tasks and per_task_quota must be positive")

    by_task: dict[int, list[SequenceRecord]] = {}
    task_category: dict[int, str] = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r)
        task_category[r.task_id] = r.category
    if len(by_task) < n_test_tasks:
        raise InsufficientTasks(
            f"{len(by_task)} distinct tasks, {n_test_tasks} requested for test"
        )

    cat_tasks: dict[str, list[int]] = {}
    for tid, cat in task_category.items():
        cat_tasks.setdefault(cat, []).append(tid)
    total = len(by_task)
    cats = sorted(cat_tasks)
    alloc = {}
    fractions = []
    for cat in cats:
        exact = n_test_tasks * len(cat_tasks[cat]) / total
        alloc[cat] = int(exact)
        fractions.append((-(exact - int(exact)), cat))
    leftover = n_test_tasks - sum(alloc.values())
    for _, cat in sorted(fractions):
        if leftover == 0:
            break
        if alloc[cat] < len(cat_tasks[cat]):
            alloc[cat] += 1
            leftover -= 1
    # Rare residue when the fractional winners were already full categories.
    while leftover:
        for cat in cats:
            if leftover and alloc[cat] < len(cat_tasks[cat]):
                alloc[cat] += 1
                leftover -= 1

    rng = random.Random(seed)
    chosen: list[int] = []
    for cat in cats:
        chosen.extend(rng.sample(sorted(cat_tasks[cat]), alloc[cat]))

    test_records: list[SequenceRecord] = []
    for tid in sorted(chosen):
        candidates = sorted(
            by_task[tid], key=lambda r: (-r.mean_alignment_score(), r.video_id)
        )
        test_records.extend(candidates[:per_task_quota])
    test_vids = {r.video_id for r in test_records}
    train_records = [r for r in records if r.video_id not in test_vids]
    train = DatasetManifest(tuple(sorted(train_records, key=lambda r: r.video_id)), "train")
    test = DatasetManifest(tuple(sorted(test_records, key=lambda r: r.video_id)), "test")
    return train, test


def sample_training_window(r: SequenceRecord, k: int, rng: random.Random) -> SequenceRecord:
    """A contiguous window of ``k`` items with uniformly random start.

    Records with at most ``k`` items are returned whole.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if len(r.items) <= k:
        return r
    start = rng.randint(0, len(r.items) - k)
    return replace(r, items=r.items[start : start + k])


def batch_length_schedule(
    k_max: int = DEFAULT_MAX_BATCH_LEN, rng: random.Random | None = None
) -> Iterator[int]:
    """Endless per-batch window lengths, uniform over {2..k_max}."""
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    rng = rng or random.Random()
    while True:
        yield rng.randint(2, k_max)


def record_to_json(r: SequenceRecord) -> dict:
    return {
        "video_id": r.video_id,
        "task_id": r.task_id,
        "task_name": r.task_name,
        "category": r.category,
        "items": [
            {
                "instruction": it.instruction,
                "frame_timestamp": it.frame_timestamp,
                "alignment_score": it.alignment_score,
            }
            for it in r.items
        ],
    }


def record_from_json(obj: dict) -> SequenceRecord:
    items = tuple(
        SequenceItem(it["instruction"], it["frame_timestamp"], it["alignment_score"])
        for it in obj["items"]
    )
    if not items:
        raise ValueError(f"record {obj.get('video_id')!r} has no items")
    ts = [it.frame_timestamp for it in items]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError(f"record {obj.get('video_id')!r}: frame timestamps must increase")
    return SequenceRecord(
        video_id=obj["video_id"],
        task_id=int(obj["task_id"]),
        task_name=obj["task_name"],
        category=obj["category"],
        items=items,
    )


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [json.dumps(record_to_json(r), ensure_ascii=False) for r in manifest.records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_manifest(path: str | Path, split: str = "all") -> DatasetManifest:
    records = []
    seen = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        r = record_from_json(json.loads(line))
        if r.video_id in seen:
            raise ValueError(f"duplicate video_id {r.video_id!r} in manifest")
        seen.add(r.video_id)
        records.append(r)
    return DatasetManifest(tuple(records), split)
