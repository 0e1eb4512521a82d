"""Monotone step-to-frame alignment.

Each instruction step gets an admissible time window (its narration span
widened by a slack ``epsilon_s`` and clamped to the video).  Given a
step-by-frame similarity matrix, the aligner picks one frame per step so
that frame indices strictly increase (no frame reuse, no going backwards),
every pick lies inside its step's window, and the summed similarity is
maximal.

The optimizer is exact.  Let ``m[i][f]`` be the best achievable total for
steps ``i..n-1`` when step ``i`` takes frame ``f``::

    m[i][f] = sim[i][f] + max_{f' > f, f' admissible for step i+1} m[i+1][f']

computed right-to-left with a running suffix maximum, O(n*F) overall.  The
assignment is then read out left-to-right, taking the *earliest* frame that
attains each maximum, which makes the result the lexicographically smallest
optimal assignment.  ``brute_force_align`` enumerates every strictly
increasing admissible tuple with the same tie rule; it exists only to
cross-check the optimizer on small instances and shares none of its
machinery.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingStore, SimilarityMatrix, StoreKind, similarity
from .errors import Infeasible, LengthMismatch, SizeLimit
from .step_extraction import StepList

#: Default narration-window slack, in seconds, on each side.
DEFAULT_EPSILON_S = 15.0

# Exhaustive search refuses instances past these sizes.
_BRUTE_MAX_STEPS = 8
_BRUTE_MAX_FRAMES = 60


@dataclass(frozen=True)
class AlignmentWindow:
    """Admissible time span for one step (inclusive bounds, seconds)."""

    step_index: int
    lo_s: float
    hi_s: float


@dataclass(frozen=True)
class AlignedStep:
    step_index: int
    frame_index: int
    timestamp: float
    score: float


@dataclass(frozen=True)
class Alignment:
    assignments: tuple[AlignedStep, ...]
    total_score: float


def expand_windows(steps: StepList, epsilon_s: float, duration_s: float) -> list[AlignmentWindow]:
    """Widen each step's narration span by ``epsilon_s``, clamped to the video.

    A window may come out empty (lo past hi) when a step lies outside the
    covered duration; alignment then reports that step as infeasible.
    """
    if epsilon_s < 0:
        raise ValueError("epsilon_s must be non-negative")
    return [
        AlignmentWindow(
            step_index=st.index,
            lo_s=max(0.0, st.start_s - epsilon_s),
            hi_s=min(duration_s, st.end_s + epsilon_s),
        )
        for st in steps.steps
    ]


def _as_matrix(scores) -> np.ndarray:
    s = scores.scores if isinstance(scores, SimilarityMatrix) else scores
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("similarity must be a 2-D matrix")
    if not np.isfinite(s).all():
        raise ValueError("similarity contains non-finite entries")
    return s


def _check_instance(s: np.ndarray, ts: np.ndarray, windows) -> None:
    n, f = s.shape
    if n == 0:
        raise ValueError("need at least one step")
    if len(windows) != n:
        raise LengthMismatch(f"{n} similarity rows but {len(windows)} windows")
    if ts.shape[0] != f:
        raise LengthMismatch(f"{f} similarity columns but {ts.shape[0]} frame timestamps")
    if ts.shape[0] == 0:
        raise ValueError("need at least one frame")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("frame timestamps must be strictly increasing")


def _admissible(ts: np.ndarray, windows) -> np.ndarray:
    return np.stack([(ts >= w.lo_s) & (ts <= w.hi_s) for w in windows])


def _diagnose_infeasible(admiss: np.ndarray, windows) -> Infeasible:
    empty = [w.step_index for i, w in enumerate(windows) if not admiss[i].any()]
    if empty:
        return Infeasible(empty)
    # Earliest-greedy is complete here (admissible sets are index intervals),
    # so the first step it cannot place certifies the collision.
    prev = -1
    for i, w in enumerate(windows):
        nxt = np.nonzero(admiss[i])[0]
        nxt = nxt[nxt > prev]
        if nxt.size == 0:
            return Infeasible([w.step_index])
        prev = int(nxt[0])
    raise AssertionError("instance was feasible after all")  # pragma: no cover


def align(scores, frame_timestamps, windows) -> Alignment:
    """Optimal strictly-increasing in-window assignment (earliest on ties).

    Args:
        scores: step-by-frame similarity, ``SimilarityMatrix`` or array-like.
        frame_timestamps: strictly increasing frame times, one per column.
        windows: one :class:`AlignmentWindow` per similarity row.

    Raises:
        Infeasible: no strictly increasing admissible assignment exists; the
            error lists the offending step indices.
    """
    s = _as_matrix(scores)
    ts = np.asarray(frame_timestamps, dtype=np.float64)
    _check_instance(s, ts, windows)
    n, f = s.shape
    admiss = _admissible(ts, windows)

    m = np.full((n, f), -np.inf)
    m[n - 1][admiss[n - 1]] = s[n - 1][admiss[n - 1]]
    for i in range(n - 2, -1, -1):
        suffix = np.maximum.accumulate(m[i + 1][::-1])[::-1]
        tail = np.append(suffix[1:], -np.inf)  # best continuation strictly past f
        row = s[i] + tail
        m[i][admiss[i]] = row[admiss[i]]

    if not np.isfinite(m[0].max()):
        raise _diagnose_infeasible(admiss, windows)

    assignments = []
    prev = -1
    for i in range(n):
        seg = m[i][prev + 1 :]
        frame = prev + 1 + int(np.argmax(seg))  # argmax takes the earliest max
        if i == 0:
            total = float(m[0][frame])
        assignments.append(
            AlignedStep(
                step_index=windows[i].step_index,
                frame_index=frame,
                timestamp=float(ts[frame]),
                score=float(s[i][frame]),
            )
        )
        prev = frame
    return Alignment(assignments=tuple(assignments), total_score=total)


def brute_force_align(scores, frame_timestamps, windows) -> Alignment:
    """Exhaustive reference: every strictly increasing admissible tuple.

    Tuples are visited in lexicographic order and replaced only on a strict
    improvement, so ties resolve to the same (earliest) assignment as
    :func:`align`.  Refuses instances past 8 steps or 60 frames.
    """
    s = _as_matrix(scores)
    ts = np.asarray(frame_timestamps, dtype=np.float64)
    _check_instance(s, ts, windows)
    n, f = s.shape
    if n > _BRUTE_MAX_STEPS or f > _BRUTE_MAX_FRAMES:
        raise SizeLimit(f"instance {n}x{f} exceeds {_BRUTE_MAX_STEPS}x{_BRUTE_MAX_FRAMES}")
    admiss = _admissible(ts, windows)
    cand = [list(np.nonzero(admiss[i])[0]) for i in range(n)]
    rows = s.tolist()

    # Memo on (i, min_f) only reuses subtrees the plain search would have
    # recomputed identically; candidate order and the strict-improvement
    # rule (ties keep the earliest frame) are untouched.
    memo: dict[tuple[int, int], tuple | None] = {}

    def best_from(i: int, min_f: int):
        key = (i, min_f)
        if key in memo:
            return memo[key]
        options = [c for c in cand[i] if c >= min_f]
        if i == n - 1:
            best_v = None
            best_f = None
            for c in options:
                v = rows[i][c]
                if best_v is None or v > best_v:
                    best_v, best_f = v, c
            result = None if best_f is None else (best_v, (best_f,))
            memo[key] = result
            return result
        best = None
        for c in options:
            tail = best_from(i + 1, c + 1)
            if tail is None:
                continue
            total = rows[i][c] + tail[0]
            if best is None or total > best[0]:
                best = (total, (c,) + tail[1])
        memo[key] = best
        return best

    result = best_from(0, 0)
    if result is None:
        raise _diagnose_infeasible(admiss, windows)
    total, frames = result
    assignments = tuple(
        AlignedStep(
            step_index=windows[i].step_index,
            frame_index=frame,
            timestamp=float(ts[frame]),
            score=float(s[i][frame]),
        )
        for i, frame in enumerate(frames)
    )
    return Alignment(assignments=assignments, total_score=float(total))


def align_video(
    steps: StepList,
    frame_store: EmbeddingStore,
    text_store: EmbeddingStore,
    epsilon_s: float = DEFAULT_EPSILON_S,
) -> Alignment:
    """Align one video's steps against its frame embeddings.

    ``text_store`` must hold exactly one row per step, in step order;
    ``frame_store`` holds the video's frames with strictly increasing
    timestamps.  The window clamp uses the last frame's timestamp as the
    effective duration.
    """
    if frame_store.kind is not StoreKind.FRAME:
        raise ValueError("frame_store must be a FRAME store")
    if text_store.kind is not StoreKind.TEXT:
        raise ValueError("text_store must be a TEXT store")
    if len(text_store) != len(steps.steps):
        raise LengthMismatch(
            f"{len(text_store)} text rows for {len(steps.steps)} steps"
        )
    for rid in frame_store.ids:
        if rid.video_id != steps.video_id:
            raise ValueError(
                f"frame store row {rid} does not belong to video {steps.video_id!r}"
            )
    ts = [rid.timestamp for rid in frame_store.ids]
    windows = expand_windows(steps, epsilon_s, duration_s=ts[-1] if ts else 0.0)
    sim = similarity(text_store, frame_store)
    return align(sim, ts, windows)


def write_alignment(video_id: str, a: Alignment, path: str | Path) -> None:
    payload = {
        "video_id": video_id,
        "steps": [
            {"index": st.step_index, "frame_timestamp": st.timestamp, "score": st.score}
            for st in a.assignments
        ],
        "total_score": a.total_score,
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def read_alignment(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
