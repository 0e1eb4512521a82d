"""Timestamped narration transcripts.

Three interchange formats are supported:

* ``SRT``      -- numbered cue blocks, ``HH:MM:SS,mmm --> HH:MM:SS,mmm``
* ``WEBVTT``   -- ``WEBVTT`` header, ``HH:MM:SS.mmm --> HH:MM:SS.mmm`` cues
* ``SENTENCE_JSON`` -- the canonical interchange form: a JSON array of
  ``{"start": float, "end": float, "text": str}`` objects, seconds as decimals.

Parsing normalizes cue text (HTML-ish tags stripped, whitespace collapsed to
single spaces) and drops cues that end up empty.  Cue order is tolerant of
sub-half-second jitter: regressions of at most ``REORDER_TOLERANCE_S`` are
silently fixed by a stable sort, anything larger raises :class:`OrderError`.

None of the formats carry video metadata, so ``parse_transcript`` accepts the
id/title/duration as keyword arguments; with them supplied, parse inverts
serialize exactly (timestamps at millisecond precision for SRT/WebVTT).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum

from .errors import DecodeError, FormatError, OrderError

#: Cue-start regressions up to this many seconds are re-sorted, not errors.
REORDER_TOLERANCE_S = 0.5
#: A sentence may end at most this far past the declared video duration.
DURATION_SLACK_S = 1.0


class TranscriptFormat(str, Enum):
    SRT = "srt"
    WEBVTT = "webvtt"
    SENTENCE_JSON = "sentence_json"


@dataclass(frozen=True)
class NarrationSentence:
    """One narrated sentence with start/end times in seconds."""

    start_s: float
    end_s: float
    text: str


@dataclass(frozen=True)
class Transcript:
    """A video's narration: metadata plus sentences sorted by start time."""

    video_id: str
    title: str = ""
    duration_s: float = 0.0
    sentences: tuple[NarrationSentence, ...] = ()


_TAG_RE = re.compile(r"<[^>]+>")
_WS_RE = re.compile(r"\s+")

_SRT_TIMING = re.compile(
    r"^\s*(\d+):(\d{2}):(\d{2})[,.](\d{1,3})\s*-->\s*(\d+):(\d{2}):(\d{2})[,.](\d{1,3})\s*$"
)
# WebVTT: hours optional on input, cue settings after the end time allowed.
_VTT_TIMING = re.compile(
    r"^\s*(?:(\d+):)?(\d{2}):(\d{2})\.(\d{3})\s*-->\s*(?:(\d+):)?(\d{2}):(\d{2})\.(\d{3})(?:[ \t]+\S.*)?$"
)


def _clean_text(raw: str) -> str:
    """Strip markup tags and collapse all whitespace runs to single spaces."""
    return _WS_RE.sub(" ", _TAG_RE.sub("", raw)).strip()


def _to_seconds(h: str | None, m: str, s: str, frac: str) -> float:
    # Fractional part is treated as a left-aligned decimal: "5" == 500 ms.
    ms = int(frac.ljust(3, "0"))
    total_ms = ((int(h or 0) * 60 + int(m)) * 60 + int(s)) * 1000 + ms
    return total_ms / 1000.0


def _decode(raw: bytes | str) -> str:
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodeError(f"input is not valid UTF-8: {e}") from e
    else:
        text = raw
    return text.lstrip("﻿")


def _parse_cue_blocks(lines: list[str], fmt: TranscriptFormat) -> list[tuple[float, float, str]]:
    """Shared SRT/WebVTT cue scanner; returns (start_s, end_s, text) triples."""
    timing = _SRT_TIMING if fmt is TranscriptFormat.SRT else _VTT_TIMING
    cues: list[tuple[float, float, str]] = []
    i = 0
    n = len(lines)
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        # WebVTT comment/style blocks: skip to the next blank line.
        if fmt is TranscriptFormat.WEBVTT and lines[i].split(":")[0].strip() in ("NOTE", "STYLE", "REGION"):
            while i < n and lines[i].strip():
                i += 1
            continue
        m = timing.match(lines[i])
        if m is None:
            # Allow one identifier/index line before the timing line.
            if i + 1 < n and lines[i + 1].strip() and "-->" not in lines[i]:
                i += 1
                m = timing.match(lines[i])
            if m is None:
                raise FormatError("expected a timing line", line_no=i + 1)
        g = m.groups()
        start = _to_seconds(g[0], g[1], g[2], g[3])
        end = _to_seconds(g[4], g[5], g[6], g[7])
        if end < start:
            raise FormatError("cue end precedes cue start", line_no=i + 1)
        i += 1
        text_lines = []
        while i < n and lines[i].strip():
            text_lines.append(lines[i])
            i += 1
        text = _clean_text(" ".join(text_lines))
        if text:
            cues.append((start, end, text))
    return cues


def _parse_sentence_json(payload: str) -> list[tuple[float, float, str]]:
    try:
        data = json.loads(payload) if payload.strip() else []
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", line_no=e.lineno) from e
    if not isinstance(data, list):
        raise FormatError("top-level value must be an array")
    cues = []
    for k, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise FormatError(f"sentence {k}: expected an object")
        try:
            start, end, text = obj["start"], obj["end"], obj["text"]
        except KeyError as e:
            raise FormatError(f"sentence {k}: missing key {e.args[0]!r}") from e
        if not isinstance(start, (int, float)) or not isinstance(end, (int, float)):
            raise FormatError(f"sentence {k}: start/end must be numbers")
        if isinstance(start, bool) or isinstance(end, bool) or not isinstance(text, str):
            raise FormatError(f"sentence {k}: bad field type")
        if end < start:
            raise FormatError(f"sentence {k}: end precedes start")
        text = _clean_text(text)
        if text:
            cues.append((float(start), float(end), text))
    return cues


def parse_transcript(
    raw: bytes | str,
    fmt: TranscriptFormat,
    *,
    video_id: str = "video",
    title: str = "",
    duration_s: float | None = None,
) -> Transcript:
    """Parse subtitle/JSON bytes into a :class:`Transcript`.

    Args:
        raw: UTF-8 payload (bytes or already-decoded text).
        fmt: one of the three supported formats.
        video_id: identifier to stamp on the result (formats do not carry one).
        title: optional human title.
        duration_s: declared video length; defaults to the last sentence end.

    Raises:
        DecodeError: bytes are not UTF-8.
        FormatError: payload breaks the format grammar (carries a line number).
        OrderError: a cue starts more than ``REORDER_TOLERANCE_S`` before its
            predecessor.
        ValueError: declared duration contradicts the cues, or empty video_id.
    """
    text = _decode(raw)
    if fmt is TranscriptFormat.SENTENCE_JSON:
        cues = _parse_sentence_json(text)
    elif fmt is TranscriptFormat.WEBVTT:
        lines = text.split("\n")
        first = next((ln for ln in lines if ln.strip()), "")
        if not first.strip().startswith("WEBVTT"):
            raise FormatError("missing WEBVTT header", line_no=1)
        body = lines[lines.index(first) + 1 :]
        cues = _parse_cue_blocks(body, TranscriptFormat.WEBVTT)
    elif fmt is TranscriptFormat.SRT:
        cues = _parse_cue_blocks(text.split("\n"), TranscriptFormat.SRT)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown format {fmt!r}")

    for prev, cur in zip(cues, cues[1:]):
        if cur[0] < prev[0] - REORDER_TOLERANCE_S:
            raise OrderError(
                f"cue at {cur[0]:.3f}s regresses {prev[0] - cur[0]:.3f}s past its predecessor"
            )
    cues.sort(key=lambda c: c[0])  # stable: equal starts keep file order

    if not video_id:
        raise ValueError("video_id must be non-empty")
    max_end = max((c[1] for c in cues), default=0.0)
    duration = float(duration_s) if duration_s is not None else max_end
    if duration < 0:
        raise ValueError("duration_s must be non-negative")
    if max_end > duration + DURATION_SLACK_S:
        raise ValueError(
            f"last cue ends at {max_end:.3f}s, past declared duration {duration:.3f}s"
        )
    sentences = tuple(NarrationSentence(s, e, tx) for s, e, tx in cues)
    return Transcript(video_id=video_id, title=title, duration_s=duration, sentences=sentences)


def _format_ts(seconds: float, sep: str) -> str:
    total_ms = round(seconds * 1000)
    ms = total_ms % 1000
    s = (total_ms // 1000) % 60
    m = (total_ms // 60_000) % 60
    h = total_ms // 3_600_000
    return f"{h:02d}:{m:02d}:{s:02d}{sep}{ms:03d}"


def serialize_transcript(t: Transcript, fmt: TranscriptFormat) -> bytes:
    """Render a transcript in the given format (canonical byte form).

    SRT/WebVTT timestamps are written at millisecond precision; the JSON form
    keeps full float precision.  ``parse_transcript`` inverts this exactly
    when passed the same metadata keywords.
    """
    if fmt is TranscriptFormat.SENTENCE_JSON:
        arr = [{"start": s.start_s, "end": s.end_s, "text": s.text} for s in t.sentences]
        return (json.dumps(arr, ensure_ascii=False, indent=2) + "\n").encode("utf-8")
    blocks = []
    if fmt is TranscriptFormat.SRT:
        for i, s in enumerate(t.sentences, start=1):
            blocks.append(
                f"{i}\n{_format_ts(s.start_s, ',')} --> {_format_ts(s.end_s, ',')}\n{s.text}\n"
            )
        return "\n".join(blocks).encode("utf-8")
    if fmt is TranscriptFormat.WEBVTT:
        blocks.append("WEBVTT\n")
        for s in t.sentences:
            blocks.append(
                f"{_format_ts(s.start_s, '.')} --> {_format_ts(s.end_s, '.')}\n{s.text}\n"
            )
        return "\n".join(blocks).encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")  # pragma: no cover


def transcript_excerpt(t: Transcript, max_chars: int) -> str:
    """Join sentence texts (single spaces) up to ``max_chars`` characters.

    Only whole sentences are taken, so the result is a prefix of the full
    joined narration and never splits a sentence mid-way.
    """
    if max_chars < 64:
        raise ValueError("max_chars must be at least 64")
    out = ""
    for s in t.sentences:
        candidate = f"{out} {s.text}" if out else s.text
        if len(candidate) > max_chars:
            break
        out = candidate
    return out


def validate_transcript(t: Transcript) -> list[str]:
    """Return human-readable violations of the transcript contract (empty = ok)."""
    problems: list[str] = []
    if not t.video_id:
        problems.append("video_id is empty")
    if t.duration_s < 0:
        problems.append("duration_s is negative")
    prev_start = None
    for i, s in enumerate(t.sentences):
        if s.start_s < 0:
            problems.append(f"sentence {i}: negative start")
        if s.end_s < s.start_s:
            problems.append(f"sentence {i}: end precedes start")
        if not s.text.strip():
            problems.append(f"sentence {i}: empty text")
        if prev_start is not None and s.start_s < prev_start:
            problems.append(f"sentence {i}: out of order")
        if s.end_s > t.duration_s + DURATION_SLACK_S:
            problems.append(f"sentence {i}: ends past declared duration")
        prev_start = s.start_s
    return problems
