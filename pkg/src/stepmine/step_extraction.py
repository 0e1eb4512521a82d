"""Turning narration into numbered, time-bounded instruction steps.

The transcript is rendered into a few-shot prompt (versioned resource) whose
exemplar output is a JSON array shaped like::

    [{ "WikiHow Title": "..." },
     { "steps": [ { "step": 1, "instruction": "...",
                    "start_timestamp": 13.63, "end_timestamp": 18.82 }, ... ]}]

``parse_steps`` recovers the first well-formed bracketed array from the raw
model reply (models routinely wrap it in prose), and ``validate_steps``
enforces the ordering/content rules a usable step list must satisfy.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import (
    DurationError,
    FieldError,
    MalformedSteps,
    NoStructuredOutput,
)
from .llm_gateway import CompletionRequest
from .transcript import DURATION_SLACK_S, Transcript

STEP_PROMPT_RESOURCE = "step_prompt_v1.txt"

#: Videos at or past this length are rejected before prompting.
MAX_TRANSCRIPT_DURATION_S = 600.0
#: Hard cap on accepted steps per video, to bound downstream cost.
MAX_STEPS_PER_VIDEO = 40


@dataclass(frozen=True)
class InstructionStep:
    """One imperative step with the narration span it came from."""

    index: int  # 1-based position within its list
    instruction: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class StepList:
    video_id: str
    wikihow_title: str
    steps: tuple[InstructionStep, ...]


@dataclass(frozen=True)
class ExtractionConfig:
    max_tokens: int = 2048
    temperature: float = 0.0
    max_steps: int = MAX_STEPS_PER_VIDEO


@dataclass(frozen=True)
class StepViolation:
    """A single rule breach found by :func:`validate_steps`.

    Kinds: ``NONMONOTONE`` (start time regresses), ``EMPTY`` (blank
    instruction), ``OUT_OF_RANGE`` (ends past the video), ``TOO_MANY``.
    ``step_index`` is 1-based; for ``TOO_MANY`` it carries the step count.
    """

    kind: str
    step_index: int

    def __str__(self) -> str:
        return f"{self.kind}({self.step_index})"


def _template() -> str:
    return (
        resources.files(__package__).joinpath("resources", STEP_PROMPT_RESOURCE)
        .read_text(encoding="utf-8")
    )


def render_transcript_lines(t: Transcript) -> str:
    """Render sentences as ``SS.SS - SS.SS: "text"`` lines (two decimals)."""
    return "\n".join(
        f'{s.start_s:05.2f} - {s.end_s:05.2f}: "{s.text}"' for s in t.sentences
    )


def build_step_prompt(title: str, t: Transcript) -> str:
    """Fill the extraction template for one video.

    Raises:
        DurationError: the video runs ``MAX_TRANSCRIPT_DURATION_S`` or longer.
    """
    if t.duration_s >= MAX_TRANSCRIPT_DURATION_S:
        raise DurationError(
            f"video runs {t.duration_s:.2f}s, ceiling is {MAX_TRANSCRIPT_DURATION_S:.0f}s"
        )
    return (
        _template()
        .replace("{title}", title)
        .replace("{transcript}", render_transcript_lines(t))
    )


def _candidate_arrays(text: str):
    """Yield balanced ``[...]`` spans in order of appearance (string-aware)."""
    for start in (m.start() for m in re.finditer(r"\[", text)):
        depth = 0
        in_string = False
        escaped = False
        for j in range(start, len(text)):
            ch = text[j]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch in "[{":
                depth += 1
            elif ch in "]}":
                depth -= 1
                if depth == 0:
                    yield text[start : j + 1]
                    break
        # unbalanced span: fall through to the next '[' candidate


def _coerce_time(value, record_index: int, field: str) -> float:
    if isinstance(value, bool):
        raise FieldError(record_index, field, "boolean is not a timestamp")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise FieldError(record_index, field, f"not a number: {value!r}")


def parse_steps(response: str, video_id: str) -> StepList:
    """Extract a :class:`StepList` from a raw model reply.

    The first bracketed span that parses as JSON wins.  Elements carrying a
    ``"steps"`` list contribute step records; a ``"WikiHow Title"`` element
    names the list; bare step objects are accepted too.  Records are
    renumbered by position, so gaps in the model's own numbering are tolerated.

    Raises:
        NoStructuredOutput: no parseable array, or it holds no step records.
        FieldError: a record lacks a field or holds an unusable value.
    """
    parsed = None
    for candidate in _candidate_arrays(response):
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            parsed = value
            break
    if parsed is None:
        raise NoStructuredOutput("no well-formed bracketed array in response")

    title = ""
    records: list[dict] = []
    for element in parsed:
        if not isinstance(element, dict):
            continue
        if isinstance(element.get("WikiHow Title"), str):
            title = element["WikiHow Title"]
        if isinstance(element.get("steps"), list):
            records.extend(r for r in element["steps"] if isinstance(r, dict))
        elif "instruction" in element or "step" in element:
            records.append(element)
    if not records:
        raise NoStructuredOutput("array contains no step records")

    steps = []
    for k, rec in enumerate(records):
        for field in ("instruction", "start_timestamp", "end_timestamp"):
            if field not in rec:
                raise FieldError(k, field, "missing")
        if not isinstance(rec["instruction"], str):
            raise FieldError(k, "instruction", "not a string")
        start = _coerce_time(rec["start_timestamp"], k, "start_timestamp")
        end = _coerce_time(rec["end_timestamp"], k, "end_timestamp")
        if start < 0:
            raise FieldError(k, "start_timestamp", "negative")
        if end < start:
            raise FieldError(k, "end_timestamp", "precedes start_timestamp")
        steps.append(InstructionStep(k + 1, rec["instruction"], start, end))
    return StepList(video_id=video_id, wikihow_title=title, steps=tuple(steps))


def validate_steps(
    s: StepList, t: Transcript, max_steps: int = MAX_STEPS_PER_VIDEO
) -> list[StepViolation]:
    """Check ordering/content rules; an empty list means the steps pass.

    Starts must be non-decreasing (ties allowed -- several steps may share a
    narration span), instructions non-blank, and no step may end more than
    ``DURATION_SLACK_S`` past the declared video duration.
    """
    if s.video_id != t.video_id:
        raise ValueError(f"step list is for {s.video_id!r}, transcript for {t.video_id!r}")
    violations: list[StepViolation] = []
    prev_start = None
    for step in s.steps:
        if not step.instruction.strip():
            violations.append(StepViolation("EMPTY", step.index))
        if prev_start is not None and step.start_s < prev_start:
            violations.append(StepViolation("NONMONOTONE", step.index))
        if step.end_s > t.duration_s + DURATION_SLACK_S:
            violations.append(StepViolation("OUT_OF_RANGE", step.index))
        prev_start = step.start_s
    if len(s.steps) > max_steps:
        violations.append(StepViolation("TOO_MANY", len(s.steps)))
    return violations


def extract_steps(
    t: Transcript, gateway, cfg: ExtractionConfig = ExtractionConfig()
) -> StepList:
    """Prompt, parse, and validate the step list for one video.

    Raises:
        DurationError: video too long to prompt.
        NoStructuredOutput / FieldError: reply unusable.
        MalformedSteps: parsed steps break the validation rules.
    """
    prompt = build_step_prompt(t.title, t)
    response = gateway.complete(
        CompletionRequest(prompt, max_tokens=cfg.max_tokens, temperature=cfg.temperature)
    )
    steps = parse_steps(response, t.video_id)
    violations = validate_steps(steps, t, cfg.max_steps)
    if violations:
        raise MalformedSteps(violations)
    return steps


def write_steps(s: StepList, path: str | Path) -> None:
    payload = {
        "video_id": s.video_id,
        "wikihow_title": s.wikihow_title,
        "steps": [
            {
                "index": st.index,
                "instruction": st.instruction,
                "start_s": st.start_s,
                "end_s": st.end_s,
            }
            for st in s.steps
        ],
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def read_steps(path: str | Path) -> StepList:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    steps = tuple(
        InstructionStep(st["index"], st["instruction"], st["start_s"], st["end_s"])
        for st in obj["steps"]
    )
    return StepList(obj["video_id"], obj.get("wikihow_title", ""), steps)
