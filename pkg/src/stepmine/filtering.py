"""Screening narrated videos for instructional content.

A video's title plus a transcript excerpt are rendered into a fixed yes/no
prompt (shipped as a versioned resource so prompt edits are explicit), the
model's reply is reduced to a boolean verdict with a one-line explanation,
and batches of verdicts can be scored against ground-truth labels.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import MissingLabel, ParseError
from .llm_gateway import CompletionRequest
from .transcript import Transcript, transcript_excerpt

FILTER_PROMPT_RESOURCE = "filter_prompt_v1.txt"

_VERDICT_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_EXPLANATION_RE = re.compile(r"explanation\s*:\s*", re.IGNORECASE)


@dataclass(frozen=True)
class FilterConfig:
    """Knobs for one classification call."""

    excerpt_max_chars: int = 6000  # keeps the prompt comfortably in-context
    max_tokens: int = 256
    temperature: float = 0.0


@dataclass(frozen=True)
class FilterVerdict:
    video_id: str
    is_instructional: bool
    explanation: str
    raw_response: str = ""


@dataclass(frozen=True)
class FilterScore:
    """Error rates of the screen against labeled videos."""

    false_positive_rate: float
    false_negative_rate: float
    n: int


def _template() -> str:
    return (
        resources.files(__package__).joinpath("resources", FILTER_PROMPT_RESOURCE)
        .read_text(encoding="utf-8")
    )


def build_filter_prompt(title: str, excerpt: str) -> str:
    """Fill the screening template's ``{title}`` and ``{excerpt}`` slots."""
    if not title:
        raise ValueError("title must be non-empty")
    if not excerpt:
        raise ValueError("excerpt must be non-empty")
    return _template().replace("{title}", title).replace("{excerpt}", excerpt)


def parse_filter_verdict(response: str) -> tuple[bool, str]:
    """Reduce a model reply to ``(is_instructional, explanation)``.

    The first standalone Yes/No token (case-insensitive) decides the verdict.
    The explanation is whatever follows an ``Explanation:`` label; if the
    reply has none, the text after the verdict token (or failing that the
    whole reply) is used so the explanation is never empty.
    """
    m = _VERDICT_RE.search(response)
    if m is None:
        raise ParseError(f"no yes/no token in response: {response[:120]!r}")
    verdict = m.group(1).lower() == "yes"
    em = _EXPLANATION_RE.search(response)
    explanation = response[em.end():].strip() if em else ""
    if not explanation:
        explanation = response[m.end():].strip() or response.strip()
    return verdict, explanation


def classify_video(t: Transcript, gateway, cfg: FilterConfig = FilterConfig()) -> FilterVerdict:
    """Ask the gateway whether ``t`` narrates an actual how-to demonstration."""
    excerpt = transcript_excerpt(t, cfg.excerpt_max_chars)
    prompt = build_filter_prompt(t.title, excerpt)
    response = gateway.complete(
        CompletionRequest(prompt, max_tokens=cfg.max_tokens, temperature=cfg.temperature)
    )
    is_instructional, explanation = parse_filter_verdict(response)
    return FilterVerdict(t.video_id, is_instructional, explanation, response)


def evaluate_filter(verdicts: Iterable[FilterVerdict], labels: Mapping[str, bool]) -> FilterScore:
    """Score verdicts against ground truth.

    ``false_positive_rate`` is FP/(FP+TN) over labeled negatives,
    ``false_negative_rate`` FN/(FN+TP) over labeled positives.
    """
    fp = tn = fn = tp = 0
    n = 0
    for v in verdicts:
        if v.video_id not in labels:
            raise MissingLabel(f"no label for video {v.video_id!r}")
        n += 1
        truth = labels[v.video_id]
        if truth and v.is_instructional:
            tp += 1
        elif truth:
            fn += 1
        elif v.is_instructional:
            fp += 1
        else:
            tn += 1
    if n == 0:
        raise ValueError("no verdicts to score")
    fpr = fp / (fp + tn) if (fp + tn) else 0.0
    fnr = fn / (fn + tp) if (fn + tp) else 0.0
    return FilterScore(false_positive_rate=fpr, false_negative_rate=fnr, n=n)


def write_verdicts(verdicts: Iterable[FilterVerdict], path: str | Path) -> None:
    """Persist verdicts as line-delimited JSON (raw responses are not kept)."""
    lines = [
        json.dumps(
            {
                "video_id": v.video_id,
                "is_instructional": v.is_instructional,
                "explanation": v.explanation,
            },
            ensure_ascii=False,
        )
        for v in verdicts
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_verdicts(path: str | Path) -> list[FilterVerdict]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out.append(
            FilterVerdict(
                video_id=obj["video_id"],
                is_instructional=bool(obj["is_instructional"]),
                explanation=obj["explanation"],
            )
        )
    return out
