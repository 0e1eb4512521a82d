"""Exception taxonomy shared across the pipeline.

Every stage raises subclasses of :class:`PipelineError` so callers (and the
CLI's per-video error ledger) can catch one base type.  Errors carry the
minimal structured payload a caller needs to react programmatically; the
message string is for humans.
"""
from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


# --- transcripts -----------------------------------------------------------

class DecodeError(PipelineError):
    """Input bytes are not valid UTF-8."""


class FormatError(PipelineError):
    """A subtitle/JSON payload violates its format grammar."""

    def __init__(self, message: str, line_no: int = 0):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


class OrderError(PipelineError):
    """Cue timestamps regress beyond the reorder tolerance."""


# --- LLM gateway -----------------------------------------------------------

class ServiceError(PipelineError):
    """The completion endpoint failed or returned an unusable payload."""

    def __init__(self, status: int | None, body_excerpt: str, *, transient: bool = False):
        super().__init__(f"gateway error (status={status}): {body_excerpt[:200]}")
        self.status = status
        self.body_excerpt = body_excerpt
        self.transient = transient


class RetriesExhausted(PipelineError):
    """All retry attempts against the completion endpoint failed."""


# --- filtering -------------------------------------------------------------

class ParseError(PipelineError):
    """A model response contains no recognizable verdict token."""


class MissingLabel(PipelineError):
    """A verdict's video_id has no entry in the ground-truth labels."""


# --- step extraction -------------------------------------------------------

class DurationError(PipelineError):
    """Transcript exceeds the duration ceiling for step extraction."""


class NoStructuredOutput(PipelineError):
    """No parseable bracketed array of steps in the model response."""


class FieldError(PipelineError):
    """A step record is missing a field or holds an unusable value."""

    def __init__(self, record_index: int, field: str, message: str = ""):
        detail = f": {message}" if message else ""
        super().__init__(f"record {record_index}, field {field!r}{detail}")
        self.record_index = record_index
        self.field = field


class MalformedSteps(PipelineError):
    """Extracted steps violate ordering/content rules; carries violations."""

    def __init__(self, violations):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = list(violations)


# --- embedding stores ------------------------------------------------------

class StoreError(PipelineError):
    """Base class for binary embedding-store format errors."""


class MagicMismatch(StoreError):
    """File does not start with the store magic."""


class VersionUnsupported(StoreError):
    """Store version (or kind byte) unknown to this reader."""


class TruncatedFile(StoreError):
    """File length disagrees with the header's own accounting."""


class DimMismatch(PipelineError):
    """Two embedding collections disagree on vector dimension or count."""


class NotNormalized(PipelineError):
    """Operation requires unit-norm rows but a store is not normalized."""


class ZeroVector(PipelineError):
    """A row has zero L2 norm and cannot be normalized."""

    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm")
        self.row = row


class EmptyGallery(PipelineError):
    """Nearest-neighbour gallery is empty after exclusions."""


# --- alignment -------------------------------------------------------------

class Infeasible(PipelineError):
    """No strictly increasing admissible frame assignment exists."""

    def __init__(self, step_indices):
        self.step_indices = list(step_indices)
        super().__init__(f"no admissible assignment for steps {self.step_indices}")


class SizeLimit(PipelineError):
    """Instance too large for exhaustive search."""


# --- dataset ---------------------------------------------------------------

class LengthMismatch(PipelineError):
    """Two parallel collections differ in length."""


class EmptyManifest(PipelineError):
    """Operation requires at least one sequence record."""


class InsufficientTasks(PipelineError):
    """Manifest holds fewer distinct tasks than the requested test split."""


# --- metrics ---------------------------------------------------------------

class MissingPrompt(PipelineError):
    """A prompt key is absent from the text embedding store."""


class MissingTask(PipelineError):
    """task_id does not index a row of the task text store."""
