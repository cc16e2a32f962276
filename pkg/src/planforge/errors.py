"""Exception taxonomy shared across the pipeline.

The CLI maps these onto exit codes: validation errors exit 2, dependency
errors 3, transport errors 4.
"""

from __future__ import annotations


class PlanforgeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PlanforgeError):
    """Bad input data or a violated operation precondition."""


class ParseError(ValidationError):
    """A corpus record is malformed; the message names the offending field."""


class ExtractionError(ValidationError):
    """Article extraction produced an empty result."""


class DependencyError(PlanforgeError):
    """A required upstream stage has not produced its manifest."""

    def __init__(self, message: str, stage: str | None = None) -> None:
        super().__init__(message)
        self.stage = stage


class StaleInputError(DependencyError):
    """An upstream stage ran against a config that has since changed."""


class TransportError(PlanforgeError):
    """The completion endpoint could not be reached after all retries."""

    def __init__(self, message: str, doc_id: str | None = None) -> None:
        super().__init__(message)
        self.doc_id = doc_id


class StrictReplayError(TransportError):
    """Replay-mode cache miss; the message carries the request digest."""


class ExampleDropped(PlanforgeError):
    """A training example cannot be emitted within its token limits."""

    def __init__(self, message: str, doc_id: str | None = None, reason: str = "") -> None:
        super().__init__(message)
        self.doc_id = doc_id
        self.reason = reason


class ScoringError(PlanforgeError):
    """An entailment scorer failed; carries the direction that failed."""

    def __init__(
        self,
        message: str,
        direction: str | None = None,
        doc_id: str | None = None,
    ) -> None:
        super().__init__(message)
        self.direction = direction
        self.doc_id = doc_id


class RatingParseError(PlanforgeError):
    """A rater response did not follow the answer grammar."""
