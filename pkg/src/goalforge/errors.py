"""Exception types shared across the pipeline."""

from __future__ import annotations


class GoalforgeError(Exception):
    """Base class for every error raised by this package."""


class TranscriptError(GoalforgeError):
    """A transcript file is malformed or violates the transcript schema."""


class ResponseFormatError(GoalforgeError):
    """A model response could not be parsed into the expected shape.

    Carries the raw response text so callers can re-ask the prompt or log
    the offending output.
    """

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class DslCompileError(GoalforgeError):
    """Generated goal-model code was rejected.

    Raised for a missing code fence, a statement outside the restricted
    grammar, or a reference to an undeclared goal.  ``line`` is 1-based
    within the extracted code block when known.
    """

    def __init__(self, message: str, line: int | None = None, text: str | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.text = text


class CyclicGraphError(GoalforgeError):
    """An operation requiring an acyclic graph received a cyclic one."""

    def __init__(self, cycle: list[str]):
        super().__init__("graph contains a cycle: " + " -> ".join(cycle))
        self.cycle = cycle


class BackendError(GoalforgeError):
    """A completion or embedding backend failed."""


class CassetteMissError(BackendError):
    """The replay backend has no recorded response for a request digest."""

    def __init__(self, digest: str):
        super().__init__(f"cassette miss for request digest {digest}")
        self.digest = digest
