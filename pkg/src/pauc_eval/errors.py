"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class PaucError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PaucError):
    """A domain object violates one of its structural invariants."""


class DatasetFormatError(PaucError):
    """A benchmark, prediction, or label file failed to parse or validate."""


class JudgeError(PaucError):
    """Base class for judge backend failures."""


class JudgeTransportError(JudgeError):
    """The remote judge endpoint could not be reached or kept failing."""


class JudgeParseError(JudgeError):
    """The judge replied, but no usable score could be extracted."""


class FixtureError(JudgeError):
    """A scripted judge or responder fixture is missing a required entry."""


class ResponderTransportError(PaucError):
    """A responder endpoint failed mid-case.

    ``partial`` holds the responses collected before the failure so the
    caller can flag and persist the incomplete stream.
    """

    def __init__(self, message: str, partial: tuple = ()) -> None:
        super().__init__(message)
        self.partial = partial


class ReportError(PaucError):
    """An evaluation report is malformed or fails its self-consistency check."""
