"""Exception hierarchy.

Every error raised by this package derives from :class:`MaskScoreError`,
so callers can catch one type at the boundary. Subclasses are grouped by
the module that raises them.
"""

from __future__ import annotations


class MaskScoreError(Exception):
    """Base class for all package errors."""


# text-core


class EmptyCorpus(MaskScoreError):
    pass


class DegenerateVocabulary(MaskScoreError):
    pass


class OutOfVocabulary(MaskScoreError):
    def __init__(self, token: str):
        super().__init__(f"token not in vocabulary: {token!r}")
        self.token = token


class UnknownId(MaskScoreError):
    def __init__(self, token_id: int):
        super().__init__(f"id outside vocabulary range: {token_id}")
        self.token_id = token_id


# masking


class MissingClassMap(MaskScoreError):
    pass


class NoEligiblePositions(MaskScoreError):
    pass


class SequenceTooLong(MaskScoreError):
    pass


class ZeroTimesteps(MaskScoreError):
    pass


class LengthMismatch(MaskScoreError):
    pass


# denoiser


class BadLambda(MaskScoreError):
    pass


class VocabMismatch(MaskScoreError):
    pass


class ConnectionFailed(MaskScoreError):
    pass


class Timeout(MaskScoreError):
    pass


class ProtocolViolation(MaskScoreError):
    """Remote response violated the wire contract.

    The offending raw payload (bytes or parsed JSON) is attached so it can
    be logged; it is never interpreted as a score.
    """

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload


class BadModelFile(MaskScoreError):
    pass


# estimator / scoring


class EmptyCandidate(MaskScoreError):
    pass


class GridMismatch(MaskScoreError):
    pass


class TooFewSamples(MaskScoreError):
    pass


# diagnostics


class InsufficientData(MaskScoreError):
    pass


class TooFewRecords(MaskScoreError):
    pass


class MismatchedSources(MaskScoreError):
    pass


class EmptyTemplates(MaskScoreError):
    pass


# meta-eval


class AllTied(MaskScoreError):
    pass


class DegenerateInput(MaskScoreError):
    pass


# dataset-io


class ParseError(MaskScoreError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateId(MaskScoreError):
    def __init__(self, record_id: str, first_line: int, second_line: int):
        super().__init__(
            f"duplicate id {record_id!r} at lines {first_line} and {second_line}"
        )
        self.record_id = record_id
        self.first_line = first_line
        self.second_line = second_line


class IoError(MaskScoreError):
    pass
