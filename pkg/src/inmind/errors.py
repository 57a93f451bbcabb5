"""Exception hierarchy shared across the harness."""

from __future__ import annotations


class InMindError(Exception):
    """Base class for every error raised by this package."""


# --- game engine -----------------------------------------------------------


class GameError(InMindError):
    pass


class InvalidAssignment(GameError):
    pass


class OutOfRange(GameError):
    pass


class WrongPhase(GameError):
    pass


class BadTeamSize(GameError):
    pass


class GoodPlayerFailVote(GameError):
    pass


class MissingVote(GameError):
    pass


# --- sessions ---------------------------------------------------------------


class SchemaError(InMindError):
    """A session document does not match the schema.

    ``path`` is a JSON-pointer style location such as ``/reflection``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class ConsistencyError(InMindError):
    """Replaying a session through the engine disagrees with what was recorded."""


class MissingMask(InMindError):
    pass


class DigitCountMismatch(InMindError):
    pass


# --- output parsing ---------------------------------------------------------


class ParseError(InMindError):
    """Base for typed parser failures. ``reason`` is a stable short tag."""

    reason = "parse-error"


class NoBlockFound(ParseError):
    reason = "no-block"


class BadLabel(ParseError):
    reason = "bad-label"


class WrongArity(ParseError):
    reason = "wrong-arity"


class Top1Mismatch(ParseError):
    reason = "top1-mismatch"


class MalformedLine(ParseError):
    reason = "malformed-line"

    def __init__(self, line_no: int, line: str):
        super().__init__(f"line {line_no}: {line!r}")
        self.line_no = line_no
        self.line = line


class ReplacementDigitCountMismatch(ParseError, DigitCountMismatch):
    reason = "digit-count"


class NonAscending(ParseError):
    reason = "non-ascending"


class DuplicateMask(ParseError):
    reason = "duplicate-mask"


class MissingPlayer(ParseError):
    reason = "missing-player"

    def __init__(self, player: int):
        super().__init__(f"no line for Player {player}")
        self.player = player


class UnknownRole(ParseError):
    reason = "unknown-role"


class DuplicatePlayer(ParseError):
    reason = "duplicate-player"


# --- protocol / backends ----------------------------------------------------


class ConfigError(InMindError):
    pass


class BackendError(InMindError):
    pass


class BackendTimeout(BackendError):
    pass


class HttpStatusError(BackendError):
    def __init__(self, code: int, body: str = ""):
        super().__init__(f"HTTP {code}: {body[:200]}")
        self.code = code


class ExhaustedRetries(BackendError):
    pass


class UnrecognizedPrompt(BackendError):
    pass


class ProtocolError(InMindError):
    """Task construction precondition failed."""


class LengthMismatch(InMindError):
    pass


class MismatchedInstanceSets(InMindError):
    pass


class EmptyInput(InMindError):
    pass


class NoTraces(InMindError):
    pass


class ProfileBuildError(BackendError):
    """A backend call failed while accumulating the strategy profile."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"profile step {step}: {cause}")
        self.step = step
        self.cause = cause


class IoError(InMindError):
    """A run directory, corpus, or records location is missing or unreadable."""
