"""Exception hierarchy shared across the package."""


class SemrecError(Exception):
    """Base class for every error raised by semrec."""


class DataError(SemrecError):
    """Input data could not be used (bad file, empty log, unknown ids)."""


class ConfigError(SemrecError):
    """Invalid configuration or precondition violated by the caller."""


# corpus
class ParseError(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyLog(DataError):
    pass


class SplitConflict(DataError):
    pass


class UnknownUser(DataError):
    pass


# grounding / encoding services
class ServiceError(SemrecError):
    """Raised by a service client for a failed request.

    ``status`` is the HTTP status, or None for transport failures.
    """

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status

    @property
    def transient(self) -> bool:
        return self.status is None or self.status >= 500 or self.status == 429


class GroundingUnavailable(SemrecError):
    pass


class InvalidImage(SemrecError):
    pass


class EmptyGeneration(SemrecError):
    pass


class EncodingUnavailable(SemrecError):
    pass


# embedding tables
class DimMismatch(DataError):
    pass


class BadMagic(DataError):
    pass


class TruncatedFile(DataError):
    pass


class IndexMismatch(DataError):
    pass


# fusion
class TooFewItems(DataError):
    pass


class NonFiniteLoss(SemrecError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# retrieval / metrics
class ColdProfile(DataError):
    pass


class EmptyCandidateSet(DataError):
    pass


class EmptyTruth(DataError):
    pass
