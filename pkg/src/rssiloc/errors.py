"""Exception hierarchy.

Every error carries a ``category`` string (the class name) so the CLI can
print a one-line, machine-parsable diagnostic.
"""

from __future__ import annotations


class LocalizationError(Exception):
    """Base class for all data errors raised by the package."""

    @property
    def category(self) -> str:
        return type(self).__name__


# codec
class InvalidPayload(LocalizationError, ValueError):
    pass


class NotIBeacon(LocalizationError, ValueError):
    pass


class Truncated(LocalizationError, ValueError):
    pass


class BadLength(LocalizationError, ValueError):
    pass


# path loss
class NonPositiveDistance(LocalizationError, ValueError):
    pass


class DegenerateExponent(LocalizationError, ValueError):
    pass


class InsufficientData(LocalizationError, ValueError):
    pass


# fingerprint
class EmptyTraining(LocalizationError, ValueError):
    pass


class ParseError(LocalizationError, ValueError):
    """Malformed input record. ``line`` and ``offset`` locate it when known."""

    def __init__(self, reason: str, *, line: int | None = None, offset: int | None = None):
        self.reason = reason
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{', '.join(where)}: {reason}" if where else reason)


class SchemaMismatch(LocalizationError, ValueError):
    pass


# estimator
class NotEnoughEntries(LocalizationError, ValueError):
    pass


class InsufficientOverlap(LocalizationError, ValueError):
    pass


class KTooLarge(LocalizationError, ValueError):
    pass


# ingest / simulator / eval
class OutOfOrder(LocalizationError, ValueError):
    pass


class AnchorAtReceiver(LocalizationError, ValueError):
    pass


class EmptyRun(LocalizationError, ValueError):
    pass
