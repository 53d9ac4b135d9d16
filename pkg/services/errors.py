"""
Exception hierarchy for the darksignal toolkit
Every error raised by the services derives from DarkSignalError so the CLI can
map data problems to exit status 1
"""

from typing import Optional


class DarkSignalError(Exception):
    """Base error; optionally names the file (and line) it came from"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = str(path) if path is not None else None
        self.line = line
        Exception.__init__(self, self._render())

    def _render(self) -> str:
        if self.path and self.line is not None:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path:
            return f"{self.path}: {self.message}"
        return self.message


# ==================== FILE FORMATS ====================

class FormatError(DarkSignalError):
    """A raster or pattern file could not be decoded"""


class MalformedHeader(FormatError):
    pass


class TruncatedData(FormatError):
    pass


class UnsupportedMaxval(FormatError):
    pass


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


# ==================== DATA CONTRACTS ====================

class DimensionMismatch(DarkSignalError):
    pass


class EmptySet(DarkSignalError):
    pass


class InvalidParam(DarkSignalError, ValueError):
    pass


class DegenerateInput(DarkSignalError):
    """Zero-variance operand; distinct from a genuine zero correlation"""


# ==================== MODEL FITTING ====================

class FitError(DarkSignalError):
    pass


class InsufficientData(FitError):
    pass


class AllNonPositive(FitError):
    pass


class MonotoneDecreasing(FitError):
    """No rising segment: non-matching camera or inverted data"""


class NoConvergence(FitError):
    """Iteration budget exhausted; `best` holds the last accepted iterate"""

    def __init__(self, message: str, best=None):
        DarkSignalError.__init__(self, message)
        self.best = best
