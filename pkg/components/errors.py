"""
Error hierarchy shared by every engine component.

Each error also derives from the closest builtin so callers that catch
``ValueError`` / ``RuntimeError`` keep working.
"""
from typing import Optional


class XperError(Exception):
    """Base class for all engine errors"""

    #: short lowercase tag printed by the CLI before the message
    label = "error"

    def describe(self) -> str:
        """Single-line diagnostic used on stderr"""
        message = " ".join(str(self).split())
        return f"{self.label}: {message}"


class DataFormatError(XperError, ValueError):
    """A data file could not be parsed"""

    label = "data format"

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        super().__init__(message)


class MissingColumnError(XperError, KeyError):
    """A required column is absent from a data file"""

    label = "missing column"

    def __init__(self, column: str, available=()):
        self.column = column
        self.available = list(available)
        super().__init__(column)

    def __str__(self) -> str:
        return f"column '{self.column}' not found (available: {', '.join(self.available) or 'none'})"


class StratificationError(XperError, ValueError):
    label = "stratification infeasible"


class DomainError(XperError, ValueError):
    """An argument lies outside the mathematical domain of an operation"""

    label = "domain error"


class RangeError(XperError, IndexError):
    label = "out of range"


class ContractError(XperError, ValueError):
    """Caller broke an interface contract (row width, prediction kinds)"""

    label = "contract violation"


class DegenerateMetricError(XperError, ValueError):
    label = "degenerate metric"


class SingularDesignError(XperError, ValueError):
    label = "singular design"

    def __init__(self, message: str, column: Optional[str] = None):
        self.column = column
        super().__init__(message)


class SeparationError(XperError, RuntimeError):
    label = "separation"


class ConfigurationError(XperError, ValueError):
    label = "configuration error"


class AdapterIOError(XperError, RuntimeError):
    """External model process failed; ``diagnostics`` holds its captured stderr"""

    label = "adapter failure"

    def __init__(self, message: str, diagnostics: str = ""):
        self.diagnostics = diagnostics
        super().__init__(message)

    def __str__(self) -> str:
        base = super().__str__()
        if self.diagnostics:
            tail = self.diagnostics.strip().splitlines()[-1:]
            if tail:
                return f"{base} (stderr: {tail[0]})"
        return base


class GuardRailError(XperError, ValueError):
    label = "guard rail"


class RankError(XperError, ValueError):
    label = "rank deficient"


class GroupDegeneracyError(XperError, ValueError):
    label = "group degeneracy"

    def __init__(self, message: str, group: int):
        self.group = group
        super().__init__(message)


class UsageError(XperError, ValueError):
    """Bad command-line usage detected after argument parsing"""

    label = "usage"
