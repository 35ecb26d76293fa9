from typing import Optional, Sequence


class PermutestError(Exception):
    """
    Base class for all structured runtime errors raised by permutest.

    Every subclass carries a human-readable ``message`` and the original
    ``cause`` exception (if any) so callers can inspect both without
    parsing tracebacks. ``exit_code`` is what the CLI returns when the
    error reaches it.
    """

    category: str = "unknown"
    exit_code: int = 1

    def __init__(self, message: str, cause: Exception = None):
        self.message = message
        self.cause = cause
        super().__init__(message)

    def __str__(self):
        if self.cause:
            cause = f"{type(self.cause).__name__}: {self.cause}"
            return f"[{self.category}] {self.message} (caused by {cause})"
        return f"[{self.category}] {self.message}"


class ParseError(PermutestError):
    """A data file, plan file, distribution string or number could not be parsed."""

    category = "parse"
    exit_code = 2


class ConfigError(PermutestError):
    """The requested run configuration is invalid."""

    category = "config"
    exit_code = 3


class UnknownStatistic(ConfigError):
    """
    Raised when the statistic name is not in the registry
    """

    def __init__(self, name: str, valid_names: Sequence[str]):
        super().__init__(
            f"The statistic {name!r} is not supported. Please choose one from {list(valid_names)}"
        )


class IncompatibleStatistic(ConfigError):
    """
    Raised when a two-sample statistic is asked to run on a sample that does not
    have exactly two groups
    """

    def __init__(self, name: str, k: int):
        super().__init__(
            f"The statistic {name!r} compares two samples but the data has {k} groups. "
            "Use one of the k-sample statistics instead"
        )


class CapExceeded(ConfigError):
    """
    Raised when exhaustive enumeration would exceed the configured cap. The
    caller should switch to the sampled scheme.
    """

    category = "cap_exceeded"

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"Exhaustive enumeration needs {count} group assignments, "
            f"which is above the cap of {cap}. "
            "Use a sampled scheme instead"
        )


class StatisticUndefined(PermutestError):
    """
    Raised when a statistic cannot be evaluated, typically a zero variance
    estimate under studentization. ``assignment`` holds the offending index
    array, or None when the observed data itself is degenerate.
    """

    category = "statistic_undefined"
    exit_code = 3

    def __init__(self, name: str, assignment: Optional[Sequence[int]] = None):
        self.name = name
        self.assignment = None if assignment is None else [int(i) for i in assignment]
        where = "the observed data" if assignment is None else f"assignment {self.assignment}"
        super().__init__(f"The statistic {name!r} is undefined on {where}")
