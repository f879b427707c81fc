"""Exception types raised across the package."""


class IPDError(Exception):
    """Base class for all package errors."""


class InvalidTopologyError(IPDError, ValueError):
    pass


class ZeroOutDegreeError(InvalidTopologyError):
    pass


class InvalidInputError(IPDError, ValueError):
    pass


class ParseError(IPDError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InvalidStateError(IPDError, ValueError):
    pass


class WeightTooLargeError(InvalidStateError):
    pass


class DivergenceError(IPDError, FloatingPointError):
    def __init__(self, message: str, round_index: int | None = None):
        self.round_index = round_index
        super().__init__(message if round_index is None else f"round {round_index}: {message}")


class NumericDegeneracyError(DivergenceError):
    pass


class InnerSolveError(IPDError, RuntimeError):
    pass


class DegenerateStartError(IPDError, ZeroDivisionError):
    pass


class CertificateInfeasibleError(IPDError, ValueError):
    def __init__(self, message: str, failed: tuple[str, ...] = ()):
        self.failed = failed
        super().__init__(message)


class SpecError(InvalidInputError):
    """Experiment spec failed validation; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = list(problems)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.problems))
