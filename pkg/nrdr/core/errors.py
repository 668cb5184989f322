"""Exception hierarchy shared by the library and the CLI."""
from typing import Optional, Sequence


class NRDRError(Exception):
    """Base class for every error raised by nrdr."""


class ParameterError(NRDRError, ValueError):
    """An argument is outside its documented range."""


class FormatError(NRDRError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConnectivityError(NRDRError):
    """The neighbourhood graph has more than one connected component."""

    def __init__(self, component_sizes: Sequence[int]):
        self.component_sizes = sorted((int(s) for s in component_sizes), reverse=True)
        super().__init__(
            f"neighbourhood graph is disconnected: {len(self.component_sizes)} components "
            f"of sizes {self.component_sizes}; increase k"
        )


class DegenerateInputError(NRDRError, ValueError):
    """Input carries no usable variation (e.g. all-zero projections)."""


class NumericalError(NRDRError, ArithmeticError):
    """A linear system is numerically singular."""


class ConvergenceError(NRDRError):
    """The iterative eigensolver did not reach its residual tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), step: Optional[int] = None):
        self.message = message
        self.residual = residual
        self.step = step
        prefix = f"step {step}: " if step is not None else ""
        super().__init__(f"{prefix}{message} (residual {residual:.3e})")

    def at_step(self, step: int) -> "ConvergenceError":
        return ConvergenceError(self.message, self.residual, step)


class DiagnosticError(NRDRError):
    """A diagnostic was requested on inputs that cannot support it."""
