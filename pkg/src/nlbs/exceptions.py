"""Exception types raised across the pricing engine.

Two broad families matter to callers (and to the CLI's exit codes):

* ``InputError``: the request itself is malformed (bad parameters, bad
  quote files, unsupported model/transformation combinations).
* ``NumericalError``: the request was well-posed but a numerical
  procedure failed (divergent quadrature, non-convergent iteration,
  singular linear system, failed bracketing).
"""

from __future__ import annotations


class InputError(ValueError):
    """Malformed request: parameters or input files violate a contract."""


class NumericalError(RuntimeError):
    """A numerical procedure failed on an otherwise well-posed request."""


# ---------------------------------------------------------------------------
# model / transformation errors
# ---------------------------------------------------------------------------


class NotExpandableError(InputError):
    """The volatility model has no small-parameter expansion (linear model)."""


class UnsupportedDeltaError(InputError):
    """The nonlinearity exponent delta lies outside the supported range (1, 2]."""


# ---------------------------------------------------------------------------
# closed-form / quadrature errors
# ---------------------------------------------------------------------------


class NoImpliedVolError(NumericalError):
    """The observed price lies outside the arbitrage bounds; no implied vol exists."""


class QuadratureDivergedError(NumericalError):
    """Adaptive quadrature could not meet the requested tolerances."""

    def __init__(self, message: str, estimate: float, error_estimate: float):
        super().__init__(message)
        self.estimate = estimate
        self.error_estimate = error_estimate


# ---------------------------------------------------------------------------
# finite-difference engine errors
# ---------------------------------------------------------------------------


class SingularTridiagonalError(NumericalError):
    """Thomas elimination hit a vanishing pivot."""

    def __init__(self, row: int, pivot: float):
        super().__init__(f"vanishing pivot {pivot:.3e} at row {row}")
        self.row = row
        self.pivot = pivot


class NonConvergenceError(NumericalError):
    """An iterative solver exhausted max_iter without meeting its tolerance."""

    def __init__(self, method: str, level: int, iterations: int, residual: float):
        super().__init__(
            f"{method} failed to converge at time level {level}: "
            f"residual {residual:.3e} after {iterations} iterations"
        )
        self.method = method
        self.level = level
        self.iterations = iterations
        self.residual = residual


# ---------------------------------------------------------------------------
# harness errors
# ---------------------------------------------------------------------------


class EmptyDomainError(InputError):
    """The error-norm comparison window contains no grid nodes."""


# ---------------------------------------------------------------------------
# quote file / calibration errors
# ---------------------------------------------------------------------------


class QuoteFileError(InputError):
    """Base class for problems in a quote CSV file."""


class MissingColumnError(QuoteFileError):
    def __init__(self, missing: list[str]):
        super().__init__(f"quote file is missing columns: {', '.join(missing)}")
        self.missing = missing


class EmptyFileError(QuoteFileError):
    def __init__(self) -> None:
        super().__init__("quote file contains no data rows")


class BadNumberError(QuoteFileError):
    def __init__(self, line: int, field: str, value: str):
        super().__init__(f"line {line}: field '{field}' has bad value {value!r}")
        self.line = line
        self.field = field
        self.value = value


class CrossedQuoteError(InputError):
    """bid > ask (or the quote is otherwise unusable for calibration)."""

    def __init__(self, line: int, bid: float, ask: float):
        super().__init__(f"line {line}: crossed quote bid={bid} > ask={ask}")
        self.line = line
        self.bid = bid
        self.ask = ask


class NonMonotonePriceError(NumericalError):
    """The model price failed the monotonicity pre-check on the bracket."""


class BracketFailError(NumericalError):
    """No sign change on [0, bracket_hi] even after widening; target unreachable."""
