"""Liquidity-parameter calibration against market option quotes.

Per quote: back out an implied volatility from the anchor price (the bid by
default; the bid/ask mid optionally), use it as the baseline volatility of
a Frey-Patie model, then bisect the liquidity parameter rho on
[0, bracket_hi] until the model price meets the ask.  The model price is
nondecreasing in rho (the nonlinear premium grows with illiquidity), which
is verified on five bracket samples before bisecting; bid-anchoring makes
the rho = 0 price sit at or below the target, so a nonnegative root always
exists once the upper bracket clears the target.

Two interchangeable pricing engines are supported: the asymptotic
approximation ("asym", fast) and a full Newton finite-difference solve
("newton", slow but free of the first-order truncation).

Quote files are plain CSV with header ``tau,S,bid,ask,strike,r,q``; results
serialize to CSV with header ``tau,S,sigma_impl,rho_star,iterations,
residual,engine`` plus a JSON mirror that also carries per-row failures.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from .asymptotic import QuadratureConfig, price_asymptotic
from .bs import implied_vol
from .exceptions import (
    BadNumberError,
    BracketFailError,
    CrossedQuoteError,
    EmptyFileError,
    InputError,
    MissingColumnError,
    NonConvergenceError,
    NonMonotonePriceError,
    NumericalError,
)
from .fd_engine import SolveGrid, SolverConfig, solve
from .models import MarketParams, ModelSpec

Engine = Literal["asym", "newton"]
Anchor = Literal["bid", "mid"]

QUOTE_COLUMNS = ["tau", "S", "bid", "ask", "strike", "r", "q"]
RESULT_HEADER = ["tau", "S", "sigma_impl", "rho_star", "iterations", "residual", "engine"]

_BRACKET_WIDTH_TOL = 1e-7
_MAX_BISECT = 60
_MAX_WIDENINGS = 4
_MAX_SHRINKS = 8


@dataclass(frozen=True)
class QuoteRecord:
    """One market quote row.  Plain data; validation happens at load time
    (line-numbered errors) and again in :func:`calibrate`."""

    tau: float
    s: float
    bid: float
    ask: float
    strike: float
    r: float
    q: float = 0.0


@dataclass(frozen=True)
class CalibrationResult:
    sigma_impl: float
    rho_star: float
    iterations: int
    residual: float
    engine: Engine


@dataclass(frozen=True)
class SeriesOutcome:
    """Per-row outcome of a series calibration: a result or an error string."""

    row: int
    quote: QuoteRecord
    result: CalibrationResult | None
    error: str | None


def bundled_quotes_path() -> Path:
    """Path of the 8-row call-quote dataset shipped with the package."""
    return Path(resources.files("nlbs").joinpath("data/aapl_quotes.csv"))


# ---------------------------------------------------------------------------
# quote file parsing
# ---------------------------------------------------------------------------


def load_quotes(path) -> list[QuoteRecord]:
    """Parse a quote CSV, rejecting the first malformed row.

    Raises :class:`MissingColumnError` for an incomplete header,
    :class:`EmptyFileError` when no data rows exist,
    :class:`BadNumberError` (with the 1-based line number) for values that
    do not parse or violate positivity, and :class:`CrossedQuoteError` for
    bid > ask.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFileError()
        missing = [col for col in QUOTE_COLUMNS if col not in reader.fieldnames]
        if missing:
            raise MissingColumnError(missing)
        quotes: list[QuoteRecord] = []
        for line_no, row in enumerate(reader, start=2):
            values = {}
            for col in QUOTE_COLUMNS:
                raw = row.get(col)
                if raw is None or raw.strip() == "":
                    raise BadNumberError(line_no, col, "" if raw is None else raw)
                try:
                    values[col] = float(raw)
                except ValueError:
                    raise BadNumberError(line_no, col, raw) from None
            for col in ("tau", "S", "bid", "strike"):
                if not values[col] > 0 or not math.isfinite(values[col]):
                    raise BadNumberError(line_no, col, str(values[col]))
            if values["bid"] > values["ask"]:
                raise CrossedQuoteError(line_no, values["bid"], values["ask"])
            quotes.append(QuoteRecord(
                tau=values["tau"], s=values["S"], bid=values["bid"],
                ask=values["ask"], strike=values["strike"],
                r=values["r"], q=values["q"],
            ))
    if not quotes:
        raise EmptyFileError()
    return quotes


# ---------------------------------------------------------------------------
# pricing engines
# ---------------------------------------------------------------------------


def model_price(
    quote: QuoteRecord,
    sigma_impl: float,
    rho: float,
    engine: Engine = "asym",
    newton_grid: SolveGrid | None = None,
    quad_cfg: QuadratureConfig | None = None,
) -> float:
    """Frey-Patie call price at the quote's (S, tau) with baseline vol
    ``sigma_impl``, through the chosen engine."""
    mkt = MarketParams(sigma_tilde=sigma_impl, strike=quote.strike,
                       maturity=quote.tau, r=quote.r, q=quote.q, kind="call")
    model = ModelSpec.frey_patie(rho)
    if engine == "asym":
        return price_asymptotic(model, mkt, quote.s, quote.tau, quad_cfg)
    if engine == "newton":
        grid = newton_grid or SolveGrid(s_max=3.0 * quote.strike, m=200, n=200,
                                        maturity=quote.tau)
        report = solve(model, mkt, grid, SolverConfig(method="nm1"))
        return float(np.interp(quote.s, grid.s_nodes(), report.final_slice))
    raise InputError(f"unknown engine {engine!r}")


def _validate_quote(quote: QuoteRecord, row: int = -1) -> None:
    if quote.bid > quote.ask:
        raise CrossedQuoteError(row, quote.bid, quote.ask)
    if not (quote.tau > 0 and quote.s > 0 and quote.bid > 0 and quote.strike > 0):
        raise InputError(f"quote row {row} violates positivity: {quote}")


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


def calibrate(
    quote: QuoteRecord,
    engine: Engine = "asym",
    anchor: Anchor = "bid",
    bracket_hi: float = 0.05,
    price_tol: float = 1e-4,
    newton_grid: SolveGrid | None = None,
    quad_cfg: QuadratureConfig | None = None,
    _price_fn: Callable[[float], float] | None = None,
) -> CalibrationResult:
    """Fit rho for one quote by bisection.

    Stops when the price residual drops to ``price_tol`` or the bracket
    narrows to 1e-7.  The upper bracket is doubled up to 4 times if the
    model price there has not reached the target; if it still has not,
    :class:`BracketFailError` is raised.  A five-point monotonicity check
    runs on every bracket before bisecting and aborts with
    :class:`NonMonotonePriceError` on violation (never bisects silently).

    When a probe itself fails to converge (the Newton engine cannot evaluate
    deep-clamp parameter values: at large rho the volatility clamp turns the
    first time level into a cycle for every iteration scheme), the bracket
    is halved until every probe evaluates, up to 8 halvings.  The root, when
    one exists, sits below the infeasible region, so shrinking never skips
    it; if the target price needs the infeasible region the result is an
    honest :class:`BracketFailError`.

    ``_price_fn`` substitutes the rho -> price map (testing hook).
    """
    if not bracket_hi > 0:
        raise InputError(f"bracket_hi must be positive, got {bracket_hi}")
    if not price_tol > 0:
        raise InputError(f"price_tol must be positive, got {price_tol}")
    if anchor not in ("bid", "mid"):
        raise InputError(f"unknown anchor {anchor!r}")
    _validate_quote(quote)

    anchor_price = quote.bid if anchor == "bid" else 0.5 * (quote.bid + quote.ask)
    probe = MarketParams(sigma_tilde=0.5, strike=quote.strike, maturity=quote.tau,
                         r=quote.r, q=quote.q, kind="call")
    sigma_impl = implied_vol(probe, quote.s, quote.tau, anchor_price)
    target = quote.ask

    if _price_fn is not None:
        price_fn = _price_fn
    else:
        def price_fn(rho: float) -> float:
            return model_price(quote, sigma_impl, rho, engine, newton_grid, quad_cfg)

    hi = bracket_hi
    prices: list[float] = []
    widenings = 0
    shrinks = 0
    while True:
        rhos = np.linspace(0.0, hi, 5)
        try:
            prices = [price_fn(float(rho)) for rho in rhos]
        except NonConvergenceError:
            if shrinks >= _MAX_SHRINKS:
                raise
            hi *= 0.5
            shrinks += 1
            continue
        mono_slack = 1e-9 * max(1.0, abs(prices[-1]))
        for a, b in zip(prices, prices[1:]):
            if b < a - mono_slack:
                raise NonMonotonePriceError(
                    f"model price not nondecreasing on [0, {hi}]: {prices}"
                )
        if prices[-1] >= target:
            break
        if shrinks > 0:
            raise BracketFailError(
                f"model price at the largest evaluable bracket rho={hi} is "
                f"{prices[-1]:.6g}, below the target {target:.6g}"
            )
        if widenings >= _MAX_WIDENINGS:
            raise BracketFailError(
                f"model price at rho={hi} is {prices[-1]:.6g}, "
                f"below the target {target:.6g}"
            )
        hi *= 2.0
        widenings += 1

    f_lo = prices[0] - target
    if f_lo > price_tol:
        raise BracketFailError(
            f"target {target:.6g} lies below the rho=0 price {prices[0]:.6g}"
        )

    if abs(f_lo) <= price_tol:
        return CalibrationResult(sigma_impl=sigma_impl, rho_star=0.0, iterations=0,
                                 residual=abs(f_lo), engine=engine)

    lo, hi_b = 0.0, hi
    iterations = 0
    mid, f_mid = hi_b, prices[-1] - target
    while iterations < _MAX_BISECT:
        mid = 0.5 * (lo + hi_b)
        f_mid = price_fn(mid) - target
        iterations += 1
        if abs(f_mid) <= price_tol or (hi_b - lo) <= _BRACKET_WIDTH_TOL:
            break
        if f_mid > 0.0:
            hi_b = mid
        else:
            lo = mid
    else:
        raise NumericalError(
            f"bisection failed to stop in {_MAX_BISECT} iterations "
            f"(residual {abs(f_mid):.3e})"
        )
    return CalibrationResult(sigma_impl=sigma_impl, rho_star=mid,
                             iterations=iterations, residual=abs(f_mid),
                             engine=engine)


def calibrate_series(
    quotes: Sequence[QuoteRecord],
    engine: Engine = "asym",
    anchor: Anchor = "bid",
    bracket_hi: float = 0.05,
    price_tol: float = 1e-4,
    newton_grid: SolveGrid | None = None,
    quad_cfg: QuadratureConfig | None = None,
) -> list[SeriesOutcome]:
    """Calibrate every quote, recording per-row failures without aborting.

    Outcomes come back in input order; each carries either a result or the
    error message of its failure.
    """
    outcomes: list[SeriesOutcome] = []
    for row, quote in enumerate(quotes):
        try:
            result = calibrate(quote, engine=engine, anchor=anchor,
                               bracket_hi=bracket_hi, price_tol=price_tol,
                               newton_grid=newton_grid, quad_cfg=quad_cfg)
            outcomes.append(SeriesOutcome(row=row, quote=quote, result=result, error=None))
        except (InputError, NumericalError) as exc:
            outcomes.append(SeriesOutcome(row=row, quote=quote, result=None,
                                          error=f"{type(exc).__name__}: {exc}"))
    return outcomes


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def outcome_row(outcome: SeriesOutcome) -> dict:
    """JSON-ready mapping for one outcome (result fields null on failure)."""
    res = outcome.result
    return {
        "row": outcome.row,
        "tau": outcome.quote.tau,
        "S": outcome.quote.s,
        "sigma_impl": None if res is None else res.sigma_impl,
        "rho_star": None if res is None else res.rho_star,
        "iterations": None if res is None else res.iterations,
        "residual": None if res is None else res.residual,
        "engine": None if res is None else res.engine,
        "error": outcome.error,
    }


def series_to_csv(outcomes: Sequence[SeriesOutcome], path) -> None:
    """Successful rows as CSV under the fixed result header (failures are
    carried by the JSON mirror)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_HEADER)
        for outcome in outcomes:
            res = outcome.result
            if res is None:
                continue
            writer.writerow([
                repr(float(outcome.quote.tau)),
                repr(float(outcome.quote.s)),
                repr(float(res.sigma_impl)),
                repr(float(res.rho_star)),
                str(res.iterations),
                repr(float(res.residual)),
                res.engine,
            ])


def series_to_json(outcomes: Sequence[SeriesOutcome], path) -> None:
    payload = [outcome_row(outcome) for outcome in outcomes]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
