"""Closed-form linear Black-Scholes valuation.

Provides the constant-volatility price, the d1/d2 arguments, the Gamma term
H0 = S * V_SS of the linear price (the quantity the nonlinear corrections
feed on), and an implied-volatility inverter.  The normal CDF goes through
``math.erfc``, which is accurate to well below 1e-12 absolute over the whole
real line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import InputError, NoImpliedVolError
from .models import MarketParams

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x: float) -> float:
    """Standard normal density."""
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


@dataclass(frozen=True)
class BsEval:
    """Linear Black-Scholes valuation at one (S, tau) point.

    ``h0`` is the Gamma term S * V_SS of the linear price,
    exp(-q tau) * phi(d1) / (sigma_tilde * sqrt(tau)); identical for calls
    and puts.  At expiry h0 is 0 away from the strike and +inf at it.
    """

    price: float
    d1: float
    d2: float
    h0: float


def bs_eval(mkt: MarketParams, s: float, tau: float) -> BsEval:
    """Evaluate the linear model at spot ``s`` and time to maturity ``tau``.

    ``tau <= 0`` returns the payoff with the degenerate d1/d2/h0 limits.
    """
    if not s > 0:
        raise InputError(f"spot must be positive, got {s}")
    e, r, q, sig = mkt.strike, mkt.r, mkt.q, mkt.sigma_tilde
    if tau <= 0.0:
        if s > e:
            d = math.inf
        elif s < e:
            d = -math.inf
        else:
            d = 0.0
        payoff = max(s - e, 0.0) if mkt.kind == "call" else max(e - s, 0.0)
        return BsEval(price=payoff, d1=d, d2=d, h0=math.inf if s == e else 0.0)

    vol = sig * math.sqrt(tau)
    d1 = (math.log(s / e) + (r - q + 0.5 * sig * sig) * tau) / vol
    d2 = d1 - vol
    disc_s = s * math.exp(-q * tau)
    disc_e = e * math.exp(-r * tau)
    if mkt.kind == "call":
        price = disc_s * norm_cdf(d1) - disc_e * norm_cdf(d2)
    else:
        price = disc_e * norm_cdf(-d2) - disc_s * norm_cdf(-d1)
    h0 = math.exp(-q * tau) * norm_pdf(d1) / vol
    return BsEval(price=price, d1=d1, d2=d2, h0=h0)


def bs_price(mkt: MarketParams, s: float, tau: float) -> float:
    """Linear Black-Scholes price; shorthand for ``bs_eval(...).price``."""
    return bs_eval(mkt, s, tau).price


def implied_vol(mkt: MarketParams, s: float, tau: float, observed_price: float) -> float:
    """Invert the linear price for volatility by bisection.

    The volatility field of ``mkt`` is ignored; strike, rates and kind are
    taken from it.  Raises :class:`NoImpliedVolError` when the observed
    price sits at or outside the arbitrage bounds (below intrinsic or above
    the discounted-spot/strike cap), where no positive vol reproduces it.
    The returned vol reprices the observation to 1e-10 absolute.
    """
    if not s > 0:
        raise InputError(f"spot must be positive, got {s}")
    if not tau > 0:
        raise InputError(f"tau must be positive, got {tau}")
    disc_s = s * math.exp(-mkt.q * tau)
    disc_e = mkt.strike * math.exp(-mkt.r * tau)
    if mkt.kind == "call":
        lo_bound, hi_bound = max(disc_s - disc_e, 0.0), disc_s
    else:
        lo_bound, hi_bound = max(disc_e - disc_s, 0.0), disc_e
    if observed_price <= lo_bound or observed_price >= hi_bound:
        raise NoImpliedVolError(
            f"observed price {observed_price} outside arbitrage bounds "
            f"({lo_bound:.6g}, {hi_bound:.6g})"
        )

    def f(vol: float) -> float:
        probe = MarketParams(sigma_tilde=vol, strike=mkt.strike, maturity=mkt.maturity,
                             r=mkt.r, q=mkt.q, kind=mkt.kind)
        return bs_eval(probe, s, tau).price - observed_price

    lo, hi = 1e-6, 2.0
    for _ in range(16):
        if f(hi) >= 0.0:
            break
        hi *= 2.0
    else:
        raise NoImpliedVolError("no volatility below 131072 reprices the observation")
    for _ in range(16):
        if f(lo) <= 0.0:
            break
        lo *= 0.5
    else:
        raise NoImpliedVolError("observed price indistinguishable from intrinsic value")

    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= 1e-10:
            return mid
        if fm > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return mid
