"""Market data and volatility models.

The engine prices European options under a Black-Scholes equation whose
volatility may depend on the product ``g = S * V_SS`` (spot times the price
convexity, sometimes called the Gamma term):

* ``linear``      -- constant volatility, sigma^2 = sigma_tilde^2.
* ``frey-patie``  -- feedback/illiquidity model,
  sigma = sigma_tilde / (1 - rho * g), with the denominator floored to keep
  the evaluation total.
* ``rapm``        -- risk-adjusted pricing methodology with transaction
  costs, sigma^2 = sigma_tilde^2 * (1 + mu * g^(1/3)), with the bracket
  floored likewise.

Both nonlinear models embed, to first order in their small parameter, into
the class

    sigma^2 = sigma_tilde^2 + 2 * eps * A(tau) * S^(gamma - 1) * g^(delta - 1)

which is what the asymptotic expansion machinery consumes; see
:func:`as_generalized`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray

from .exceptions import InputError, NotExpandableError

Kind = Literal["call", "put"]
ModelKind = Literal["linear", "frey-patie", "rapm"]

_MODEL_KINDS = ("linear", "frey-patie", "rapm")


@dataclass(frozen=True)
class MarketParams:
    """Contract terms and market environment for a single European option.

    Parameters
    ----------
    sigma_tilde : float
        Baseline (constant-part) volatility, annualized.
    strike : float
        Exercise price E.
    maturity : float
        Time to expiry T in years.
    r : float
        Continuously compounded risk-free rate.
    q : float, optional
        Continuous dividend yield.
    kind : {"call", "put"}
    """

    sigma_tilde: float
    strike: float
    maturity: float
    r: float
    q: float = 0.0
    kind: Kind = "call"

    def __post_init__(self) -> None:
        if not self.sigma_tilde > 0:
            raise InputError(f"sigma_tilde must be positive, got {self.sigma_tilde}")
        if not self.strike > 0:
            raise InputError(f"strike must be positive, got {self.strike}")
        if not self.maturity > 0:
            raise InputError(f"maturity must be positive, got {self.maturity}")
        if self.kind not in ("call", "put"):
            raise InputError(f"kind must be 'call' or 'put', got {self.kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    """A volatility model: the variant plus its single parameter.

    ``param`` is rho for "frey-patie", mu for "rapm" and must be 0 for
    "linear".  ``clamp_floor`` keeps sigma^2 evaluation total: the
    Frey-Patie denominator ``1 - rho*g`` and the RAPM bracket
    ``1 + mu*g^(1/3)`` are floored at this value.
    """

    kind: ModelKind
    param: float = 0.0
    clamp_floor: float = 0.05

    def __post_init__(self) -> None:
        if self.kind not in _MODEL_KINDS:
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.param < 0:
            raise InputError(f"model parameter must be nonnegative, got {self.param}")
        if self.kind == "linear" and self.param != 0.0:
            raise InputError("linear model takes no parameter")
        if not 0.0 < self.clamp_floor < 1.0:
            raise InputError(f"clamp_floor must lie in (0, 1), got {self.clamp_floor}")

    @classmethod
    def linear(cls) -> "ModelSpec":
        return cls(kind="linear")

    @classmethod
    def frey_patie(cls, rho: float, clamp_floor: float = 0.05) -> "ModelSpec":
        return cls(kind="frey-patie", param=rho, clamp_floor=clamp_floor)

    @classmethod
    def rapm(cls, mu: float, clamp_floor: float = 0.05) -> "ModelSpec":
        return cls(kind="rapm", param=mu, clamp_floor=clamp_floor)


@dataclass(frozen=True)
class GeneralizedVolSpec:
    """First-order embedding sigma^2 = sigma_tilde^2 + 2*eps*A(tau)*S^(gamma-1)*g^(delta-1).

    ``a`` maps time to maturity tau to the coefficient A(tau).
    """

    epsilon: float
    gamma: float
    delta: float
    a: Callable[[float], float] = field(repr=False)


# ---------------------------------------------------------------------------
# sigma^2 evaluation
# ---------------------------------------------------------------------------


def sigma_squared(model: ModelSpec, mkt: MarketParams, s: float, gamma_term: float) -> float:
    """Evaluate sigma^2 for one grid node.

    ``gamma_term`` is g = S * V_SS.  ``s`` is accepted for signature
    symmetry with the generalized class; the three concrete models depend
    on the state only through g.
    """
    st2 = mkt.sigma_tilde**2
    if model.kind == "linear":
        return st2
    if model.kind == "frey-patie":
        den = max(1.0 - model.param * gamma_term, model.clamp_floor)
        return st2 / (den * den)
    # rapm
    bracket = max(1.0 + model.param * math.copysign(abs(gamma_term) ** (1.0 / 3.0), gamma_term),
                  model.clamp_floor)
    return st2 * bracket


def sigma_squared_grid(
    model: ModelSpec, mkt: MarketParams, gamma_term: NDArray[np.float64]
) -> tuple[NDArray[np.float64], int]:
    """Vectorized :func:`sigma_squared` over a grid of g values.

    Returns the sigma^2 array and the number of nodes where the clamp
    floor fired (a diagnostic the solvers accumulate per run).
    """
    st2 = mkt.sigma_tilde**2
    if model.kind == "linear":
        return np.full_like(gamma_term, st2), 0
    if model.kind == "frey-patie":
        raw = 1.0 - model.param * gamma_term
        clamped = raw < model.clamp_floor
        den = np.maximum(raw, model.clamp_floor)
        return st2 / (den * den), int(np.count_nonzero(clamped))
    raw = 1.0 + model.param * np.cbrt(gamma_term)
    clamped = raw < model.clamp_floor
    return st2 * np.maximum(raw, model.clamp_floor), int(np.count_nonzero(clamped))


# ---------------------------------------------------------------------------
# derivatives with respect to the Gamma term
# ---------------------------------------------------------------------------


def dsigma2_dgamma(model: ModelSpec, mkt: MarketParams, gamma_term: float) -> float:
    """d(sigma^2)/dg at one node; zero inside the clamped region.

    For the RAPM model the one-sided derivative at g = 0 is unbounded; the
    evaluator returns 0 there, which is the correct limit of the Jacobian
    contribution g * d(sigma^2)/dg.
    """
    st2 = mkt.sigma_tilde**2
    if model.kind == "linear":
        return 0.0
    if model.kind == "frey-patie":
        den = 1.0 - model.param * gamma_term
        if den < model.clamp_floor:
            return 0.0
        return 2.0 * model.param * st2 / den**3
    if gamma_term == 0.0:
        return 0.0
    cbrt_g = math.copysign(abs(gamma_term) ** (1.0 / 3.0), gamma_term)
    if 1.0 + model.param * cbrt_g < model.clamp_floor:
        return 0.0
    return st2 * model.param / (3.0 * cbrt_g * cbrt_g)


def dsigma2_dgamma_grid(
    model: ModelSpec, mkt: MarketParams, gamma_term: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Vectorized :func:`dsigma2_dgamma`."""
    st2 = mkt.sigma_tilde**2
    if model.kind == "linear":
        return np.zeros_like(gamma_term)
    if model.kind == "frey-patie":
        den = 1.0 - model.param * gamma_term
        out = np.zeros_like(gamma_term)
        live = den >= model.clamp_floor
        out[live] = 2.0 * model.param * st2 / den[live] ** 3
        return out
    cbrt_g = np.cbrt(gamma_term)
    out = np.zeros_like(gamma_term)
    live = (gamma_term != 0.0) & (1.0 + model.param * cbrt_g >= model.clamp_floor)
    out[live] = st2 * model.param / (3.0 * cbrt_g[live] ** 2)
    return out


def grad_sigma_squared(
    model: ModelSpec,
    mkt: MarketParams,
    s_i: float,
    v_below: float,
    v_mid: float,
    v_above: float,
    ds: float,
) -> tuple[float, float, float]:
    """Partials of sigma^2 at node i with respect to (V_{i-1}, V_i, V_{i+1}).

    g is discretized as S_i * (V_{i+1} - 2 V_i + V_{i-1}) / ds^2, so the
    chain rule gives the familiar (c, -2c, c) stencil scaled by
    d(sigma^2)/dg.
    """
    g = s_i * (v_above - 2.0 * v_mid + v_below) / (ds * ds)
    dd = dsigma2_dgamma(model, mkt, g) * s_i / (ds * ds)
    return (dd, -2.0 * dd, dd)


# ---------------------------------------------------------------------------
# embedding into the generalized first-order class
# ---------------------------------------------------------------------------


def as_generalized(model: ModelSpec, mkt: MarketParams) -> GeneralizedVolSpec:
    """Map a nonlinear model to its generalized first-order coefficients.

    Expanding sigma^2 in the small parameter:

    * Frey-Patie: sigma_tilde^2 (1 - rho g)^(-2) = sigma_tilde^2 + 2 rho
      sigma_tilde^2 g + O(rho^2), i.e. (eps, gamma, delta, A) =
      (rho, 1, 2, sigma_tilde^2).
    * RAPM: sigma_tilde^2 (1 + mu g^(1/3)) = sigma_tilde^2 + 2 mu
      (sigma_tilde^2 / 2) g^(1/3), i.e. (mu, 1, 4/3, sigma_tilde^2 / 2).

    Raises
    ------
    NotExpandableError
        For the linear model (no small parameter to expand in).
    """
    st2 = mkt.sigma_tilde**2
    if model.kind == "frey-patie":
        return GeneralizedVolSpec(epsilon=model.param, gamma=1.0, delta=2.0,
                                  a=lambda tau, c=st2: c)
    if model.kind == "rapm":
        return GeneralizedVolSpec(epsilon=model.param, gamma=1.0, delta=4.0 / 3.0,
                                  a=lambda tau, c=0.5 * st2: c)
    raise NotExpandableError("linear model has no small-parameter expansion")
