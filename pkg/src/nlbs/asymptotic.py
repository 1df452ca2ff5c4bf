"""First-order asymptotic pricing for weakly nonlinear volatility.

For models embedding into

    sigma^2 = sigma_tilde^2 + 2*eps*A(tau)*S^(gamma-1)*g^(delta-1),
    g = S * V_SS,

the price expands as V = V0 + eps*V1 + O(eps^2), where V0 is the linear
Black-Scholes price and the correction V1 solves the linear Black-Scholes
equation driven by the source A(tau) * S^gamma * H0(S, tau)^delta built from
the Gamma term H0 of V0, with zero terminal data.

Under the log-price substitution x = ln(S/E) and the usual damping factor
exp(alpha*x + beta*tau), the source becomes a tilted Gaussian in x and the
correction collapses to a single time integral:

    V1(S, tau) = E^gamma / (2*pi*sigma^2)^(delta/2)
                 * (S/E)^((gamma-delta)/(1-delta))
                 * exp([beta + P^2 sigma^2 / (2 (1-delta)^2)] tau)
                 * int_0^tau A(xi) xi^(-(delta-1)/2) Q(xi)^(-1/2)
                            exp(K xi - M(S)/Q(xi)) dxi,

    Q(xi) = delta*tau + (1-delta)*xi,
    M(S)  = (delta / (2 sigma^2)) * (x + P sigma^2 tau / (1-delta))^2,

with constants alpha, beta, P, K depending only on the market parameters and
(gamma, delta); see :func:`constants`.  The integrand has an integrable
endpoint singularity xi^(-(delta-1)/2); the substitution xi = tau * w^p with
p >= 2/(3-delta) makes it bounded (the w-exponent after substitution is
p - 1 - p*(delta-1)/2, nonnegative exactly on that range), after which an
adaptive Gauss-Kronrod rule converges fast.

:func:`u_convolution` evaluates the same correction by brute force in the
transformed variables, as a double integral of the heat kernel against the
transformed source.  It deliberately shares no algebra with
:func:`v1_correction` beyond the constants, so the two routes cross-check
each other.

Everything here requires delta in (1, 2]; Q then stays positive on [0, tau]
and both shipped models (delta = 2 and 4/3) are covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from .bs import bs_eval
from .exceptions import InputError, QuadratureDivergedError, UnsupportedDeltaError
from .models import GeneralizedVolSpec, MarketParams, ModelSpec, as_generalized

_EXP_FLOOR = -745.0  # exp() underflows to 0 below this; skip the call


@dataclass(frozen=True)
class AsymptoticConstants:
    """Constants of the reduced correction integral.

    ``alpha``/``beta`` are the damping exponents of the log-price
    transformation; ``p`` and ``k`` are the drift and growth constants of
    the reduced kernel (written P and K in the formula above).
    """

    alpha: float
    beta: float
    p: float
    k: float


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for the correction quadrature.

    ``endpoint_power_p`` is the exponent of the endpoint substitution
    xi = tau * w^p; ``None`` selects the smallest admissible value
    2/(3 - delta) per model.  Values below that leave the integrand
    unbounded at w = 0 and are rejected.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 200
    endpoint_power_p: float | None = None


def _check_delta(delta: float) -> None:
    if not 1.0 < delta <= 2.0:
        raise UnsupportedDeltaError(f"delta must lie in (1, 2], got {delta}")


def constants(gen: GeneralizedVolSpec, mkt: MarketParams) -> AsymptoticConstants:
    """Transformation constants for a generalized model.

    alpha = 1/2 + (q - r)/sigma^2 and beta = -(sigma^2/2) alpha^2 - r damp
    the heat equation; P = gamma - delta - alpha (1 - delta) and
    K = P^2 sigma^2 / (2 (delta-1)) + beta (delta-1) shape the reduced
    source.  For (gamma, delta) = (1, 2) the identity K = -q holds.
    """
    _check_delta(gen.delta)
    st2 = mkt.sigma_tilde**2
    alpha = 0.5 + (mkt.q - mkt.r) / st2
    beta = -0.5 * st2 * alpha * alpha - mkt.r
    p = gen.gamma - gen.delta - alpha * (1.0 - gen.delta)
    k = p * p * st2 / (2.0 * (gen.delta - 1.0)) + beta * (gen.delta - 1.0)
    return AsymptoticConstants(alpha=alpha, beta=beta, p=p, k=k)


def _resolve_power(cfg: QuadratureConfig, delta: float) -> float:
    p_min = 2.0 / (3.0 - delta)
    p = cfg.endpoint_power_p if cfg.endpoint_power_p is not None else p_min
    if p < p_min - 1e-12:
        raise InputError(
            f"endpoint_power_p = {p} is below the admissible minimum "
            f"2/(3 - delta) = {p_min:.6g}"
        )
    return p


def v1_correction_with_estimate(
    gen: GeneralizedVolSpec,
    mkt: MarketParams,
    s: float,
    tau: float,
    cfg: QuadratureConfig | None = None,
) -> tuple[float, float]:
    """Correction V1(S, tau) together with the quadrature error estimate.

    The estimate applies to the time integral scaled by the (positive)
    prefactor, so it bounds the absolute error of the returned value.
    """
    if cfg is None:
        cfg = QuadratureConfig()
    if not s > 0:
        raise InputError(f"spot must be positive, got {s}")
    _check_delta(gen.delta)
    if tau <= 0.0:
        return 0.0, 0.0

    c = constants(gen, mkt)
    st2 = mkt.sigma_tilde**2
    delta, gamma = gen.delta, gen.gamma
    power = _resolve_power(cfg, delta)
    x = math.log(s / mkt.strike)

    one_m_d = 1.0 - delta
    m_shift = x + c.p * st2 * tau / one_m_d
    m_const = (delta / (2.0 * st2)) * m_shift * m_shift
    prefactor = (
        mkt.strike**gamma
        / (2.0 * math.pi * st2) ** (delta / 2.0)
        * math.exp((gamma - delta) / one_m_d * x)
        * math.exp((c.beta + c.p * c.p * st2 / (2.0 * one_m_d * one_m_d)) * tau)
    )

    # xi = tau * w^p; the xi^(-(delta-1)/2) factor and the Jacobian
    # tau * p * w^(p-1) combine into coeff * w^w_exp with w_exp >= 0.
    w_exp = power - 1.0 - power * (delta - 1.0) / 2.0
    coeff = power * tau ** (1.0 - (delta - 1.0) / 2.0)
    a_of, k_const = gen.a, c.k

    def integrand(w: float) -> float:
        xi = tau * w**power
        q = delta * tau + one_m_d * xi
        arg = k_const * xi - m_const / q
        if arg < _EXP_FLOOR:
            return 0.0
        return coeff * w**w_exp * a_of(xi) / math.sqrt(q) * math.exp(arg)

    result = integrate.quad(
        integrand, 0.0, 1.0,
        epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions, full_output=1,
    )
    if len(result) > 3:
        value, err = result[0], result[1]
        raise QuadratureDivergedError(
            f"correction quadrature failed: {result[3]}",
            estimate=prefactor * value, error_estimate=prefactor * err,
        )
    value, err = result[0], result[1]
    return prefactor * value, prefactor * err


def v1_correction(
    gen: GeneralizedVolSpec,
    mkt: MarketParams,
    s: float,
    tau: float,
    cfg: QuadratureConfig | None = None,
) -> float:
    """First-order correction V1(S, tau) of the generalized model.

    V1 does not depend on eps; the priced correction is eps * V1.  Returns
    0 for tau <= 0 (the correction has zero terminal data).
    """
    return v1_correction_with_estimate(gen, mkt, s, tau, cfg)[0]


def u_convolution(
    gen: GeneralizedVolSpec,
    mkt: MarketParams,
    x: float,
    tau: float,
    cfg: QuadratureConfig | None = None,
) -> float:
    """Transformed correction u(x, tau) as a heat-kernel double integral.

    u relates to the correction by V1(S, tau) = exp(alpha*x + beta*tau)
    * u(x, tau) with x = ln(S/E).  The source

        f(s, xi) = E^gamma A(xi) / (2 pi sigma^2 xi)^(delta/2)
                   * exp(-delta s^2 / (2 sigma^2 xi) + P s + beta (delta-1) xi)

    is convolved against the heat kernel of conductivity sigma^2:
    u = int_0^tau int_R G(x - s, tau - xi) f(s, xi) ds dxi.  The inner
    integral runs over a window wide enough for both Gaussian factors; the
    outer integral has an integrable xi^((1-delta)/2) endpoint behavior the
    adaptive rule resolves.  Kept numerically brute-force on purpose: it is
    the independent cross-check of :func:`v1_correction`.
    """
    if cfg is None:
        cfg = QuadratureConfig()
    _check_delta(gen.delta)
    if tau <= 0.0:
        return 0.0

    c = constants(gen, mkt)
    st2 = mkt.sigma_tilde**2
    delta, gamma = gen.delta, gen.gamma
    half_delta = 0.5 * delta
    log_e_gamma = gamma * math.log(mkt.strike)
    growth = c.beta * (delta - 1.0)
    p_drift = c.p
    a_of = gen.a

    def inner(xi: float) -> float:
        t_kernel = tau - xi
        if xi <= 0.0 or t_kernel <= 0.0:
            return 0.0
        w_src = mkt.sigma_tilde * math.sqrt(xi / delta)
        w_ker = mkt.sigma_tilde * math.sqrt(t_kernel)
        src_center = p_drift * w_src * w_src
        margin = 14.0 * max(w_src, w_ker) + abs(src_center)
        lo = min(0.0, x) - margin
        hi = max(0.0, x) + margin
        log_pref = (
            log_e_gamma
            - half_delta * math.log(2.0 * math.pi * st2 * xi)
            - 0.5 * math.log(2.0 * math.pi * st2 * t_kernel)
            + growth * xi
        )
        inv_2v_src = delta / (2.0 * st2 * xi)
        inv_2v_ker = 1.0 / (2.0 * st2 * t_kernel)

        def point(s: float) -> float:
            d = x - s
            arg = log_pref - inv_2v_src * s * s + p_drift * s - inv_2v_ker * d * d
            if arg < _EXP_FLOOR:
                return 0.0
            return math.exp(arg)

        breaks = sorted({src_center, x})
        breaks = [b for b in breaks if lo < b < hi]
        val, _ = integrate.quad(point, lo, hi, points=breaks or None,
                                epsabs=1e-300, epsrel=1e-11, limit=200)
        return a_of(xi) * val

    result = integrate.quad(
        inner, 0.0, tau,
        epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions, full_output=1,
    )
    if len(result) > 3:
        raise QuadratureDivergedError(
            f"convolution quadrature failed: {result[3]}",
            estimate=result[0], error_estimate=result[1],
        )
    return result[0]


def price_asymptotic(
    model: ModelSpec,
    mkt: MarketParams,
    s: float,
    tau: float,
    cfg: QuadratureConfig | None = None,
) -> float:
    """Approximate price V0 + eps * V1 for a concrete model.

    The linear model returns the closed form exactly; nonlinear models with
    a zero parameter short-circuit to it as well (the correction term
    vanishes identically).
    """
    v0 = bs_eval(mkt, s, tau).price
    if model.kind == "linear":
        return v0
    if tau <= 0.0:
        return v0
    gen = as_generalized(model, mkt)
    if gen.epsilon == 0.0:
        return v0
    return v0 + gen.epsilon * v1_correction(gen, mkt, s, tau, cfg)
