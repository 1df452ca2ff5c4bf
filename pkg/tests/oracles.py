"""Independent reference computations shared by the test modules.

Everything here is written directly against the underlying mathematics and
avoids the package's own algebra: scipy banded solves instead of the
hand-rolled elimination, a separately written d1 formula, plain quadrature
of the risk-neutral density.  Slow and simple on purpose.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.linalg import solve_banded

from nlbs.models import GeneralizedVolSpec, MarketParams

_GL_TIME = np.polynomial.legendre.leggauss(8)
_GL_SPACE = np.polynomial.legendre.leggauss(6)


def lognormal_price(mkt: MarketParams, s: float, tau: float) -> float:
    """Discounted expectation of the pay-off under the lognormal terminal law."""
    sig = mkt.sigma_tilde
    drift = (mkt.r - mkt.q - 0.5 * sig * sig) * tau
    vol = sig * math.sqrt(tau)

    def integrand(z: float) -> float:
        s_t = s * math.exp(drift + vol * z)
        if mkt.kind == "call":
            pay = max(s_t - mkt.strike, 0.0)
        else:
            pay = max(mkt.strike - s_t, 0.0)
        return pay * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    kink = (math.log(mkt.strike / s) - drift) / vol
    lo = min(-14.0, kink - 1.0)
    hi = max(14.0, kink + 1.0)
    val, _ = integrate.quad(integrand, lo, hi, points=[kink],
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return math.exp(-mkt.r * tau) * val


def correction_pde_slice(
    gen: GeneralizedVolSpec, mkt: MarketParams, s_max: float, m: int, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Maturity slice of the driven linear equation for the correction term.

    Backward Euler in time, central differences in space, zero initial and
    boundary data.  The driving term A(xi) S^gamma H0^delta is averaged over
    every space-time cell with Gauss-Legendre rules; the first time cell is
    integrated in the square-root variable because the source blows up
    integrably at expiry near the strike.  Returns (s_nodes, slice).
    """
    s = np.linspace(0.0, s_max, m)
    ds = s[1] - s[0]
    dtau = mkt.maturity / (n - 1)
    sig, r, q, e = mkt.sigma_tilde, mkt.r, mkt.q, mkt.strike

    mid = s[1:-1]
    diffusion = 0.5 * sig * sig * mid * mid / (ds * ds)
    drift = (r - q) * mid / (2.0 * ds)
    band = np.zeros((3, m - 2))
    band[0, 1:] = -dtau * (diffusion + drift)[:-1]
    band[1, :] = 1.0 + dtau * (2.0 * diffusion + r)
    band[2, :-1] = -dtau * (diffusion - drift)[1:]

    t_x = 0.5 * (_GL_TIME[0] + 1.0)
    t_w = 0.5 * _GL_TIME[1]
    s_x = 0.5 * (_GL_SPACE[0] + 1.0)
    s_w = 0.5 * _GL_SPACE[1]
    s_pts = mid[:, None] + (s_x[None, :] - 0.5) * ds

    def source_avg(xi: float) -> np.ndarray:
        root = sig * math.sqrt(xi)
        d1 = (np.log(s_pts / e) + (r - q + 0.5 * sig * sig) * xi) / root
        h0 = math.exp(-q * xi) * np.exp(-0.5 * d1 * d1) / (
            math.sqrt(2.0 * math.pi) * root)
        return (gen.a(xi) * s_pts**gen.gamma * h0**gen.delta) @ s_w

    def time_avg(tau_lo: float) -> np.ndarray:
        acc = np.zeros(m - 2)
        if tau_lo == 0.0:
            u_hi = math.sqrt(dtau)
            for u, w in zip(t_x * u_hi, t_w * u_hi):
                acc += (2.0 * u * w) * source_avg(u * u)
        else:
            for xi, w in zip(tau_lo + t_x * dtau, t_w * dtau):
                acc += w * source_avg(xi)
        return acc / dtau

    v = np.zeros(m - 2)
    for level in range(n - 1):
        rhs = v + dtau * time_avg(level * dtau)
        v = solve_banded((1, 1), band, rhs)
    out = np.zeros(m)
    out[1:-1] = v
    return s, out
