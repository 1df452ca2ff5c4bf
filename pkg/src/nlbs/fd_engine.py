"""Implicit finite-difference engine for the nonlinear Black-Scholes equation.

Working in time to maturity tau = T - t on the uniform grid S_i = i * dS,
backward Euler with central differences turns each time step into a
nonlinear tridiagonal system

    H(V^{n+1}) V^{n+1} = V^n,

where row i of H(W) Z discretizes Z - dtau * (1/2 sigma^2(W) S^2 Z_SS
+ (r - q) S Z_S - r Z) and the first/last rows are identity rows carrying
the Dirichlet boundary values.  H splits as Diag(sigma_i^2) * H1 + H2 with
H1 the constant second-difference block and H2 the constant
drift/discount/time block; the split isolates where the nonlinearity
enters and gives the Newton Jacobian the closed form

    Jac(G) = H(V) + Diag(H1 V) * grad(Sigma),         G(V) = H(V) V - V^n.

Three per-level iterations are provided:

* ``frozen`` -- fixed-point iteration on the coefficients,
  V^(k+1) = H(V^(k))^-1 V^n;
* ``nm1``    -- Newton's method on the root problem G(V) = 0;
* ``nm2``    -- iterated linearized corrections: solve the implicit system
  with the diffusion coefficient linearized at the current iterate
  (sigma_hat^2 = sigma^2 + g * d(sigma^2)/dg) for a correction v with
  homogeneous Dirichlet values, update V <- V + v, stop on ||v||_inf.

With the volatility term fully linearized, nm2's correction matrix
coincides row-for-row with nm1's analytic Jacobian and its right-hand side
with -G, so the two methods share the discrete fixed point and differ only
in stopping semantics (nm1 stops on the residual norm, nm2 stops on the
correction norm and applies that final correction).  A unit test pins the
operator identity.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .exceptions import InputError, NonConvergenceError, SingularTridiagonalError
from .models import (
    MarketParams,
    ModelSpec,
    dsigma2_dgamma_grid,
    sigma_squared_grid,
)

Method = Literal["frozen", "nm1", "nm2"]
DerivativeMode = Literal["analytic", "finite-difference"]

_METHODS = ("frozen", "nm1", "nm2")
_MODES = ("analytic", "finite-difference")


@dataclass(frozen=True)
class SolveGrid:
    """Uniform discretization: m nodes S_i = i * delta_s on [0, s_max],
    n levels tau_n = n * delta_tau on [0, maturity]."""

    s_max: float
    m: int
    n: int
    maturity: float

    def __post_init__(self) -> None:
        if not self.s_max > 0:
            raise InputError(f"s_max must be positive, got {self.s_max}")
        if self.m < 3:
            raise InputError(f"need at least 3 spatial points, got m={self.m}")
        if self.n < 2:
            raise InputError(f"need at least 2 time levels, got n={self.n}")
        if not self.maturity > 0:
            raise InputError(f"maturity must be positive, got {self.maturity}")

    @property
    def delta_s(self) -> float:
        return self.s_max / (self.m - 1)

    @property
    def delta_tau(self) -> float:
        return self.maturity / (self.n - 1)

    def s_nodes(self) -> NDArray[np.float64]:
        return np.linspace(0.0, self.s_max, self.m)

    def tau_levels(self) -> NDArray[np.float64]:
        return np.linspace(0.0, self.maturity, self.n)


@dataclass(frozen=True)
class SolverConfig:
    method: Method = "nm1"
    derivative_mode: DerivativeMode = "analytic"
    tol: float = 1e-8
    max_iter: int = 100
    first_level_guess: float = 1.0

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise InputError(f"unknown method {self.method!r}")
        if self.derivative_mode not in _MODES:
            raise InputError(f"unknown derivative mode {self.derivative_mode!r}")
        if not self.tol > 0:
            raise InputError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InputError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass
class Tridiagonal:
    """Tridiagonal matrix by bands; ``lower[0]`` and ``upper[-1]`` are unused."""

    lower: NDArray[np.float64]
    diag: NDArray[np.float64]
    upper: NDArray[np.float64]

    def matvec(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        y = self.diag * x
        y[:-1] += self.upper[:-1] * x[1:]
        y[1:] += self.lower[1:] * x[:-1]
        return y

    def diagonally_dominant(self) -> bool:
        off = np.abs(self.upper).copy()
        off[-1] = 0.0
        off[1:] += np.abs(self.lower[1:])
        return bool(np.all(np.abs(self.diag) >= off))


@dataclass
class SolveReport:
    """Outcome of one time-marched solve.

    ``residual_norms[k]`` is the per-iteration trace of time level k+1 (the
    stopping quantity of the chosen method).  ``clamp_events`` counts grid
    nodes where the volatility clamp floor fired, summed over all
    coefficient evaluations.  ``non_dominant_levels`` counts levels whose
    first assembled system failed the diagonal-dominance check (reported,
    never enforced).
    """

    grid: SolveGrid
    method: Method
    final_slice: NDArray[np.float64]
    iterations_per_level: list[int]
    residual_norms: list[list[float]]
    wall_time: float
    clamp_events: int
    non_dominant_levels: int
    full_surface: NDArray[np.float64] | None = None


# ---------------------------------------------------------------------------
# grid-level building blocks
# ---------------------------------------------------------------------------


def payoff(mkt: MarketParams, s: NDArray[np.float64]) -> NDArray[np.float64]:
    """Terminal condition on the grid nodes."""
    if mkt.kind == "call":
        return np.maximum(s - mkt.strike, 0.0)
    return np.maximum(mkt.strike - s, 0.0)


def boundary_values(mkt: MarketParams, grid: SolveGrid, tau: float) -> tuple[float, float]:
    """Dirichlet values (V(0, tau), V(s_max, tau))."""
    disc_e = mkt.strike * math.exp(-mkt.r * tau)
    if mkt.kind == "call":
        return 0.0, grid.s_max - disc_e
    return disc_e, 0.0


def gamma_term(grid: SolveGrid, v: NDArray[np.float64]) -> NDArray[np.float64]:
    """g_i = S_i * (V_{i+1} - 2 V_i + V_{i-1}) / dS^2; zero on boundary rows."""
    s = grid.s_nodes()
    g = np.zeros_like(v)
    g[1:-1] = s[1:-1] * (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (grid.delta_s**2)
    return g


def operator_parts(mkt: MarketParams, grid: SolveGrid) -> tuple[Tridiagonal, Tridiagonal]:
    """Constant blocks of the split H = Diag(sigma^2) H1 + H2.

    H1 carries the dtau * S^2 / dS^2 second-difference stencil (rows zeroed
    at the boundaries), H2 the drift, discount and time-derivative terms
    (identity rows at the boundaries).
    """
    s = grid.s_nodes()
    dt, ds = grid.delta_tau, grid.delta_s
    w = dt * s * s / (ds * ds)
    off = -0.5 * w
    h1 = Tridiagonal(lower=off.copy(), diag=w.copy(), upper=off.copy())
    drift = dt * (mkt.r - mkt.q) * s / (2.0 * ds)
    h2 = Tridiagonal(lower=drift.copy(), diag=np.full(grid.m, 1.0 + dt * mkt.r),
                     upper=-drift)
    for band in (h1.lower, h1.diag, h1.upper, h2.lower, h2.upper):
        band[0] = 0.0
        band[-1] = 0.0
    h2.diag[0] = 1.0
    h2.diag[-1] = 1.0
    return h1, h2


def _assemble(
    model: ModelSpec,
    mkt: MarketParams,
    grid: SolveGrid,
    v: NDArray[np.float64],
    parts: tuple[Tridiagonal, Tridiagonal] | None = None,
) -> tuple[Tridiagonal, NDArray[np.float64], Tridiagonal, Tridiagonal,
           NDArray[np.float64], int]:
    h1, h2 = parts if parts is not None else operator_parts(mkt, grid)
    g = gamma_term(grid, v)
    sig2, clamps = sigma_squared_grid(model, mkt, g)
    h = Tridiagonal(
        lower=sig2 * h1.lower + h2.lower,
        diag=sig2 * h1.diag + h2.diag,
        upper=sig2 * h1.upper + h2.upper,
    )
    return h, sig2, h1, h2, g, clamps


def assemble(
    model: ModelSpec, mkt: MarketParams, grid: SolveGrid, v: NDArray[np.float64]
) -> tuple[Tridiagonal, NDArray[np.float64], Tridiagonal, Tridiagonal]:
    """Scheme matrix H(V) and its split: (H, Sigma, H1, H2) with H = Diag(Sigma) H1 + H2."""
    if len(v) != grid.m:
        raise InputError(f"V has length {len(v)}, grid has m={grid.m}")
    h, sig2, h1, h2, _, _ = _assemble(model, mkt, grid, v)
    return h, sig2, h1, h2


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------


def _analytic_jacobian(
    model: ModelSpec,
    mkt: MarketParams,
    grid: SolveGrid,
    v: NDArray[np.float64],
    h: Tridiagonal,
    h1: Tridiagonal,
    g: NDArray[np.float64],
) -> Tridiagonal:
    # Jac = H + Diag(H1 V) grad(Sigma); grad of sigma_i^2 over (V_{i-1}, V_i,
    # V_{i+1}) is the (c, -2c, c) stencil with c = d(sigma^2)/dg * S_i / dS^2.
    h1v = h1.matvec(v)
    dd = dsigma2_dgamma_grid(model, mkt, g)
    coef = h1v * dd * grid.s_nodes() / (grid.delta_s**2)
    return Tridiagonal(lower=h.lower + coef, diag=h.diag - 2.0 * coef,
                       upper=h.upper + coef)


def _fd_jacobian(
    model: ModelSpec,
    mkt: MarketParams,
    grid: SolveGrid,
    v: NDArray[np.float64],
    parts: tuple[Tridiagonal, Tridiagonal] | None = None,
) -> Tridiagonal:
    # Structured central differences: columns of the same residue class mod 3
    # never share a row of the tridiagonal pattern, so 6 perturbed evaluations
    # recover every entry.
    def apply_h(w: NDArray[np.float64]) -> NDArray[np.float64]:
        h, _, _, _, _, _ = _assemble(model, mkt, grid, w, parts)
        return h.matvec(w)

    m = grid.m
    step = 1e-6 * np.maximum(1.0, np.abs(v))
    lower = np.zeros(m)
    diag = np.zeros(m)
    upper = np.zeros(m)
    idx = np.arange(m)
    for color in range(3):
        cols = idx[idx % 3 == color]
        vp = v.copy()
        vp[cols] += step[cols]
        vm = v.copy()
        vm[cols] -= step[cols]
        df = apply_h(vp) - apply_h(vm)
        two_h = 2.0 * step
        diag[cols] = df[cols] / two_h[cols]
        up = cols[cols >= 1]
        upper[up - 1] = df[up - 1] / two_h[up]
        lo = cols[cols <= m - 2]
        lower[lo + 1] = df[lo + 1] / two_h[lo]
    return Tridiagonal(lower=lower, diag=diag, upper=upper)


def jacobian(
    model: ModelSpec,
    mkt: MarketParams,
    grid: SolveGrid,
    v: NDArray[np.float64],
    mode: DerivativeMode = "analytic",
) -> Tridiagonal:
    """Jacobian of G(V) = H(V) V - V_prev (V_prev drops out).

    ``analytic`` composes the volatility gradient into Diag(H1 V) grad(Sigma);
    ``finite-difference`` central-differences the three stencil entries per
    row with step 1e-6 * max(1, |V_i|).  Boundary rows are identity either
    way.
    """
    if len(v) != grid.m:
        raise InputError(f"V has length {len(v)}, grid has m={grid.m}")
    if mode == "finite-difference":
        return _fd_jacobian(model, mkt, grid, v)
    if mode != "analytic":
        raise InputError(f"unknown derivative mode {mode!r}")
    h, _, h1, _, g, _ = _assemble(model, mkt, grid, v)
    return _analytic_jacobian(model, mkt, grid, v, h, h1, g)


def _nm2_operator(
    model: ModelSpec,
    mkt: MarketParams,
    grid: SolveGrid,
    mode: DerivativeMode,
    h1: Tridiagonal,
    h2: Tridiagonal,
    g: NDArray[np.float64],
    sig2: NDArray[np.float64],
) -> Tridiagonal:
    # Correction-system matrix: the implicit operator with the diffusion
    # coefficient linearized at the current iterate,
    # sigma_hat^2 = sigma^2 + g * d(sigma^2)/dg.  Built from the coefficient
    # fields rather than from jacobian() so the algebraic identity between
    # the two stays an observable fact instead of a code path.
    if mode == "analytic":
        dd = dsigma2_dgamma_grid(model, mkt, g)
    else:
        step = 1e-6 * np.maximum(1.0, np.abs(g))
        up, _ = sigma_squared_grid(model, mkt, g + step)
        dn, _ = sigma_squared_grid(model, mkt, g - step)
        dd = (up - dn) / (2.0 * step)
    sig_hat = sig2 + g * dd
    return Tridiagonal(
        lower=sig_hat * h1.lower + h2.lower,
        diag=sig_hat * h1.diag + h2.diag,
        upper=sig_hat * h1.upper + h2.upper,
    )


# ---------------------------------------------------------------------------
# Thomas algorithm
# ---------------------------------------------------------------------------


def thomas_solve(tri: Tridiagonal, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
    """Solve the tridiagonal system by forward elimination / back substitution.

    Raises :class:`SingularTridiagonalError` when a pivot falls below
    1e-14 times its row scale.
    """
    a = tri.lower
    b = tri.diag
    c = tri.upper
    n = len(rhs)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.abs(c))
    scale = np.maximum(scale, 1e-300)
    cp = np.empty(n)
    dp = np.empty(n)
    piv = b[0]
    if abs(piv) < 1e-14 * scale[0]:
        raise SingularTridiagonalError(0, float(piv))
    cp[0] = c[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i] * cp[i - 1]
        if abs(piv) < 1e-14 * scale[i]:
            raise SingularTridiagonalError(i, float(piv))
        cp[i] = c[i] / piv
        dp[i] = (rhs[i] - a[i] * dp[i - 1]) / piv
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


# ---------------------------------------------------------------------------
# per-level iterations
# ---------------------------------------------------------------------------
#
# The boundary entries of v_guess carry the Dirichlet values of the target
# level; the right-hand side is v_prev with those entries substituted, and
# every iteration keeps the boundary rows pinned (identity rows).


def _rhs_with_bc(v_prev: NDArray[np.float64], v_guess: NDArray[np.float64]) -> NDArray[np.float64]:
    b = v_prev.copy()
    b[0] = v_guess[0]
    b[-1] = v_guess[-1]
    return b


def _step_frozen(model, mkt, grid, cfg, v_prev, v_guess, parts, level=0):
    b = _rhs_with_bc(v_prev, v_guess)
    v = v_guess.copy()
    residuals: list[float] = []
    clamps = 0
    dominant = True
    diff = math.inf
    for k in range(cfg.max_iter + 1):
        h, _, _, _, _, ncl = _assemble(model, mkt, grid, v, parts)
        clamps += ncl
        if k == 0:
            dominant = h.diagonally_dominant()
        res = float(np.max(np.abs(h.matvec(v) - b)))
        # successive-iterate stall is the frozen criterion proper; the scheme
        # residual ends the linear model (and any lucky iterate) one solve
        # earlier with the same guarantee the Newton methods give
        if diff <= cfg.tol or res <= cfg.tol:
            return v, k, residuals, clamps, dominant
        if k == cfg.max_iter:
            raise NonConvergenceError("frozen", level, k, min(diff, res))
        v_new = thomas_solve(h, b)
        diff = float(np.max(np.abs(v_new - v)))
        residuals.append(diff)
        v = v_new
    raise AssertionError("unreachable")


def _step_nm1(model, mkt, grid, cfg, v_prev, v_guess, parts, level=0):
    b = _rhs_with_bc(v_prev, v_guess)
    v = v_guess.copy()
    residuals: list[float] = []
    clamps = 0
    dominant = True
    for k in range(cfg.max_iter + 1):
        h, sig2, h1, h2, g, ncl = _assemble(model, mkt, grid, v, parts)
        clamps += ncl
        if k == 0:
            dominant = h.diagonally_dominant()
        g_res = h.matvec(v) - b
        res = float(np.max(np.abs(g_res)))
        residuals.append(res)
        if res <= cfg.tol:
            return v, k, residuals, clamps, dominant
        if k == cfg.max_iter:
            raise NonConvergenceError("nm1", level, k, res)
        if cfg.derivative_mode == "analytic":
            jac = _analytic_jacobian(model, mkt, grid, v, h, h1, g)
        else:
            jac = _fd_jacobian(model, mkt, grid, v, parts)
        v = v - thomas_solve(jac, g_res)
    raise AssertionError("unreachable")


def _step_nm2(model, mkt, grid, cfg, v_prev, v_guess, parts, level=0):
    b = _rhs_with_bc(v_prev, v_guess)
    v = v_guess.copy()
    residuals: list[float] = []
    clamps = 0
    dominant = True
    corr_norm = math.inf
    for k in range(1, cfg.max_iter + 1):
        h, sig2, h1, h2, g, ncl = _assemble(model, mkt, grid, v, parts)
        clamps += ncl
        if k == 1:
            dominant = h.diagonally_dominant()
        rhs = b - h.matvec(v)
        a_lin = _nm2_operator(model, mkt, grid, cfg.derivative_mode, h1, h2, g, sig2)
        corr = thomas_solve(a_lin, rhs)
        v = v + corr
        corr_norm = float(np.max(np.abs(corr)))
        residuals.append(corr_norm)
        if corr_norm <= cfg.tol:
            return v, k, residuals, clamps, dominant
    raise NonConvergenceError("nm2", level, cfg.max_iter, corr_norm)


def _check_step_args(grid, cfg, v_prev, v_guess, want: str) -> None:
    if cfg.method != want:
        raise InputError(f"cfg.method is {cfg.method!r}, expected {want!r}")
    if len(v_prev) != grid.m or len(v_guess) != grid.m:
        raise InputError("slice length does not match grid.m")


def step_nm1(model, mkt, grid, cfg, v_prev, v_guess):
    """One time level of Newton's method on G(V) = H(V)V - V_prev.

    Returns (V_next, iterations); iterations counts Jacobian solves.
    """
    _check_step_args(grid, cfg, v_prev, v_guess, "nm1")
    v, iters, _, _, _ = _step_nm1(model, mkt, grid, cfg, v_prev, v_guess, None)
    return v, iters


def step_nm2(model, mkt, grid, cfg, v_prev, v_guess):
    """One time level of the iterated linearized-correction method.

    Returns (V_next, iterations); iterations counts correction solves.
    """
    _check_step_args(grid, cfg, v_prev, v_guess, "nm2")
    v, iters, _, _, _ = _step_nm2(model, mkt, grid, cfg, v_prev, v_guess, None)
    return v, iters


def step_frozen(model, mkt, grid, cfg, v_prev, v_guess):
    """One time level of the frozen-coefficients fixed-point iteration.

    Returns (V_next, iterations); iterations counts linear solves.
    """
    _check_step_args(grid, cfg, v_prev, v_guess, "frozen")
    v, iters, _, _, _ = _step_frozen(model, mkt, grid, cfg, v_prev, v_guess, None)
    return v, iters


_STEPPERS = {"frozen": _step_frozen, "nm1": _step_nm1, "nm2": _step_nm2}


# ---------------------------------------------------------------------------
# time marching
# ---------------------------------------------------------------------------


def solve(
    model: ModelSpec,
    mkt: MarketParams,
    grid: SolveGrid,
    cfg: SolverConfig,
    store_surface: bool = False,
) -> SolveReport:
    """March the pay-off from tau = 0 to tau = maturity.

    The guess at each level is the previous level's solution; the first
    level starts from the constant ``cfg.first_level_guess``.  Timing uses
    a monotonic clock and covers the marching loop only.
    """
    if not math.isclose(grid.maturity, mkt.maturity, rel_tol=1e-12):
        raise InputError(
            f"grid maturity {grid.maturity} does not match market maturity {mkt.maturity}"
        )
    parts = operator_parts(mkt, grid)
    stepper = _STEPPERS[cfg.method]
    s = grid.s_nodes()
    v = payoff(mkt, s)
    surface = [v.copy()] if store_surface else None
    iterations_per_level: list[int] = []
    residual_norms: list[list[float]] = []
    clamp_events = 0
    non_dominant = 0

    t0 = time.perf_counter()
    for level in range(1, grid.n):
        tau = level * grid.delta_tau
        lo, hi = boundary_values(mkt, grid, tau)
        if level == 1:
            guess = np.full(grid.m, float(cfg.first_level_guess))
        else:
            guess = v.copy()
        guess[0] = lo
        guess[-1] = hi
        v, iters, resids, clamps, dominant = stepper(
            model, mkt, grid, cfg, v, guess, parts, level=level
        )
        iterations_per_level.append(iters)
        residual_norms.append(resids)
        clamp_events += clamps
        if not dominant:
            non_dominant += 1
        if store_surface:
            surface.append(v.copy())
    wall = time.perf_counter() - t0

    return SolveReport(
        grid=grid,
        method=cfg.method,
        final_slice=v,
        iterations_per_level=iterations_per_level,
        residual_norms=residual_norms,
        wall_time=wall,
        clamp_events=clamp_events,
        non_dominant_levels=non_dominant,
        full_surface=np.vstack(surface) if store_surface else None,
    )
