"""Experiment harness: error norms, refinement ladders, EOC/EOTC, sweeps.

Errors are always relative and restricted to the window
S in [0.5 E, 1.5 E] (sup norm, or trapezoid-weighted discrete L2).  Two
refinement ladders appear in the experiments: the convergence-order ladder
keeps (dS)^2 / dtau fixed (halve dS, quarter dtau), the time-complexity
ladder keeps dS / dtau fixed while halving dtau.  Both are encoded by
:class:`RefinementLadder`.

The derived quantities are pure functions of the measured sequences:

    eoc  =  log(err_fine / err_coarse) / log(dS_fine / dS_coarse)
    eotc = -log(t_fine / t_coarse) / log(dtau_fine / dtau_coarse)

so tables can be recomputed bit-identically from their persisted records.
Result tables serialize to CSV with the fixed header ``grid_dS, grid_dtau,
err_linf, eoc_linf, err_l2, eoc_l2, wall_time_s, eotc`` plus a JSON mirror.

Timing notes: wall clock (monotonic), one discarded warm-up run, median of
3 repetitions; time-complexity ladders always run sequentially so the
timings stay honest.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .asymptotic import QuadratureConfig, price_asymptotic
from .bs import bs_price
from .exceptions import EmptyDomainError, InputError, NonConvergenceError
from .fd_engine import SolveGrid, SolverConfig, boundary_values, payoff, solve
from .models import MarketParams, ModelSpec

Norm = Literal["linf", "l2"]
Reference = Literal["closed-form-linear", "finest-self"]

HARNESS_HEADER = [
    "grid_dS", "grid_dtau", "err_linf", "eoc_linf",
    "err_l2", "eoc_l2", "wall_time_s", "eotc",
]


@dataclass(frozen=True)
class RefinementLadder:
    """A geometric ladder of grids.

    ``space_ratio`` scales dS per level; dtau scales by the square of it
    under the "ds2-over-dtau" constraint (fixed (dS)^2/dtau) and linearly
    under "ds-over-dtau" (fixed dS/dtau).
    """

    base_grid: SolveGrid
    levels: int
    space_ratio: float = 0.5
    constraint: Literal["ds2-over-dtau", "ds-over-dtau"] = "ds2-over-dtau"

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise InputError(f"levels must be at least 1, got {self.levels}")
        if not 0.0 < self.space_ratio < 1.0:
            raise InputError(f"space_ratio must lie in (0, 1), got {self.space_ratio}")
        if self.constraint not in ("ds2-over-dtau", "ds-over-dtau"):
            raise InputError(f"unknown constraint {self.constraint!r}")

    def grids(self) -> list[SolveGrid]:
        base = self.base_grid
        out = [base]
        for k in range(1, self.levels):
            shrink = self.space_ratio**k
            ds = base.delta_s * shrink
            dtau = base.delta_tau * (shrink * shrink
                                     if self.constraint == "ds2-over-dtau" else shrink)
            m = round(base.s_max / ds) + 1
            n = round(base.maturity / dtau) + 1
            out.append(SolveGrid(s_max=base.s_max, m=m, n=n, maturity=base.maturity))
        return out


@dataclass(frozen=True)
class ExperimentRecord:
    """One ladder level: measured errors and timing plus the derived orders.

    ``eoc_*`` and ``eotc`` are None at the first level (no predecessor) and
    whenever the quantity is undefined (zero error, missing reference).
    """

    grid: SolveGrid
    err_linf: float | None
    err_l2: float | None
    eoc_linf: float | None
    eoc_l2: float | None
    wall_time: float | None
    eotc: float | None


@dataclass(frozen=True)
class SweepRecord:
    """One (parameter value, grid) cell of a method-difference sweep."""

    model_family: str
    param: float
    grid: SolveGrid
    gap_linf: float


@dataclass(frozen=True)
class PairRecord:
    """Difference between two solver variants on one grid, both norms."""

    grid: SolveGrid
    diff_linf: float
    diff_l2: float


# ---------------------------------------------------------------------------
# norms and order formulas
# ---------------------------------------------------------------------------


def error_norm(
    v: NDArray[np.float64],
    v_ref: NDArray[np.float64],
    grid: SolveGrid,
    mkt: MarketParams,
    norm: Norm = "linf",
) -> float:
    """Relative error of ``v`` against ``v_ref`` on S in [0.5 E, 1.5 E]."""
    v = np.asarray(v, dtype=float)
    v_ref = np.asarray(v_ref, dtype=float)
    if len(v) != grid.m or len(v_ref) != grid.m:
        raise InputError("slices do not match the grid")
    s = grid.s_nodes()
    mask = (s >= 0.5 * mkt.strike) & (s <= 1.5 * mkt.strike)
    if not mask.any():
        raise EmptyDomainError(
            f"no grid nodes in [{0.5 * mkt.strike}, {1.5 * mkt.strike}]"
        )
    diff = np.abs(v[mask] - v_ref[mask])
    ref = np.abs(v_ref[mask])
    if norm == "linf":
        return float(diff.max() / ref.max())
    if norm == "l2":
        sw = s[mask]
        return float(math.sqrt(np.trapezoid(diff * diff, sw)
                               / np.trapezoid(ref * ref, sw)))
    raise InputError(f"unknown norm {norm!r}")


def eoc_value(err_coarse: float, err_fine: float, ds_coarse: float, ds_fine: float) -> float:
    """Experimental order of convergence between two consecutive levels."""
    return math.log(err_fine / err_coarse) / math.log(ds_fine / ds_coarse)


def eotc_value(time_coarse: float, time_fine: float,
               dtau_coarse: float, dtau_fine: float) -> float:
    """Experimental order of time complexity between two consecutive levels."""
    return -math.log(time_fine / time_coarse) / math.log(dtau_fine / dtau_coarse)


def _safe_eoc(err_coarse, err_fine, ds_coarse, ds_fine):
    if err_coarse is None or err_fine is None or err_coarse <= 0 or err_fine <= 0:
        return None
    return eoc_value(err_coarse, err_fine, ds_coarse, ds_fine)


def _safe_eotc(t_coarse, t_fine, dtau_coarse, dtau_fine):
    if t_coarse is None or t_fine is None or t_coarse <= 0 or t_fine <= 0:
        return None
    return eotc_value(t_coarse, t_fine, dtau_coarse, dtau_fine)


# ---------------------------------------------------------------------------
# reference slices
# ---------------------------------------------------------------------------


def closed_form_slice(mkt: MarketParams, grid: SolveGrid, tau: float | None = None) -> NDArray[np.float64]:
    """Linear-model price on the grid nodes (S = 0 filled with its boundary value)."""
    tau = mkt.maturity if tau is None else tau
    s = grid.s_nodes()
    out = np.empty(grid.m)
    out[0] = boundary_values(mkt, grid, tau)[0] if tau > 0 else payoff(mkt, s[:1])[0]
    for i in range(1, grid.m):
        out[i] = bs_price(mkt, float(s[i]), tau)
    return out


def asym_slice(
    model: ModelSpec,
    mkt: MarketParams,
    grid: SolveGrid,
    tau: float | None = None,
    quad_cfg: QuadratureConfig | None = None,
) -> NDArray[np.float64]:
    """Asymptotic price on the grid nodes (S = 0 filled with its boundary value)."""
    tau = mkt.maturity if tau is None else tau
    s = grid.s_nodes()
    out = np.empty(grid.m)
    out[0] = boundary_values(mkt, grid, tau)[0] if tau > 0 else payoff(mkt, s[:1])[0]
    for i in range(1, grid.m):
        out[i] = price_asymptotic(model, mkt, float(s[i]), tau, quad_cfg)
    return out


def _is_effectively_linear(model: ModelSpec) -> bool:
    return model.kind == "linear" or model.param == 0.0


def _as_config(method) -> SolverConfig:
    if isinstance(method, SolverConfig):
        return method
    return SolverConfig(method=method)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


def eoc_table(
    method,
    model: ModelSpec,
    mkt: MarketParams,
    ladder: RefinementLadder,
    reference: Reference = "closed-form-linear",
) -> list[ExperimentRecord]:
    """Convergence-order table down a refinement ladder.

    ``method`` is a solver name or a full :class:`SolverConfig`.  The
    "closed-form-linear" reference demands an effectively linear model; the
    "finest-self" reference measures self-convergence against the finest
    level interpolated down (exact node matching when M-1 doubles).  A
    solver failure at some level truncates the table to the completed
    levels (partial result, no raise).
    """
    if ladder.levels < 2:
        raise InputError("an EOC ladder needs at least 2 levels")
    if reference == "closed-form-linear" and not _is_effectively_linear(model):
        raise InputError("closed-form-linear reference is only valid for the linear model")
    if reference not in ("closed-form-linear", "finest-self"):
        raise InputError(f"unknown reference {reference!r}")
    cfg = _as_config(method)
    grids = ladder.grids()

    solved: list[tuple[SolveGrid, NDArray[np.float64], float]] = []
    for grid in grids:
        try:
            report = solve(model, mkt, grid, cfg)
        except NonConvergenceError:
            break
        solved.append((grid, report.final_slice, report.wall_time))
    if not solved:
        return []

    if reference == "closed-form-linear":
        refs = [closed_form_slice(mkt, grid) for grid, _, _ in solved]
    else:
        fine_grid, fine_slice, _ = solved[-1]
        fine_nodes = fine_grid.s_nodes()
        refs = [np.interp(grid.s_nodes(), fine_nodes, fine_slice)
                for grid, _, _ in solved]

    records: list[ExperimentRecord] = []
    prev: ExperimentRecord | None = None
    for (grid, slc, wall), ref in zip(solved, refs):
        if reference == "finest-self" and grid is solved[-1][0]:
            err_linf = err_l2 = None  # self-comparison is vacuous
        else:
            err_linf = error_norm(slc, ref, grid, mkt, "linf")
            err_l2 = error_norm(slc, ref, grid, mkt, "l2")
        rec = ExperimentRecord(
            grid=grid,
            err_linf=err_linf,
            err_l2=err_l2,
            eoc_linf=None if prev is None else _safe_eoc(
                prev.err_linf, err_linf, prev.grid.delta_s, grid.delta_s),
            eoc_l2=None if prev is None else _safe_eoc(
                prev.err_l2, err_l2, prev.grid.delta_s, grid.delta_s),
            wall_time=wall,
            eotc=None if prev is None else _safe_eotc(
                prev.wall_time, wall, prev.grid.delta_tau, grid.delta_tau),
        )
        records.append(rec)
        prev = rec
    return records


def _timed(fn, repeats: int) -> float:
    fn()  # warm-up, discarded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    times.sort()
    return times[len(times) // 2]


def eotc_table(
    method,
    model: ModelSpec,
    mkt: MarketParams,
    ladder: RefinementLadder,
    repeats: int = 3,
    quad_cfg: QuadratureConfig | None = None,
) -> list[ExperimentRecord]:
    """Time-complexity table down a ladder (intended: fixed dS/dtau).

    ``method`` is a solver name, a :class:`SolverConfig`, or the string
    "asym" to time the asymptotic pricer over the full final-time slice.
    Errors are measured by self-convergence against the finest level so the
    err/eoc columns stay meaningful for nonlinear models; the finest level
    itself carries no error.  Levels run sequentially.
    """
    if ladder.levels < 2:
        raise InputError("an EOTC ladder needs at least 2 levels")
    grids = ladder.grids()
    is_asym = isinstance(method, str) and method == "asym"
    cfg = None if is_asym else _as_config(method)

    solved: list[tuple[SolveGrid, NDArray[np.float64], float]] = []
    for grid in grids:
        try:
            if is_asym:
                wall = _timed(lambda: asym_slice(model, mkt, grid, quad_cfg=quad_cfg),
                              repeats)
                slc = asym_slice(model, mkt, grid, quad_cfg=quad_cfg)
            else:
                wall = _timed(lambda: solve(model, mkt, grid, cfg), repeats)
                slc = solve(model, mkt, grid, cfg).final_slice
        except NonConvergenceError:
            break
        solved.append((grid, slc, wall))
    if not solved:
        return []

    fine_grid, fine_slice, _ = solved[-1]
    fine_nodes = fine_grid.s_nodes()

    records: list[ExperimentRecord] = []
    prev: ExperimentRecord | None = None
    for grid, slc, wall in solved:
        if grid is fine_grid:
            err_linf = err_l2 = None
        else:
            ref = np.interp(grid.s_nodes(), fine_nodes, fine_slice)
            err_linf = error_norm(slc, ref, grid, mkt, "linf")
            err_l2 = error_norm(slc, ref, grid, mkt, "l2")
        rec = ExperimentRecord(
            grid=grid,
            err_linf=err_linf,
            err_l2=err_l2,
            eoc_linf=None if prev is None else _safe_eoc(
                prev.err_linf, err_linf, prev.grid.delta_s, grid.delta_s),
            eoc_l2=None if prev is None else _safe_eoc(
                prev.err_l2, err_l2, prev.grid.delta_s, grid.delta_s),
            wall_time=wall,
            eotc=None if prev is None else _safe_eotc(
                prev.wall_time, wall, prev.grid.delta_tau, grid.delta_tau),
        )
        records.append(rec)
        prev = rec
    return records


def method_difference_sweep(
    mkt: MarketParams,
    grids: Sequence[SolveGrid],
    param_values: Sequence[float],
    model_family: Literal["frey-patie", "rapm"] = "frey-patie",
    quad_cfg: QuadratureConfig | None = None,
) -> list[SweepRecord]:
    """Relative sup-norm gap between the Newton solve and the asymptotic
    price, one row per (parameter value, grid).

    At parameter 0 the asymptotic price is the closed form, so the gap is
    the pure discretization error of the solver.
    """
    values = list(param_values)
    if any(p < 0 for p in values):
        raise InputError("parameter values must be nonnegative")
    if any(b < a for a, b in zip(values, values[1:])):
        raise InputError("parameter values must be ascending")
    if model_family not in ("frey-patie", "rapm"):
        raise InputError(f"unknown model family {model_family!r}")

    cfg = SolverConfig(method="nm1")
    rows: list[SweepRecord] = []
    for grid in grids:
        for p in values:
            model = ModelSpec(kind=model_family, param=p)
            newton = solve(model, mkt, grid, cfg).final_slice
            asym = asym_slice(model, mkt, grid, quad_cfg=quad_cfg)
            gap = error_norm(newton, asym, grid, mkt, "linf")
            rows.append(SweepRecord(model_family=model_family, param=p,
                                    grid=grid, gap_linf=gap))
    return rows


def newton_pair_difference(
    model: ModelSpec,
    mkt: MarketParams,
    grids: Sequence[SolveGrid],
    method_a: str = "nm1",
    method_b: str = "nm2",
) -> list[PairRecord]:
    """Difference between two solver variants per grid, both norms
    (variant a is the reference)."""
    cfg_a = _as_config(method_a)
    cfg_b = _as_config(method_b)
    rows: list[PairRecord] = []
    for grid in grids:
        va = solve(model, mkt, grid, cfg_a).final_slice
        vb = solve(model, mkt, grid, cfg_b).final_slice
        rows.append(PairRecord(
            grid=grid,
            diff_linf=error_norm(vb, va, grid, mkt, "linf"),
            diff_l2=error_norm(vb, va, grid, mkt, "l2"),
        ))
    return rows


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def record_row(rec: ExperimentRecord, include_timing: bool = True) -> dict:
    """One record as an ordered mapping matching HARNESS_HEADER."""
    return {
        "grid_dS": rec.grid.delta_s,
        "grid_dtau": rec.grid.delta_tau,
        "err_linf": rec.err_linf,
        "eoc_linf": rec.eoc_linf,
        "err_l2": rec.err_l2,
        "eoc_l2": rec.eoc_l2,
        "wall_time_s": rec.wall_time if include_timing else None,
        "eotc": rec.eotc if include_timing else None,
    }


def records_to_csv(records: Sequence[ExperimentRecord], path,
                   include_timing: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HARNESS_HEADER)
        for rec in records:
            row = record_row(rec, include_timing)
            writer.writerow([_fmt(row[key]) for key in HARNESS_HEADER])


def records_to_json(records: Sequence[ExperimentRecord], path,
                    include_timing: bool = True) -> None:
    payload = [record_row(rec, include_timing) for rec in records]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_records_csv(path) -> list[dict]:
    """Rows of a harness CSV with floats parsed back (None for blanks)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HARNESS_HEADER:
            raise InputError(f"unexpected header {reader.fieldnames}")
        return [
            {key: (None if row[key] == "" else float(row[key])) for key in HARNESS_HEADER}
            for row in reader
        ]
