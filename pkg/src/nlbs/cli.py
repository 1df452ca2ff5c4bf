"""Command-line front end.

Subcommands: price, solve, compare, eoc, eotc, calibrate.  Every command
writes machine-readable CSV plus a JSON mirror into --output-dir and, by
default, renders the matching figure as a PNG next to them (--no-plot turns
that off).  --format picks which of the two table renderings is echoed to
stdout.  --no-timing blanks the wall-time columns so outputs are
byte-reproducible.

Exit codes: 0 success, 2 input error (bad flags, inconsistent grid, file
I/O), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .asymptotic import v1_correction_with_estimate
from .bs import bs_price
from .calibration import (
    bundled_quotes_path,
    calibrate_series,
    load_quotes,
    series_to_csv,
    series_to_json,
)
from .exceptions import InputError, NumericalError
from .fd_engine import SolveGrid, SolverConfig, solve
from .harness import (
    RefinementLadder,
    closed_form_slice,
    eoc_table,
    eotc_table,
    method_difference_sweep,
    newton_pair_difference,
    records_to_csv,
    records_to_json,
)
from .models import MarketParams, ModelSpec, as_generalized
from . import plotting

_MATURITY_DEFAULT = 1.0 / 12.0


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"not a comma-separated list of numbers: {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"not a comma-separated list of integers: {text!r}") from None


def _market_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("market")
    g.add_argument("--sigma", type=float, default=0.4,
                   help="baseline volatility (default 0.4)")
    g.add_argument("--strike", type=float, default=100.0,
                   help="strike price (default 100)")
    g.add_argument("--maturity", type=float, default=_MATURITY_DEFAULT,
                   help="time to maturity in years (default 1/12)")
    g.add_argument("--rate", type=float, default=0.03,
                   help="risk-free rate (default 0.03)")
    g.add_argument("--dividend", type=float, default=0.0,
                   help="continuous dividend yield (default 0)")
    g.add_argument("--kind", choices=("call", "put"), default="call",
                   help="option type (default call)")


def _model_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("model")
    g.add_argument("--model", choices=("linear", "frey-patie", "rapm"),
                   default="frey-patie", help="volatility model (default frey-patie)")
    g.add_argument("--rho", type=float, default=0.0,
                   help="frey-patie liquidity parameter (default 0)")
    g.add_argument("--mu", type=float, default=0.0,
                   help="rapm transaction-cost parameter (default 0)")
    g.add_argument("--clamp-floor", type=float, default=0.05,
                   help="lower clamp on the nonlinear factor (default 0.05)")


def _grid_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("grid")
    g.add_argument("--s-max", type=float, default=300.0,
                   help="spatial domain upper end (default 300)")
    g.add_argument("--grid-m", type=int, default=200,
                   help="number of spatial nodes (default 200)")
    g.add_argument("--grid-n", type=int, default=200,
                   help="number of time levels (default 200)")


def _solver_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("solver")
    g.add_argument("--method", choices=("frozen", "nm1", "nm2"), default="nm1",
                   help="time-stepping iteration (default nm1)")
    g.add_argument("--derivative", choices=("analytic", "finite-difference"),
                   default="analytic", help="Jacobian mode (default analytic)")
    g.add_argument("--tol", type=float, default=1e-8,
                   help="per-level stopping tolerance (default 1e-8)")
    g.add_argument("--max-iter", type=int, default=100,
                   help="iteration cap per time level (default 100)")
    g.add_argument("--first-level-guess", type=float, default=1.0,
                   help="constant initial guess at the first time level (default 1)")


def _output_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("output")
    g.add_argument("--output-dir", default="nlbs-out",
                   help="directory for result files (default nlbs-out)")
    g.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="table rendering echoed to stdout (default csv)")
    g.add_argument("--no-timing", action="store_true",
                   help="blank wall-time columns for reproducible outputs")
    g.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                   help="render PNG figures next to the tables (default on)")


def _market(args: argparse.Namespace) -> MarketParams:
    return MarketParams(sigma_tilde=args.sigma, strike=args.strike,
                        maturity=args.maturity, r=args.rate, q=args.dividend,
                        kind=args.kind)


def _model(args: argparse.Namespace) -> ModelSpec:
    if args.model == "linear":
        return ModelSpec(kind="linear", clamp_floor=args.clamp_floor)
    param = args.rho if args.model == "frey-patie" else args.mu
    return ModelSpec(kind=args.model, param=param, clamp_floor=args.clamp_floor)


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(method=args.method, derivative_mode=args.derivative,
                        tol=args.tol, max_iter=args.max_iter,
                        first_level_guess=args.first_level_guess)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _echo_table(args: argparse.Namespace, csv_path: Path, json_path: Path) -> None:
    chosen = json_path if args.format == "json" else csv_path
    sys.stdout.write(chosen.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_price(args: argparse.Namespace) -> None:
    mkt = _market(args)
    model = _model(args)
    spot = mkt.strike if args.spot is None else args.spot
    tau = mkt.maturity if args.tau is None else args.tau
    if spot <= 0:
        raise InputError(f"--S must be positive, got {spot}")

    linear = bs_price(mkt, spot, tau)
    if model.kind == "linear" or model.param == 0.0 or tau <= 0.0:
        correction, quad_err = 0.0, 0.0
    else:
        gen = as_generalized(model, mkt)
        v1, err = v1_correction_with_estimate(gen, mkt, spot, tau)
        correction, quad_err = gen.epsilon * v1, gen.epsilon * err
    price = linear + correction

    out = _out_dir(args)
    payload = {
        "command": "price",
        "model": model.kind,
        "param": model.param,
        "kind": mkt.kind,
        "S": spot,
        "tau": tau,
        "price": price,
        "linear_price": linear,
        "correction": correction,
        "correction_error_estimate": quad_err,
    }
    _write_json(out / "price.json", payload)
    print(f"model {model.kind} (param {model.param!r}), "
          f"{mkt.kind} at S={spot!r}, tau={tau!r}")
    print(f"price {price!r}  (linear part {linear!r}, correction {correction!r})")


def _cmd_solve(args: argparse.Namespace) -> None:
    mkt = _market(args)
    model = _model(args)
    grid = SolveGrid(s_max=args.s_max, m=args.grid_m, n=args.grid_n,
                     maturity=mkt.maturity)
    cfg = _solver_config(args)
    report = solve(model, mkt, grid, cfg)

    out = _out_dir(args)
    stem = f"solve_{cfg.method}"
    s = grid.s_nodes()
    _write_csv(out / f"{stem}.csv", ["S", "V"],
               [[repr(float(si)), repr(float(vi))]
                for si, vi in zip(s, report.final_slice)])
    payload = {
        "command": "solve",
        "method": report.method,
        "model": model.kind,
        "param": model.param,
        "kind": mkt.kind,
        "grid": {"s_max": grid.s_max, "m": grid.m, "n": grid.n,
                 "maturity": grid.maturity},
        "iterations_per_level": report.iterations_per_level,
        "total_iterations": sum(report.iterations_per_level),
        "wall_time_s": None if args.no_timing else report.wall_time,
        "clamp_events": report.clamp_events,
        "non_dominant_levels": report.non_dominant_levels,
    }
    _write_json(out / f"{stem}.json", payload)

    if args.plot:
        slices = {cfg.method: report.final_slice}
        if model.kind == "linear" or model.param == 0.0:
            slices["closed form"] = closed_form_slice(mkt, grid)
        plotting.save_slice_figure(
            out / f"{stem}.png", s, slices,
            f"{model.kind} {mkt.kind}, M={grid.m}, N={grid.n}")
        plotting.save_iterations_figure(
            out / f"{stem}_iterations.png", report.iterations_per_level,
            f"{cfg.method} iterations per time level")

    print(f"solved {model.kind} {mkt.kind} on M={grid.m}, N={grid.n} "
          f"with {cfg.method}: {sum(report.iterations_per_level)} iterations, "
          f"{report.clamp_events} clamp events")
    if not args.no_timing:
        print(f"wall time {report.wall_time:.3f} s")


def _cmd_compare(args: argparse.Namespace) -> None:
    mkt = _market(args)
    grids = [SolveGrid(s_max=args.s_max, m=k, n=k, maturity=mkt.maturity)
             for k in args.grid_sizes]
    out = _out_dir(args)

    if args.pair:
        model = _model(args)
        rows = newton_pair_difference(model, mkt, grids)
        csv_path, json_path = out / "compare_pair.csv", out / "compare_pair.json"
        _write_csv(csv_path, ["grid_m", "grid_n", "diff_linf", "diff_l2"],
                   [[str(r.grid.m), str(r.grid.n),
                     repr(float(r.diff_linf)), repr(float(r.diff_l2))]
                    for r in rows])
        _write_json(json_path, [
            {"grid_m": r.grid.m, "grid_n": r.grid.n,
             "diff_linf": r.diff_linf, "diff_l2": r.diff_l2} for r in rows])
        if args.plot:
            plotting.save_pair_figure(out / "compare_pair.png", rows,
                                      "nm1 vs nm2 difference")
    else:
        rows = method_difference_sweep(mkt, grids, args.param_values,
                                       model_family=args.family)
        csv_path, json_path = out / "compare_sweep.csv", out / "compare_sweep.json"
        _write_csv(csv_path, ["family", "param", "grid_m", "grid_n", "gap_linf"],
                   [[r.model_family, repr(float(r.param)), str(r.grid.m),
                     str(r.grid.n), repr(float(r.gap_linf))] for r in rows])
        _write_json(json_path, [
            {"family": r.model_family, "param": r.param, "grid_m": r.grid.m,
             "grid_n": r.grid.n, "gap_linf": r.gap_linf} for r in rows])
        if args.plot:
            plotting.save_sweep_figure(out / "compare_sweep.png", rows,
                                       f"{args.family}: newton vs asymptotic")
    _echo_table(args, csv_path, json_path)


def _cmd_eoc(args: argparse.Namespace) -> None:
    mkt = _market(args)
    model = _model(args)
    base = SolveGrid(s_max=args.s_max, m=args.base_m, n=args.base_n,
                     maturity=mkt.maturity)
    ladder = RefinementLadder(base_grid=base, levels=args.levels,
                              constraint="ds2-over-dtau")
    records = eoc_table(args.method, model, mkt, ladder, reference=args.reference)

    out = _out_dir(args)
    stem = f"eoc_{args.method}"
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    records_to_csv(records, csv_path, include_timing=not args.no_timing)
    records_to_json(records, json_path, include_timing=not args.no_timing)
    if args.plot:
        plotting.save_eoc_figure(out / f"{stem}.png", records,
                                 f"{args.method} convergence order")
    _echo_table(args, csv_path, json_path)


def _cmd_eotc(args: argparse.Namespace) -> None:
    mkt = _market(args)
    model = _model(args)
    base = SolveGrid(s_max=args.s_max, m=args.base_m, n=args.base_n,
                     maturity=mkt.maturity)
    ladder = RefinementLadder(base_grid=base, levels=args.levels,
                              constraint="ds-over-dtau")
    records = eotc_table(args.method, model, mkt, ladder, repeats=args.repeats)

    out = _out_dir(args)
    stem = f"eotc_{args.method}"
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    records_to_csv(records, csv_path, include_timing=not args.no_timing)
    records_to_json(records, json_path, include_timing=not args.no_timing)
    if args.plot:
        plotting.save_eotc_figure(out / f"{stem}.png", records,
                                  f"{args.method} time complexity")
    _echo_table(args, csv_path, json_path)


def _cmd_calibrate(args: argparse.Namespace) -> None:
    quotes_path = args.quotes if args.quotes is not None else bundled_quotes_path()
    quotes = load_quotes(quotes_path)
    outcomes = calibrate_series(quotes, engine=args.engine, anchor=args.anchor,
                                bracket_hi=args.bracket_hi,
                                price_tol=args.price_tol)

    out = _out_dir(args)
    csv_path, json_path = out / "calibration.csv", out / "calibration.json"
    series_to_csv(outcomes, csv_path)
    series_to_json(outcomes, json_path)

    successes = [o for o in outcomes if o.result is not None]
    for o in outcomes:
        if o.error is not None:
            print(f"row {o.row} (tau={o.quote.tau}) failed: {o.error}",
                  file=sys.stderr)
    if args.plot and successes:
        plotting.save_calibration_figure(
            out / "calibration.png",
            [o.quote.tau for o in successes],
            [o.result.rho_star for o in successes],
            f"calibrated rho per quote ({args.engine})")
    _echo_table(args, csv_path, json_path)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlbs",
        description="Pricing under nonlinear Black-Scholes volatility models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="asymptotic price at one point")
    _market_flags(p)
    _model_flags(p)
    _output_flags(p)
    p.add_argument("--S", dest="spot", type=float, default=None,
                   help="asset price (default: the strike)")
    p.add_argument("--tau", type=float, default=None,
                   help="time to maturity for evaluation (default: --maturity)")
    p.set_defaults(func=_cmd_price)

    p = sub.add_parser("solve", help="finite-difference solve, full slice")
    _market_flags(p)
    _model_flags(p)
    _grid_flags(p)
    _solver_flags(p)
    _output_flags(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("compare",
                       help="newton vs asymptotic gap sweep (or nm1 vs nm2 with --pair)")
    _market_flags(p)
    _model_flags(p)
    _output_flags(p)
    p.add_argument("--family", choices=("frey-patie", "rapm"),
                   default="frey-patie",
                   help="model family swept in the default mode (default frey-patie)")
    p.add_argument("--param-values", type=_float_list,
                   default=[0.001, 0.005, 0.01, 0.02],
                   help="ascending parameter values (default 0.001,0.005,0.01,0.02)")
    p.add_argument("--grid-sizes", type=_int_list, default=[50, 100, 200],
                   help="square grid sizes M=N (default 50,100,200)")
    p.add_argument("--s-max", type=float, default=300.0,
                   help="spatial domain upper end (default 300)")
    p.add_argument("--pair", action="store_true",
                   help="compare nm1 against nm2 on the --model flags instead")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("eoc", help="convergence-order ladder")
    _market_flags(p)
    _model_flags(p)
    _output_flags(p)
    p.add_argument("--method", choices=("frozen", "nm1", "nm2"), default="nm1",
                   help="solver to refine (default nm1)")
    p.add_argument("--levels", type=int, default=4,
                   help="ladder levels (default 4)")
    p.add_argument("--base-m", type=int, default=11,
                   help="coarsest spatial node count (default 11)")
    p.add_argument("--base-n", type=int, default=11,
                   help="coarsest time level count (default 11)")
    p.add_argument("--s-max", type=float, default=300.0,
                   help="spatial domain upper end (default 300)")
    p.add_argument("--reference", choices=("closed-form-linear", "finest-self"),
                   default="closed-form-linear",
                   help="error reference; finest-self for nonlinear models")
    p.set_defaults(func=_cmd_eoc)

    p = sub.add_parser("eotc", help="time-complexity ladder")
    _market_flags(p)
    _model_flags(p)
    _output_flags(p)
    p.add_argument("--method", choices=("frozen", "nm1", "nm2", "asym"),
                   default="nm1", help="solver or pricer to time (default nm1)")
    p.add_argument("--levels", type=int, default=4,
                   help="ladder levels (default 4)")
    p.add_argument("--base-m", type=int, default=41,
                   help="coarsest spatial node count (default 41)")
    p.add_argument("--base-n", type=int, default=41,
                   help="coarsest time level count (default 41)")
    p.add_argument("--s-max", type=float, default=300.0,
                   help="spatial domain upper end (default 300)")
    p.add_argument("--repeats", type=int, default=3,
                   help="timing repetitions per level, median taken (default 3)")
    p.set_defaults(func=_cmd_eotc)

    p = sub.add_parser("calibrate", help="fit rho to a quote series")
    _output_flags(p)
    p.add_argument("--quotes", default=None,
                   help="quote CSV path (default: the bundled dataset)")
    p.add_argument("--engine", choices=("asym", "newton"), default="asym",
                   help="pricing engine (default asym)")
    p.add_argument("--anchor", choices=("bid", "mid"), default="bid",
                   help="implied-vol anchor price (default bid)")
    p.add_argument("--bracket-hi", type=float, default=0.05,
                   help="initial upper bracket for rho (default 0.05)")
    p.add_argument("--price-tol", type=float, default=1e-4,
                   help="price residual tolerance (default 1e-4)")
    p.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
