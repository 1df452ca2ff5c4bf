"""Tests for the experiment harness."""

from __future__ import annotations

import json

import numpy as np
import pytest

from nlbs.exceptions import EmptyDomainError, InputError
from nlbs.fd_engine import SolveGrid, SolverConfig, solve
from nlbs.harness import (
    HARNESS_HEADER,
    ExperimentRecord,
    RefinementLadder,
    asym_slice,
    closed_form_slice,
    eoc_table,
    eoc_value,
    eotc_table,
    eotc_value,
    error_norm,
    method_difference_sweep,
    newton_pair_difference,
    read_records_csv,
    records_to_csv,
    records_to_json,
)
from nlbs.models import MarketParams, ModelSpec

MKT = MarketParams(sigma_tilde=0.4, strike=100.0, maturity=1.0 / 12.0, r=0.03)
FP = ModelSpec.frey_patie(0.01)
LIN = ModelSpec.linear()


def small_grid(m, n):
    return SolveGrid(s_max=300.0, m=m, n=n, maturity=1.0 / 12.0)


def test_error_norm_basics():
    grid = small_grid(31, 3)
    ref = closed_form_slice(MKT, grid)
    assert error_norm(ref, ref, grid, MKT, "linf") == 0.0
    assert error_norm(ref, ref, grid, MKT, "l2") == 0.0
    assert error_norm(1.01 * ref, ref, grid, MKT, "linf") == pytest.approx(0.01, rel=1e-10)
    assert error_norm(1.01 * ref, ref, grid, MKT, "l2") == pytest.approx(0.01, rel=1e-10)


def test_error_norm_brute_force():
    """Loop-and-divide recomputation of both norms over the comparison window."""
    rng = np.random.default_rng(404)
    grid = small_grid(61, 3)
    s = grid.s_nodes()
    ref = closed_form_slice(MKT, grid)
    v = ref + rng.normal(0.0, 0.05, size=61)

    mask = (s >= 50.0) & (s <= 150.0)
    diff = np.abs(v - ref)[mask]
    expect_linf = np.max(diff) / np.max(np.abs(ref[mask]))
    assert error_norm(v, ref, grid, MKT, "linf") == pytest.approx(expect_linf, rel=1e-12)

    num = np.trapezoid(diff**2, s[mask])
    den = np.trapezoid(ref[mask] ** 2, s[mask])
    assert error_norm(v, ref, grid, MKT, "l2") == pytest.approx(
        np.sqrt(num / den), rel=1e-12
    )


def test_error_norm_window_validation():
    grid = SolveGrid(s_max=40.0, m=5, n=3, maturity=1.0 / 12.0)
    with pytest.raises(EmptyDomainError):
        error_norm(np.ones(5), np.ones(5), grid, MKT)
    with pytest.raises(InputError):
        error_norm(np.ones(7), np.ones(5), small_grid(5, 3), MKT)


def test_eoc_value_reference_point():
    assert round(eoc_value(2.93e-5, 1.72e-6, 30.0, 15.0), 2) == 4.09


def test_eoc_value_exact_quartering():
    assert eoc_value(4.0e-4, 1.0e-4, 2.0, 1.0) == pytest.approx(2.0, rel=1e-14)


def test_eotc_value_reference_point():
    assert eotc_value(0.291, 0.467, 2e-3, 1e-3) == pytest.approx(0.6824, abs=1e-4)
    assert eotc_value(0.3, 0.3, 2e-3, 1e-3) == 0.0


def test_ladder_space_squared_over_time_invariant():
    base = small_grid(11, 11)
    grids = RefinementLadder(base, 4, constraint="ds2-over-dtau").grids()
    assert [(g.m, g.n) for g in grids] == [(11, 11), (21, 41), (41, 161), (81, 641)]
    ratios = [g.delta_s**2 / g.delta_tau for g in grids]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    assert ratios[0] == pytest.approx(108000.0, rel=1e-12)


def test_ladder_space_over_time_invariant():
    base = small_grid(41, 41)
    grids = RefinementLadder(base, 4, constraint="ds-over-dtau").grids()
    assert [(g.m, g.n) for g in grids] == [(41, 41), (81, 81), (161, 161), (321, 321)]
    ratios = [g.delta_s / g.delta_tau for g in grids]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    assert ratios[0] == pytest.approx(3600.0, rel=1e-12)


def test_ladder_validation():
    with pytest.raises(InputError):
        RefinementLadder(small_grid(11, 11), 3, space_ratio=1.5)
    with pytest.raises(InputError):
        RefinementLadder(small_grid(11, 11), 3, constraint="dt2-over-ds")


def test_eoc_table_linear_convergence():
    ladder = RefinementLadder(small_grid(11, 11), 3)
    recs = eoc_table("nm1", LIN, MKT, ladder)
    assert len(recs) == 3
    assert recs[0].eoc_linf is None
    errs = [r.err_linf for r in recs]
    assert errs[0] > errs[1] > errs[2]
    for r in recs[1:]:
        assert r.eoc_linf is not None
        assert r.eoc_l2 is not None


def test_eoc_table_rejects_bad_setups():
    with pytest.raises(InputError):
        eoc_table("nm1", FP, MKT, RefinementLadder(small_grid(11, 11), 2))
    with pytest.raises(InputError):
        eoc_table("nm1", LIN, MKT, RefinementLadder(small_grid(11, 11), 1))


def test_eoc_table_reference_choices_agree():
    """Self convergence and exact-solution convergence tell the same story.

    The interior rates are noisier for the self reference because the finest
    level is consumed as the benchmark, so compare at a shared level and
    allow a generous band.
    """
    ladder = RefinementLadder(small_grid(11, 11), 5)
    closed = eoc_table("nm1", LIN, MKT, ladder, reference="closed-form-linear")
    shadow = eoc_table("nm1", LIN, MKT, ladder, reference="finest-self")
    assert shadow[-1].err_linf is None
    assert shadow[-1].eoc_linf is None
    assert abs(closed[2].eoc_linf - shadow[2].eoc_linf) < 0.3


def test_eoc_table_partial_on_nonconvergence():
    ladder = RefinementLadder(small_grid(11, 11), 3)
    starved = SolverConfig(method="nm1", max_iter=1)
    recs = eoc_table(starved, FP, MKT, ladder, reference="finest-self")
    full = eoc_table("nm1", FP, MKT, ladder, reference="finest-self")
    assert recs == []
    assert len(full) == 3


def test_eotc_table_asym_route():
    ladder = RefinementLadder(small_grid(21, 21), 2, constraint="ds-over-dtau")
    recs = eotc_table("asym", FP, MKT, ladder, repeats=1)
    assert len(recs) == 2
    assert recs[0].wall_time > 0.0
    assert recs[0].err_linf is not None
    assert recs[-1].err_linf is None
    assert recs[-1].eotc is not None
    assert recs[0].eotc is None


def test_sweep_validation():
    grids = [small_grid(21, 21)]
    with pytest.raises(InputError):
        method_difference_sweep(MKT, grids, [-0.01, 0.0])
    with pytest.raises(InputError):
        method_difference_sweep(MKT, grids, [0.01, 0.005])
    with pytest.raises(InputError):
        method_difference_sweep(MKT, grids, [0.0, 0.01], model_family="cev")


def test_sweep_zero_parameter_is_discretization_error():
    grid = small_grid(50, 50)
    rows = method_difference_sweep(MKT, [grid], [0.0])
    rep = solve(LIN, MKT, grid, SolverConfig(method="nm1"))
    expected = error_norm(rep.final_slice, closed_form_slice(MKT, grid), grid, MKT, "linf")
    assert rows[0].gap_linf == pytest.approx(expected, rel=1e-9)
    assert rows[0].param == 0.0
    assert rows[0].model_family == "frey-patie"


def test_newton_pair_difference_is_negligible():
    rows = newton_pair_difference(FP, MKT, [small_grid(21, 6), small_grid(41, 11)])
    assert len(rows) == 2
    for row in rows:
        assert row.diff_linf < 1e-7
        assert row.diff_l2 < 1e-7


def test_records_roundtrip_csv_and_json(tmp_path):
    recs = [
        ExperimentRecord(small_grid(11, 11), 1.25e-3, 6.1e-4, None, None, 0.125, None),
        ExperimentRecord(small_grid(21, 41), 3.0e-4, 1.5e-4, 2.06, 2.02, 0.5, 0.8125),
    ]
    csv_path = tmp_path / "table.csv"
    records_to_csv(recs, csv_path)
    rows = read_records_csv(csv_path)
    assert len(rows) == 2
    assert rows[0]["err_linf"] == 1.25e-3
    assert rows[0]["eoc_linf"] is None
    assert rows[1]["eotc"] == 0.8125
    assert rows[1]["grid_dS"] == small_grid(21, 41).delta_s
    recomputed = eoc_value(
        rows[0]["err_linf"], rows[1]["err_linf"], rows[0]["grid_dS"], rows[1]["grid_dS"]
    )
    assert recomputed == eoc_value(1.25e-3, 3.0e-4, 30.0, 15.0)

    json_path = tmp_path / "table.json"
    records_to_json(recs, json_path)
    payload = json.loads(json_path.read_text())
    assert payload[0]["eoc_linf"] is None
    assert payload[1]["wall_time_s"] == 0.5


def test_records_without_timing(tmp_path):
    recs = [ExperimentRecord(small_grid(11, 11), 1e-3, 5e-4, None, None, 0.25, 0.7)]
    csv_path = tmp_path / "nt.csv"
    records_to_csv(recs, csv_path, include_timing=False)
    text = csv_path.read_text().splitlines()
    assert text[0] == ",".join(HARNESS_HEADER)
    fields = text[1].split(",")
    assert fields[HARNESS_HEADER.index("wall_time_s")] == ""
    assert fields[HARNESS_HEADER.index("eotc")] == ""

    json_path = tmp_path / "nt.json"
    records_to_json(recs, json_path, include_timing=False)
    payload = json.loads(json_path.read_text())
    assert payload[0]["wall_time_s"] is None
    assert payload[0]["eotc"] is None


def test_read_records_rejects_foreign_header(tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InputError):
        read_records_csv(path)


def test_wall_time_grows_down_the_ladder():
    ladder = RefinementLadder(small_grid(41, 41), 2, constraint="ds-over-dtau")
    recs = eotc_table("nm1", FP, MKT, ladder, repeats=1)
    assert recs[1].wall_time > recs[0].wall_time
