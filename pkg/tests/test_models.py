"""Tests for the volatility model layer."""

from __future__ import annotations

import numpy as np
import pytest

from nlbs.exceptions import InputError, NotExpandableError
from nlbs.models import (
    GeneralizedVolSpec,
    MarketParams,
    ModelSpec,
    as_generalized,
    dsigma2_dgamma,
    dsigma2_dgamma_grid,
    grad_sigma_squared,
    sigma_squared,
    sigma_squared_grid,
)

MKT = MarketParams(sigma_tilde=0.4, strike=100.0, maturity=1.0 / 12.0, r=0.03)


def test_market_params_validation():
    with pytest.raises(InputError):
        MarketParams(sigma_tilde=0.0, strike=100.0, maturity=0.5, r=0.03)
    with pytest.raises(InputError):
        MarketParams(sigma_tilde=0.4, strike=-1.0, maturity=0.5, r=0.03)
    with pytest.raises(InputError):
        MarketParams(sigma_tilde=0.4, strike=100.0, maturity=0.0, r=0.03)
    with pytest.raises(InputError):
        MarketParams(sigma_tilde=0.4, strike=100.0, maturity=0.5, r=0.03, kind="straddle")


def test_model_spec_validation():
    with pytest.raises(InputError):
        ModelSpec(kind="cev")
    with pytest.raises(InputError):
        ModelSpec.frey_patie(-0.01)
    with pytest.raises(InputError):
        ModelSpec(kind="linear", param=0.1)
    with pytest.raises(InputError):
        ModelSpec.rapm(0.01, clamp_floor=1.0)
    with pytest.raises(InputError):
        ModelSpec.rapm(0.01, clamp_floor=0.0)


def test_linear_model_is_constant():
    model = ModelSpec.linear()
    for g in (-5.0, 0.0, 0.3, 40.0):
        assert sigma_squared(model, MKT, 80.0, g) == pytest.approx(0.16, rel=1e-15)
        assert dsigma2_dgamma(model, MKT, g) == 0.0


def test_feedback_value_at_unit_gamma():
    """rho = 0.01 and S V_SS = 1 squeezes the denominator to 0.99."""
    model = ModelSpec.frey_patie(0.01)
    expected = 0.16 / 0.99**2
    assert sigma_squared(model, MKT, 100.0, 1.0) == pytest.approx(expected, rel=1e-12)


def test_zero_gamma_recovers_base_variance():
    for model in (ModelSpec.frey_patie(0.02), ModelSpec.rapm(0.05)):
        assert sigma_squared(model, MKT, 100.0, 0.0) == pytest.approx(0.16, rel=1e-14)


def test_feedback_variance_dominates_base():
    # for 0 <= rho * gamma < 1 the denominator is at most 1
    model = ModelSpec.frey_patie(0.01)
    for g in (0.0, 0.5, 5.0, 50.0):
        assert sigma_squared(model, MKT, 100.0, g) >= 0.16 - 1e-15


def test_feedback_clamp_value_and_continuity():
    model = ModelSpec.frey_patie(0.01, clamp_floor=0.05)
    g_edge = (1.0 - 0.05) / 0.01
    clamped = sigma_squared(model, MKT, 100.0, g_edge + 50.0)
    assert clamped == pytest.approx(0.16 / 0.05**2, rel=1e-14)
    below = sigma_squared(model, MKT, 100.0, g_edge - 1e-7)
    above = sigma_squared(model, MKT, 100.0, g_edge + 1e-7)
    assert abs(below - above) < 1e-3 * clamped
    assert dsigma2_dgamma(model, MKT, g_edge + 50.0) == 0.0


def test_rapm_clamp_on_negative_gamma():
    model = ModelSpec.rapm(0.1, clamp_floor=0.05)
    g = -((0.96 / 0.1) ** 3) * 2.0
    assert sigma_squared(model, MKT, 100.0, g) == pytest.approx(0.16 * 0.05, rel=1e-14)
    assert dsigma2_dgamma(model, MKT, g) == 0.0


def test_rapm_continuous_through_zero_gamma():
    model = ModelSpec.rapm(0.02)
    left = sigma_squared(model, MKT, 100.0, -1e-12)
    right = sigma_squared(model, MKT, 100.0, 1e-12)
    assert abs(left - right) < 1e-6
    assert dsigma2_dgamma(model, MKT, 0.0) == 0.0


def test_grid_evaluation_matches_scalar():
    rng = np.random.default_rng(2417)
    g = rng.uniform(-20.0, 120.0, size=64)
    for model in (ModelSpec.frey_patie(0.01), ModelSpec.rapm(0.03)):
        grid_vals, _ = sigma_squared_grid(model, MKT, g)
        scalar_vals = np.array([sigma_squared(model, MKT, 100.0, gi) for gi in g])
        np.testing.assert_allclose(grid_vals, scalar_vals, rtol=1e-14)
        grid_der = dsigma2_dgamma_grid(model, MKT, g)
        scalar_der = np.array([dsigma2_dgamma(model, MKT, gi) for gi in g])
        np.testing.assert_allclose(grid_der, scalar_der, rtol=1e-14)


def test_grid_clamp_counter():
    model = ModelSpec.frey_patie(0.01, clamp_floor=0.05)
    g = np.array([0.0, 50.0, 94.0, 101.0, 400.0])
    _, clamps = sigma_squared_grid(model, MKT, g)
    assert clamps == 2


def test_derivative_matches_difference_quotient():
    """Analytic dsigma2/dgamma against a central quotient away from kinks."""
    step = 1e-6
    for model, g_vals in (
        (ModelSpec.frey_patie(0.01), (0.2, 1.0, 7.5, 40.0)),
        (ModelSpec.rapm(0.05), (0.3, 1.0, 4.0, 25.0)),
    ):
        for g in g_vals:
            num = (
                sigma_squared(model, MKT, 100.0, g + step)
                - sigma_squared(model, MKT, 100.0, g - step)
            ) / (2.0 * step)
            assert dsigma2_dgamma(model, MKT, g) == pytest.approx(num, rel=1e-6)


def test_gradient_stencil_symmetry():
    model = ModelSpec.frey_patie(0.02)
    d_below, d_mid, d_above = grad_sigma_squared(model, MKT, 110.0, 9.0, 10.0, 12.0, 5.0)
    assert d_below == d_above
    assert d_mid == pytest.approx(-2.0 * d_below, rel=1e-14)


def test_gradient_matches_central_differences():
    """Perturb each of the three nodal values by 1e-6 and compare.

    The chain through gamma = S (V_below - 2 V_mid + V_above) / dS^2 is the
    only way nodal values enter, so each slot of the analytic gradient has to
    match the corresponding central quotient of sigma_squared.
    """
    eps = 1e-6
    s_i, ds = 110.0, 5.0
    vb, vm, va = 9.0, 10.0, 12.0

    def sig2(model, b, m_, a):
        g = s_i * (b - 2.0 * m_ + a) / ds**2
        return sigma_squared(model, MKT, s_i, g)

    for model in (ModelSpec.frey_patie(0.01), ModelSpec.rapm(0.04)):
        grad = grad_sigma_squared(model, MKT, s_i, vb, vm, va, ds)
        fd = (
            (sig2(model, vb + eps, vm, va) - sig2(model, vb - eps, vm, va)) / (2 * eps),
            (sig2(model, vb, vm + eps, va) - sig2(model, vb, vm - eps, va)) / (2 * eps),
            (sig2(model, vb, vm, va + eps) - sig2(model, vb, vm, va - eps)) / (2 * eps),
        )
        for an, num in zip(grad, fd):
            assert an == pytest.approx(num, rel=1e-7)


def test_feedback_small_param_expansion():
    """First order in rho the feedback variance is sigma2 (1 + 2 rho gamma).

    The remainder is quadratic, so halving rho must shrink it by about four.
    """
    g = np.linspace(0.0, 10.0, 21)

    def remainder(rho):
        model = ModelSpec.frey_patie(rho)
        exact = np.array([sigma_squared(model, MKT, 100.0, gi) for gi in g])
        linearized = 0.16 * (1.0 + 2.0 * rho * g)
        return np.max(np.abs(exact - linearized))

    ratio = remainder(1e-3) / remainder(5e-4)
    assert 3.8 < ratio < 4.2


def test_rapm_expansion_is_exact():
    # the cube root model is literally of the expanded form for gamma > 0
    model = ModelSpec.rapm(0.03)
    gen = as_generalized(model, MKT)
    for g in (0.04, 1.0, 6.0):
        expanded = 0.16 + 2.0 * gen.epsilon * gen.a(0.3) * 100.0 ** (gen.gamma - 1.0) * g ** (
            gen.delta - 1.0
        )
        assert sigma_squared(model, MKT, 100.0, g) == pytest.approx(expanded, rel=1e-14)


def test_as_generalized_mappings():
    fp = as_generalized(ModelSpec.frey_patie(0.007), MKT)
    assert fp.epsilon == 0.007
    assert fp.gamma == 1.0
    assert fp.delta == 2.0
    assert fp.a(0.0) == pytest.approx(0.16)
    assert fp.a(0.5) == pytest.approx(0.16)

    rapm = as_generalized(ModelSpec.rapm(0.02), MKT)
    assert rapm.epsilon == 0.02
    assert rapm.gamma == 1.0
    assert rapm.delta == pytest.approx(4.0 / 3.0)
    assert rapm.a(0.1) == pytest.approx(0.08)

    with pytest.raises(NotExpandableError):
        as_generalized(ModelSpec.linear(), MKT)


def test_generalized_spec_is_plain_data():
    gen = GeneralizedVolSpec(epsilon=0.01, gamma=1.2, delta=1.5, a=lambda t: 1.0 + t)
    assert gen.a(1.0) == 2.0
    assert gen.delta == 1.5
