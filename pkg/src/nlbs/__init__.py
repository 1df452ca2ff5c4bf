"""Pricing engine for nonlinear Black-Scholes volatility models.

The package prices European options whose effective volatility depends on
the Gamma of the solution itself (Frey-Patie feedback, RAPM transaction
costs), by two independent routes: a first-order asymptotic correction of
the closed-form price and an implicit finite-difference solver with Newton
iteration.  A harness measures convergence and runtime orders; a
calibration layer fits the liquidity parameter to market quotes.
"""

from .asymptotic import (
    AsymptoticConstants,
    QuadratureConfig,
    constants,
    price_asymptotic,
    u_convolution,
    v1_correction,
    v1_correction_with_estimate,
)
from .bs import BsEval, bs_eval, bs_price, implied_vol
from .calibration import (
    CalibrationResult,
    QuoteRecord,
    SeriesOutcome,
    bundled_quotes_path,
    calibrate,
    calibrate_series,
    load_quotes,
    model_price,
)
from .fd_engine import (
    SolveGrid,
    SolveReport,
    SolverConfig,
    Tridiagonal,
    assemble,
    boundary_values,
    gamma_term,
    jacobian,
    payoff,
    solve,
    step_frozen,
    step_nm1,
    step_nm2,
    thomas_solve,
)
from .harness import (
    ExperimentRecord,
    PairRecord,
    RefinementLadder,
    SweepRecord,
    asym_slice,
    closed_form_slice,
    eoc_table,
    eoc_value,
    eotc_table,
    eotc_value,
    error_norm,
    method_difference_sweep,
    newton_pair_difference,
)
from .models import (
    GeneralizedVolSpec,
    MarketParams,
    ModelSpec,
    as_generalized,
    sigma_squared,
    sigma_squared_grid,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticConstants",
    "BsEval",
    "CalibrationResult",
    "ExperimentRecord",
    "GeneralizedVolSpec",
    "MarketParams",
    "ModelSpec",
    "PairRecord",
    "QuadratureConfig",
    "QuoteRecord",
    "RefinementLadder",
    "SeriesOutcome",
    "SolveGrid",
    "SolveReport",
    "SolverConfig",
    "SweepRecord",
    "Tridiagonal",
    "as_generalized",
    "assemble",
    "asym_slice",
    "boundary_values",
    "bs_eval",
    "bs_price",
    "bundled_quotes_path",
    "calibrate",
    "calibrate_series",
    "closed_form_slice",
    "constants",
    "eoc_table",
    "eoc_value",
    "eotc_table",
    "eotc_value",
    "error_norm",
    "gamma_term",
    "implied_vol",
    "jacobian",
    "load_quotes",
    "method_difference_sweep",
    "model_price",
    "newton_pair_difference",
    "payoff",
    "price_asymptotic",
    "sigma_squared",
    "sigma_squared_grid",
    "solve",
    "step_frozen",
    "step_nm1",
    "step_nm2",
    "thomas_solve",
    "u_convolution",
    "v1_correction",
    "v1_correction_with_estimate",
]
