"""Entropy densities of shift-invariant quasi-free fermionic lattice states.

Compute Renyi and von Neumann entropy densities from Fourier symbols,
verify the inverse-Laplace structure behind them, and reconstruct the
von Neumann density from integer-order Renyi densities with certified
minimax schemes.
"""

from .approx import (
    ApplyResult,
    ApproxScheme,
    apply_scheme,
    basis_peak,
    basis_ratio,
    eval_basis,
    residual_profile,
    solve_controlled,
    solve_plain,
    solve_scheme,
    solve_shifted,
)
from .entropy import (
    LOG2,
    EntropyValue,
    g_consistency,
    g_function,
    h_function,
    normalize_order,
    renyi_density,
)
from .errors import (
    BoundViolation,
    ConfigError,
    EvaluationError,
    ExchangeError,
    OracleMismatch,
    QuadratureNonConvergence,
    QuasifreeError,
    SymbolRangeError,
)
from .laplace import (
    GTransformValue,
    MonotonicityReport,
    check_complete_monotonicity,
    g_kernel,
    g_kernel_transform,
    laplace_of_k,
    step_k,
    validate_laplace,
)
from .lattice import (
    ConvergenceResult,
    LocalSpectrum,
    OracleDensityMatrix,
    density_convergence,
    local_renyi,
    local_spectrum,
    oracle_report,
    wick_oracle,
)
from .quadrature import QuadratureSpec, integrate_interval, integrate_unit_cube
from .symbol import (
    DistributionFunction,
    Symbol,
    ToeplitzRestriction,
    bundled_symbols,
    constant_symbol,
    cosine_symbol,
    cosine_thermal_symbol,
    distribution_function,
    fourier_coefficients,
    load_symbol,
    make_thermal_symbol,
    rearrange,
    restrict_to_box,
    symbol_from_callable,
    symbol_from_fourier_table,
    symbol_from_grid,
)

__version__ = "0.1.0"
