"""Finite-size validation: box spectra, convergence, and a Wick oracle.

Local entropies of a quasi-free state on a finite box follow from the
eigenvalues of the restricted symbol through the per-mode formula

    S_L(alpha) = -1/(alpha-1) sum_j log(lambda_j^alpha + (1-lambda_j)^alpha)

(with the usual alpha = 1 and alpha = inf branches). That formula is
adopted rather than derived, so this module also carries an independent
verifier: for tiny boxes (n <= 4 sites) the full 2^n density matrix is
assembled from monomial expectations, which are determinants of
submatrices of the two-point matrix. Its spectrum must match the
product form prod lambda^eps (1-lambda)^(1-eps), and its Renyi traces
must match the per-mode sums; any disagreement is a failed oracle.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .entropy import EntropyValue, normalize_order, renyi_density, renyi_integrand
from .errors import OracleMismatch
from .quadrature import QuadratureSpec
from .symbol import Symbol, ToeplitzRestriction, restrict_to_box


@dataclasses.dataclass(frozen=True)
class LocalSpectrum:
    """Eigenvalues of a finite box restriction, ascending and clamped."""

    box_side: int
    dimension: int
    eigenvalues: np.ndarray = dataclasses.field(repr=False)

    @property
    def modes(self) -> int:
        return self.eigenvalues.size

    @classmethod
    def from_restriction(cls, restriction: ToeplitzRestriction) -> "LocalSpectrum":
        return cls(
            box_side=restriction.box_side,
            dimension=restriction.dimension,
            eigenvalues=restriction.eigenvalues,
        )


def local_spectrum(q: Symbol, box_side: int, spec: Optional[QuadratureSpec] = None) -> LocalSpectrum:
    return LocalSpectrum.from_restriction(restrict_to_box(q, box_side, spec))


def local_renyi(spectrum, alpha) -> float:
    """Total box entropy from mode occupations (0 log 0 = 0 convention)."""
    eig = spectrum.eigenvalues if isinstance(spectrum, LocalSpectrum) else np.asarray(spectrum, float)
    a = normalize_order(alpha)
    return float(np.sum(renyi_integrand(eig, a)))


@dataclasses.dataclass(frozen=True)
class ConvergenceRow:
    box_side: int
    per_site: float
    gap: float


@dataclasses.dataclass(frozen=True)
class ConvergenceResult:
    alpha: float
    density: EntropyValue
    rows: tuple[ConvergenceRow, ...]
    richardson: float
    richardson_error: float
    final_gap: float
    gap_shrank: bool
    passed: bool

    def as_rows(self) -> list[dict]:
        return [dataclasses.asdict(r) for r in self.rows]


def density_convergence(
    q: Symbol,
    alpha,
    box_sides: Sequence[int],
    spec: Optional[QuadratureSpec] = None,
    threshold: float = 5e-3,
) -> ConvergenceResult:
    """Per-site box entropies against the infinite-volume density.

    ``box_sides`` must be ascending. The pass criterion is engineering,
    not theory: the largest-box gap is below ``threshold`` and smaller
    in magnitude than the smallest-box gap. A two-point Richardson
    extrapolation in 1/L and its step-size error estimate are attached.
    """
    sides = [int(L) for L in box_sides]
    if sides != sorted(sides) or len(set(sides)) != len(sides):
        raise ValueError("box_sides must be strictly ascending")
    a = normalize_order(alpha)
    density = renyi_density(q, a, spec)

    rows = []
    per_site = {}
    for L in sides:
        spectrum = local_spectrum(q, L, spec)
        value = local_renyi(spectrum, a) / spectrum.modes
        per_site[L] = value
        rows.append(ConvergenceRow(box_side=L, per_site=value, gap=value - density.value))

    if len(sides) >= 2:
        L1, L2 = sides[-2], sides[-1]
        extrap = (L2 * per_site[L2] - L1 * per_site[L1]) / (L2 - L1)
        extrap_err = abs(extrap - per_site[L2])
    else:
        extrap = per_site[sides[-1]]
        extrap_err = math.inf
    final_gap = rows[-1].gap
    shrank = abs(rows[-1].gap) <= abs(rows[0].gap) or len(rows) == 1
    return ConvergenceResult(
        alpha=a,
        density=density,
        rows=tuple(rows),
        richardson=float(extrap),
        richardson_error=float(extrap_err),
        final_gap=float(final_gap),
        gap_shrank=bool(shrank),
        passed=bool(shrank and abs(final_gap) <= threshold),
    )


# ---------------------------------------------------------------------------
# Wick oracle on tiny boxes.

MAX_ORACLE_SITES = 4


@lru_cache(maxsize=8)
def _jw_annihilators(n: int) -> tuple[np.ndarray, ...]:
    """Jordan-Wigner annihilation operators; site 0 is the leftmost factor."""
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])  # c|1> = |0>
    sigma_z = np.diag([1.0, -1.0])
    eye = np.eye(2)
    ops = []
    for j in range(n):
        factors = [sigma_z] * j + [lower] + [eye] * (n - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    return tuple(ops)


def _monomials(n: int):
    """Normal-ordered monomial labels: creators ascending, annihilators descending."""
    sites = range(n)
    for creators in itertools.chain.from_iterable(
        itertools.combinations(sites, k) for k in range(n + 1)
    ):
        for annihilators in itertools.chain.from_iterable(
            itertools.combinations(sites, k) for k in range(n + 1)
        ):
            yield creators, annihilators


def _monomial_matrix(creators, annihilators, ops) -> np.ndarray:
    dim = ops[0].shape[0]
    out = np.eye(dim)
    for s in creators:
        out = out @ ops[s].T
    for t in sorted(annihilators, reverse=True):
        out = out @ ops[t]
    return out


def _monomial_expectation(creators, annihilators, two_point: np.ndarray) -> float:
    """Quasi-free expectation: zero unless balanced, else a determinant."""
    if len(creators) != len(annihilators):
        return 0.0
    if not creators:
        return 1.0
    block = two_point[np.ix_(sorted(creators), sorted(annihilators))]
    return float(np.linalg.det(block))


@dataclasses.dataclass(frozen=True)
class OracleDensityMatrix:
    """Brute-force density matrix of a tiny box with its verification data."""

    sites: int
    rho: np.ndarray = dataclasses.field(repr=False)
    mode_occupations: np.ndarray = dataclasses.field(repr=False)
    rho_spectrum: np.ndarray = dataclasses.field(repr=False)
    product_spectrum: np.ndarray = dataclasses.field(repr=False)
    max_spectrum_diff: float

    def renyi_from_rho(self, alpha) -> float:
        a = normalize_order(alpha)
        eig = np.clip(self.rho_spectrum, 0.0, None)
        if math.isinf(a):
            return -math.log(eig.max())
        if a == 1.0:
            nz = eig[eig > 0]
            return float(-(nz * np.log(nz)).sum())
        return float(-math.log((eig**a).sum()) / (a - 1.0))


def wick_oracle(
    q: Symbol,
    sites: int,
    spec: Optional[QuadratureSpec] = None,
    atol: float = 1e-8,
) -> OracleDensityMatrix:
    """Assemble rho on a box of ``sites`` <= 4 from monomial expectations.

    Every normal-ordered monomial in the 2^n-dimensional mode algebra is
    represented via Jordan-Wigner; particle-number-unbalanced monomials
    have zero expectation and balanced ones are determinants of blocks
    of the two-point matrix. rho solves tr(rho E_A) = <E_A> over the
    full monomial basis and is then symmetrized. Spectra and traces are
    compared against the mode-product form; a mismatch beyond ``atol``
    raises :class:`OracleMismatch` (that failure mode is the oracle's
    entire purpose).
    """
    if not 1 <= sites <= MAX_ORACLE_SITES:
        raise ValueError(f"oracle supports 1..{MAX_ORACLE_SITES} sites, got {sites}")
    restriction = restrict_to_box(q, sites, spec)
    # <c^dag_a c_b> = Qhat_(a-b); the stored matrix is M[j,k] = Qhat_(k-j).
    two_point = np.asarray(restriction.matrix).T
    ops = _jw_annihilators(sites)

    labels = list(_monomials(sites))
    mats = np.stack([_monomial_matrix(c, a, ops) for c, a in labels])
    expectations = np.array(
        [_monomial_expectation(c, a, two_point) for c, a in labels]
    )
    gram = np.einsum("aij,bji->ab", mats, mats)
    coeffs = np.linalg.solve(gram, expectations)
    rho = np.einsum("a,aij->ij", coeffs, mats)
    rho = 0.5 * (rho + rho.conj().T)

    occ = restriction.eigenvalues
    patterns = np.array(list(itertools.product((0, 1), repeat=sites)))
    product_spectrum = np.sort(
        np.prod(np.where(patterns == 1, occ[None, :], 1.0 - occ[None, :]), axis=1)
    )
    rho_spectrum = np.sort(np.linalg.eigvalsh(rho))
    diff = float(np.abs(rho_spectrum - product_spectrum).max())

    trace = float(np.trace(rho).real)
    min_eig = float(rho_spectrum.min())
    problems = []
    if abs(trace - 1.0) > 1e-10:
        problems.append(f"trace {trace!r} != 1")
    if min_eig < -1e-10:
        problems.append(f"negative eigenvalue {min_eig!r}")
    if diff > atol:
        problems.append(f"spectrum mismatch {diff:.3e} > {atol:.1e}")
    oracle = OracleDensityMatrix(
        sites=sites,
        rho=rho,
        mode_occupations=occ,
        rho_spectrum=rho_spectrum,
        product_spectrum=product_spectrum,
        max_spectrum_diff=diff,
    )
    if problems:
        raise OracleMismatch(
            f"oracle failure on {q.label!r} ({sites} sites): " + "; ".join(problems),
            report={"problems": problems, "spectrum_diff": diff, "trace": trace},
        )
    return oracle


def oracle_report(
    q: Symbol,
    sites: int,
    alphas: Sequence = (2, 3),
    spec: Optional[QuadratureSpec] = None,
    atol: float = 1e-8,
) -> dict:
    """Comparison report between the oracle rho and the mode-product formula."""
    oracle = wick_oracle(q, sites, spec, atol)
    entries = []
    worst = oracle.max_spectrum_diff
    for alpha in list(alphas) + [1, "inf"]:
        from_modes = local_renyi(oracle.mode_occupations, alpha)
        from_rho = oracle.renyi_from_rho(alpha)
        diff = abs(from_modes - from_rho)
        worst = max(worst, diff)
        entries.append(
            {
                "alpha": normalize_order(alpha),
                "mode_sum": from_modes,
                "from_rho": from_rho,
                "abs_diff": diff,
                "ok": bool(diff <= atol),
            }
        )
    return {
        "symbol": q.label,
        "sites": sites,
        "spectrum_max_diff": oracle.max_spectrum_diff,
        "entropies": entries,
        "worst_diff": worst,
        "ok": bool(worst <= atol),
    }
