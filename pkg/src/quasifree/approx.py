"""Minimax reconstruction of the von Neumann density from Renyi densities.

The basis is f_a(t) = a/(a-1) (e^-t - e^-at) with f_1(t) = t e^-t; each
f_a has unit integral, and integer members pair with the integer-order
densities through the inverse-Laplace representation. Three schemes are
solved here, all as sup-norm (equioscillation) problems on [0, inf):

  plain       min over gamma of || f_1 - sum gamma_i f_(i+1) ||_inf
  shifted     same gamma, plus the constant c0 = 1 - sum gamma_i times
              log 2 (the asymptote of the kernel G is subtracted first)
  controlled  the ratio problem || f_1/f_a - sum gamma_i f_(i+1)/f_a ||,
              minimized also over the weight order a in (0, 1); its
              sup-norm times log 2 is a certified error bound for the
              estimate on any admissible symbol.

The solver is a Remez-style exchange adapted to this non-polynomial
family: solve for coefficients forcing the residual to alternate
between +/-E at n+1 references, relocate the references to the actual
extrema, repeat until the levels agree. The family is not known to be
a Chebyshev system, so the alternation structure is validated on the
result instead of assumed. Linear systems are solved in extended
precision (mpmath) because the basis is badly conditioned for large n.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional, Sequence

import mpmath as mp
import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .entropy import LOG2, renyi_density
from .errors import BoundViolation, ExchangeError
from .quadrature import QuadratureSpec
from .symbol import Symbol


def _phi(z: np.ndarray) -> np.ndarray:
    """(1 - exp(-z)) / z, continuous through z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0.0
    with np.errstate(over="ignore"):
        out[nz] = -np.expm1(-z[nz]) / z[nz]
    return out


def eval_basis(alpha: float, t) -> np.ndarray | float:
    """f_alpha(t) = alpha/(alpha-1) (e^-t - e^-alpha t), f_1(t) = t e^-t.

    Evaluated as alpha * t * e^-t * phi((alpha-1) t), which is exact at
    alpha = 1 and stable through it.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("t must be >= 0")
    vals = alpha * arr * np.exp(-arr) * _phi((alpha - 1.0) * arr)
    return float(vals) if np.ndim(t) == 0 else vals


def basis_ratio(beta: float, alpha: float, t) -> np.ndarray | float:
    """f_beta(t) / f_alpha(t), extended continuously to t = 0 (value beta/alpha)."""
    arr = np.asarray(t, dtype=float)
    vals = (beta / alpha) * _phi((beta - 1.0) * arr) / _phi((alpha - 1.0) * arr)
    return float(vals) if np.ndim(t) == 0 else vals


def basis_peak(alpha: float, search_upper: float = 20.0) -> tuple[float, float]:
    """Location and value of the maximum of f_alpha on (0, inf)."""
    res = minimize_scalar(
        lambda t: -eval_basis(alpha, t), bounds=(1e-12, search_upper), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), float(-res.fun)


def _phi_mp(z):
    if z == 0:
        return mp.mpf(1)
    return -mp.expm1(-z) / z


def _basis_mp(alpha, t):
    return alpha * t * mp.exp(-t) * _phi_mp((alpha - 1) * t)


def _ratio_mp(beta, alpha, t):
    return (mp.mpf(beta) / alpha) * _phi_mp((beta - 1) * t) / _phi_mp((alpha - 1) * t)


@dataclasses.dataclass(frozen=True)
class ApproxScheme:
    """A solved approximation scheme.

    ``gamma`` are the signed weights of s(2)..s(n+1), so the estimate
    reads c0*log2 + sum gamma_i s(i+1). ``residual`` is the achieved
    sup-norm; for controlled schemes ``certified_bound`` is exactly
    residual * log 2 and ``alpha`` is the fractional weight order.
    """

    kind: str
    n: int
    gamma: tuple[float, ...]
    residual: float
    c0: Optional[float] = None
    alpha: Optional[float] = None
    certified_bound: Optional[float] = None
    extrema_t: tuple[float, ...] = ()
    extrema_values: tuple[float, ...] = ()
    iterations: int = 0
    condition: float = math.nan

    @property
    def orders(self) -> tuple[int, ...]:
        """The Renyi orders weighted by gamma."""
        return tuple(range(2, self.n + 2))

    def as_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "n": self.n,
            "gamma": list(self.gamma),
            "residual": self.residual,
            "extrema_t": list(self.extrema_t),
            "extrema_values": list(self.extrema_values),
            "iterations": self.iterations,
            "condition": self.condition,
        }
        if self.c0 is not None:
            out["c0"] = self.c0
        if self.alpha is not None:
            out["alpha"] = self.alpha
        if self.certified_bound is not None:
            out["certified_bound"] = self.certified_bound
        return out


@dataclasses.dataclass(frozen=True)
class _ExchangeResult:
    gamma: np.ndarray
    residual: float
    extrema_t: np.ndarray
    extrema_values: np.ndarray
    iterations: int
    condition: float


def _dense_grid(decay: float, cap: float) -> np.ndarray:
    """Scan grid for sup-norms: fine where extrema live, coarse in the tail."""
    head_end = min(25.0 / decay, cap)
    head = np.linspace(0.0, head_end, 12001)
    if cap > head_end * 1.000001:
        tail = np.linspace(head_end, cap, 1201)[1:]
        return np.concatenate([head, tail])
    return head


def _solve_reference_system(refs, basis_np, basis_mp_funcs, target_mp, dps=50):
    """Force residual(t_k) = (-1)^k E at the references; extended precision."""
    n1 = len(refs)
    with mp.workdps(dps):
        A = mp.matrix(n1, n1)
        b = mp.matrix(n1, 1)
        for k, t in enumerate(refs):
            tm = mp.mpf(float(t))
            for i, bf in enumerate(basis_mp_funcs):
                A[k, i] = bf(tm)
            A[k, n1 - 1] = mp.mpf((-1) ** k)
            b[k] = target_mp(tm)
        x = mp.lu_solve(A, b)
        gamma = np.array([float(x[i]) for i in range(n1 - 1)])
        level = abs(float(x[n1 - 1]))
    refs_arr = np.asarray(refs, dtype=float)
    A_np = np.column_stack(
        [bf(refs_arr) for bf in basis_np]
        + [np.array([(-1.0) ** k for k in range(n1)])]
    )
    condition = float(np.linalg.cond(A_np))
    return gamma, level, condition


def _extrema_candidates(grid, r_grid, rfun):
    """All local extrema of the residual, boundary points included.

    Lobes are maximal runs of constant sign; the in-lobe maximum of |r|
    is polished with a bounded scalar search between its grid
    neighbours.
    """
    sign = np.sign(r_grid)
    candidates: list[tuple[float, float]] = []
    i = 0
    npts = grid.size
    while i < npts:
        if sign[i] == 0:
            i += 1
            continue
        j = i
        while j + 1 < npts and sign[j + 1] == sign[i]:
            j += 1
        seg = slice(i, j + 1)
        k = i + int(np.argmax(np.abs(r_grid[seg])))
        if 0 < k < npts - 1:
            s = sign[k]
            res = minimize_scalar(
                lambda t: -s * rfun(t),
                bounds=(grid[k - 1], grid[k + 1]),
                method="bounded",
                options={"xatol": 1e-11},
            )
            t_star, r_star = float(res.x), float(rfun(float(res.x)))
            if abs(r_star) < abs(r_grid[k]):
                t_star, r_star = float(grid[k]), float(r_grid[k])
            candidates.append((t_star, r_star))
        else:
            candidates.append((float(grid[k]), float(r_grid[k])))
        i = j + 1
    return candidates


def _select_alternating(candidates, count):
    """Largest-magnitude alternating subsequence of exactly ``count`` points."""
    alt: list[tuple[float, float]] = []
    for t, r in candidates:
        if alt and math.copysign(1.0, r) == math.copysign(1.0, alt[-1][1]):
            if abs(r) > abs(alt[-1][1]):
                alt[-1] = (t, r)
        else:
            alt.append((t, r))
    if len(alt) < count:
        return None
    while len(alt) > count:
        if abs(alt[0][1]) < abs(alt[-1][1]):
            alt.pop(0)
        else:
            alt.pop()
    return alt


def _initial_references(grid, target_np, basis_np, n):
    """Least-squares warm start; pad with uniform points if extrema are scarce."""
    GB = np.column_stack([bf(grid) for bf in basis_np])
    GF = target_np(grid)
    gamma0, *_ = np.linalg.lstsq(GB, GF, rcond=None)
    r0 = GF - GB @ gamma0
    sign = np.sign(r0)
    refs: list[float] = []
    i = 0
    while i < grid.size:
        if sign[i] == 0:
            i += 1
            continue
        j = i
        while j + 1 < grid.size and sign[j + 1] == sign[i]:
            j += 1
        k = i + int(np.argmax(np.abs(r0[i : j + 1])))
        refs.append(float(grid[k]))
        i = j + 1
    if len(refs) >= n + 1:
        magnitudes = np.abs(r0)[np.searchsorted(grid, refs)]
        order = np.argsort(magnitudes)[::-1][: n + 1]
        refs = sorted(np.asarray(refs)[np.sort(order)])
    while len(refs) < n + 1:
        gaps = np.diff([0.0] + refs) if refs else np.array([grid[-1]])
        widest = int(np.argmax(gaps))
        left = 0.0 if widest == 0 else refs[widest - 1]
        right = refs[widest] if refs else float(grid[-1])
        refs.insert(widest, 0.5 * (left + right))
        refs = sorted(refs)
    return refs[: n + 1]


def _run_exchange(
    grid: np.ndarray,
    target_np: Callable,
    basis_np: Sequence[Callable],
    target_mp: Callable,
    basis_mp_funcs: Sequence[Callable],
    n: int,
    refs: Sequence[float],
    spread_tol: float = 1e-9,
    max_iter: int = 100,
) -> _ExchangeResult:
    GB = np.column_stack([bf(grid) for bf in basis_np])
    GF = target_np(grid)
    refs = list(refs)
    best: Optional[tuple[float, _ExchangeResult]] = None

    for iteration in range(1, max_iter + 1):
        gamma, level, condition = _solve_reference_system(
            refs, basis_np, basis_mp_funcs, target_mp
        )
        r_grid = GF - GB @ gamma

        def rfun(t: float) -> float:
            return float(target_np(t)) - float(
                np.dot(gamma, [bf(t) for bf in basis_np])
            )

        candidates = _extrema_candidates(grid, r_grid, rfun)
        selected = _select_alternating(candidates, n + 1)
        if selected is None:
            raise ExchangeError(
                f"only {len(candidates)} alternation candidates for {n + 1} references",
                diagnostics={"refs": refs, "level": level, "iteration": iteration},
            )
        levels = np.array([abs(r) for _, r in selected])
        m_star = max(float(levels.max()), float(np.abs(r_grid).max()))
        spread = (m_star - float(levels.min())) / m_star if m_star > 0 else 0.0
        result = _ExchangeResult(
            gamma=gamma,
            residual=m_star,
            extrema_t=np.array([t for t, _ in selected]),
            extrema_values=np.array([r for _, r in selected]),
            iterations=iteration,
            condition=condition,
        )
        if best is None or spread < best[0]:
            best = (spread, result)
        if spread <= spread_tol:
            return result
        refs = [t for t, _ in selected]

    if best is not None and best[0] <= 1e-6:
        return best[1]
    raise ExchangeError(
        f"exchange did not converge in {max_iter} iterations "
        f"(best level spread {best[0] if best else math.nan:.3e})",
        diagnostics={"refs": refs, "best_spread": best[0] if best else None},
    )


def _fallback_references(grid, target_np, basis_np, n):
    """Direct sup-norm minimization on the grid, used to reseed the exchange."""
    GB = np.column_stack([bf(grid) for bf in basis_np])
    GF = target_np(grid)
    gamma0, *_ = np.linalg.lstsq(GB, GF, rcond=None)
    res = minimize(
        lambda g: float(np.abs(GF - GB @ g).max()),
        gamma0,
        method="Nelder-Mead",
        options={"maxiter": 20000, "fatol": 1e-13, "xatol": 1e-13},
    )
    r0 = GF - GB @ res.x
    sign = np.sign(r0)
    refs = []
    i = 0
    while i < grid.size:
        if sign[i] == 0:
            i += 1
            continue
        j = i
        while j + 1 < grid.size and sign[j + 1] == sign[i]:
            j += 1
        refs.append(float(grid[i + int(np.argmax(np.abs(r0[i : j + 1])))]))
        i = j + 1
    return refs[: n + 1] if len(refs) >= n + 1 else None


def _solve_equioscillation(grid, target_np, basis_np, target_mp, basis_mp_funcs, n):
    refs = _initial_references(grid, target_np, basis_np, n)
    try:
        return _run_exchange(grid, target_np, basis_np, target_mp, basis_mp_funcs, n, refs)
    except ExchangeError:
        fallback = _fallback_references(grid, target_np, basis_np, n)
        if fallback is None:
            raise
        return _run_exchange(
            grid, target_np, basis_np, target_mp, basis_mp_funcs, n, fallback
        )


def _check_order(n: int) -> None:
    if not 1 <= n <= 10:
        raise ValueError(f"n must be in 1..10, got {n}")


def solve_plain(n: int, domain_cap: float = 40.0) -> ApproxScheme:
    """Equioscillation fit of f_1 by f_2..f_(n+1) on [0, inf).

    The sup-norm is evaluated on [0, domain_cap]; every residual in this
    family decays like e^-t, so with the default cap the neglected tail
    is below 1e-15.
    """
    _check_order(n)
    orders = [i + 2 for i in range(n)]
    basis_np = [lambda t, b=o: eval_basis(b, t) for o in orders]
    basis_mp_funcs = [lambda t, b=o: _basis_mp(b, t) for o in orders]
    target_np = lambda t: eval_basis(1.0, t)
    target_mp = lambda t: _basis_mp(1, t)
    grid = _dense_grid(1.0, domain_cap)
    res = _solve_equioscillation(
        grid, target_np, basis_np, target_mp, basis_mp_funcs, n
    )
    return ApproxScheme(
        kind="plain",
        n=n,
        gamma=tuple(float(g) for g in res.gamma),
        residual=res.residual,
        extrema_t=tuple(res.extrema_t),
        extrema_values=tuple(res.extrema_values),
        iterations=res.iterations,
        condition=res.condition,
    )


def solve_shifted(n: int, domain_cap: float = 40.0) -> ApproxScheme:
    """The plain scheme with the log 2 asymptote split off.

    Subtracting the kernel's asymptote before fitting leaves the same
    minimax problem, so gamma is unchanged; the constant c0 = 1 - sum
    gamma_i rides along because every basis member has unit integral.
    """
    plain = solve_plain(n, domain_cap)
    return dataclasses.replace(
        plain, kind="shifted", c0=float(1.0 - sum(plain.gamma))
    )


def _controlled_grid(alpha: float) -> np.ndarray:
    decay = 1.0 - alpha
    return _dense_grid(decay, 45.0 / decay)


def solve_controlled(
    n: int,
    alpha_bounds: tuple[float, float] = (0.05, 0.95),
    alpha_tol: float = 1e-4,
    scan_step: float = 0.05,
) -> ApproxScheme:
    """Certified scheme: minimize the weighted sup-norm over gamma and alpha.

    Inner problem: equioscillation fit of f_1/f_alpha by the ratios
    f_(i+1)/f_alpha (which extend continuously to t = 0, so the origin
    can be an active extremum). Outer problem: bracketed golden-section
    search of the inner residual over alpha in (0, 1). The certified
    bound is the final residual times log 2.
    """
    _check_order(n)
    orders = [i + 2 for i in range(n)]
    warm: dict = {"refs": None}
    cache: dict[float, object] = {}

    def inner(alpha: float):
        alpha = float(alpha)
        if alpha in cache:
            return cache[alpha]
        basis_np = [lambda t, b=o: basis_ratio(b, alpha, t) for o in orders]
        basis_mp_funcs = [lambda t, b=o: _ratio_mp(b, alpha, t) for o in orders]
        target_np = lambda t: basis_ratio(1.0, alpha, t)
        target_mp = lambda t: _ratio_mp(1, alpha, t)
        grid = _controlled_grid(alpha)
        result = None
        if warm["refs"] is not None and len(warm["refs"]) == n + 1:
            refs = [min(t, float(grid[-1])) for t in warm["refs"]]
            try:
                result = _run_exchange(
                    grid, target_np, basis_np, target_mp, basis_mp_funcs, n, refs
                )
            except ExchangeError:
                result = None
        if result is None:
            result = _solve_equioscillation(
                grid, target_np, basis_np, target_mp, basis_mp_funcs, n
            )
        warm["refs"] = list(result.extrema_t)
        cache[alpha] = result
        return result

    lo, hi = alpha_bounds
    scan = np.arange(lo + scan_step, hi - 0.5 * scan_step, scan_step)
    scan_levels = []
    for a in scan:
        try:
            scan_levels.append(inner(float(a)).residual)
        except ExchangeError:
            scan_levels.append(math.inf)
    best_idx = int(np.argmin(scan_levels))
    a_lo = float(scan[max(best_idx - 1, 0)])
    a_hi = float(scan[min(best_idx + 1, scan.size - 1)])
    if a_lo == a_hi:
        a_lo, a_hi = max(lo, a_lo - scan_step), min(hi, a_hi + scan_step)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = a_lo, a_hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    while b - a > alpha_tol:
        if inner(c).residual < inner(d).residual:
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)

    alpha_star = min(cache, key=lambda k: cache[k].residual)
    res = cache[alpha_star]
    return ApproxScheme(
        kind="controlled",
        n=n,
        gamma=tuple(float(g) for g in res.gamma),
        residual=res.residual,
        alpha=float(alpha_star),
        certified_bound=res.residual * LOG2,
        extrema_t=tuple(res.extrema_t),
        extrema_values=tuple(res.extrema_values),
        iterations=res.iterations,
        condition=res.condition,
    )


def solve_scheme(kind: str, n: int) -> ApproxScheme:
    """Dispatch by scheme kind ('plain' | 'shifted' | 'controlled')."""
    if kind == "plain":
        return solve_plain(n)
    if kind == "shifted":
        return solve_shifted(n)
    if kind == "controlled":
        return solve_controlled(n)
    raise ValueError(f"unknown scheme kind {kind!r}")


@dataclasses.dataclass(frozen=True)
class ApplyResult:
    """Outcome of applying a scheme to a symbol."""

    estimate: float
    true_value: float
    true_error: float
    certified_bound: Optional[float]
    quad_slack: float
    within_bound: Optional[bool]


def apply_scheme(
    scheme: ApproxScheme,
    q: Symbol,
    spec: Optional[QuadratureSpec] = None,
) -> ApplyResult:
    """Estimate the von Neumann density from the scheme's Renyi orders.

    Also computes the true density for comparison. For controlled
    schemes the certified bound is enforced: exceeding it beyond the
    quadrature slack raises :class:`BoundViolation`.
    """
    terms = [renyi_density(q, order, spec) for order in scheme.orders]
    estimate = sum(g * term.value for g, term in zip(scheme.gamma, terms))
    if scheme.c0 is not None:
        estimate += scheme.c0 * LOG2
    truth = renyi_density(q, 1, spec)
    slack = truth.quad_error + sum(
        abs(g) * term.quad_error for g, term in zip(scheme.gamma, terms)
    )
    error = abs(estimate - truth.value)
    within = None
    if scheme.certified_bound is not None:
        within = error <= scheme.certified_bound + 10.0 * slack + 1e-12
        if not within:
            raise BoundViolation(
                f"certified bound violated for {q.label!r}: error {error:.6g} > "
                f"bound {scheme.certified_bound:.6g} + slack"
            )
    return ApplyResult(
        estimate=float(estimate),
        true_value=truth.value,
        true_error=float(error),
        certified_bound=scheme.certified_bound,
        quad_slack=float(slack),
        within_bound=within,
    )


def residual_profile(scheme: ApproxScheme, t_grid) -> np.ndarray:
    """Residual values for plotting, as columns (t, r).

    Plain and shifted schemes emit f_1 - sum gamma_i f_(i+1). Controlled
    schemes emit the weighted-ratio residual scaled by log 2, whose
    extremal magnitude equals the certified bound.
    """
    t = np.asarray(t_grid, dtype=float)
    if scheme.kind in ("plain", "shifted"):
        r = eval_basis(1.0, t) - sum(
            g * eval_basis(o, t) for g, o in zip(scheme.gamma, scheme.orders)
        )
    elif scheme.kind == "controlled":
        r = basis_ratio(1.0, scheme.alpha, t) - sum(
            g * basis_ratio(o, scheme.alpha, t)
            for g, o in zip(scheme.gamma, scheme.orders)
        )
        r = r * LOG2
    else:
        raise ValueError(f"unknown scheme kind {scheme.kind!r}")
    return np.column_stack([t, r])
