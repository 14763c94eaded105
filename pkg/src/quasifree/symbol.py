"""Symbols of shift-invariant quasi-free fermionic lattice states.

A symbol is a measurable function q : [0,1]^d -> [0,1], the Fourier
transform of the two-point operator of the state. Everything the
package computes -- entropy densities, inverse-Laplace kernels, finite
box spectra -- is a functional of q, so this module owns construction
(closed form, Fourier coefficient table, grid samples), range
validation, Fourier analysis, finite Toeplitz restrictions, the
distribution function of sublevel sets, and measure-preserving
rearrangements.

Symbols are immutable after construction and all operations here are
pure functions, safe to call concurrently.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import math
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import ConfigError, EvaluationError, QuasifreeError, SymbolRangeError
from .quadrature import QuadratureSpec, integrate_unit_cube

# Values must stay within this band of [0, 1] before clamping; harder
# violations indicate a broken evaluator, not roundoff.
RANGE_GUARD = 1e-9

CoefficientKey = Union[int, tuple]
CoefficientTable = dict[CoefficientKey, complex]


def _normalize_key(key, dimension: int) -> tuple:
    if isinstance(key, (int, np.integer)):
        tup = (int(key),)
    else:
        tup = tuple(int(k) for k in key)
    if len(tup) != dimension:
        raise ConfigError(
            f"coefficient index {key!r} has {len(tup)} components, expected {dimension}"
        )
    return tup


def _public_key(tup: tuple, dimension: int) -> CoefficientKey:
    return tup[0] if dimension == 1 else tup


@dataclasses.dataclass(frozen=True)
class Symbol:
    """A function q : [0,1]^d -> [0,1] with a vectorized evaluator.

    ``raw_evaluator`` maps an (N, d) float array to (N,) values; use the
    constructors below rather than building instances by hand. Evaluated
    values are range-checked against [0,1] with a 1e-9 guard band and
    clamped, since the entropy integrands are undefined outside [0,1].
    ``coefficients`` is set when the symbol is exactly a finite Fourier
    series (keys are ints for d=1, tuples otherwise).
    """

    dimension: int
    label: str
    raw_evaluator: Callable[[np.ndarray], np.ndarray] = dataclasses.field(repr=False)
    coefficients: Optional[CoefficientTable] = dataclasses.field(default=None, repr=False)

    def __post_init__(self):
        if not 1 <= self.dimension <= 3:
            raise ConfigError(f"dimension {self.dimension} unsupported (must be 1..3)")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an (N, d) array of points, clamped to [0, 1]."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ValueError(
                f"expected points of shape (N, {self.dimension}), got {pts.shape}"
            )
        values = np.asarray(self.raw_evaluator(pts), dtype=float).reshape(pts.shape[0])
        if not np.all(np.isfinite(values)):
            raise EvaluationError(f"symbol {self.label!r} produced non-finite values")
        vmin = values.min(initial=0.0)
        vmax = values.max(initial=1.0)
        if vmin < -RANGE_GUARD or vmax > 1.0 + RANGE_GUARD:
            raise SymbolRangeError(
                f"symbol {self.label!r} out of range: values in [{vmin:.6g}, {vmax:.6g}]"
            )
        return np.clip(values, 0.0, 1.0)

    def __call__(self, x):
        """Convenience evaluation at scalars, point tuples, or arrays."""
        arr = np.asarray(x, dtype=float)
        if self.dimension == 1:
            flat = np.atleast_1d(arr).reshape(-1, 1)
            out = self.evaluate(flat)
            return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)
        if arr.ndim == 1:
            return float(self.evaluate(arr[None, :])[0])
        return self.evaluate(arr)


@dataclasses.dataclass(frozen=True)
class DistributionFunction:
    """Empirical distribution function of a symbol's values.

    gamma(y) = fraction of the sampling grid where q <= y; the grid is a
    deterministic uniform midpoint grid, so results are reproducible.
    """

    sorted_values: np.ndarray = dataclasses.field(repr=False)
    samples: int
    dimension: int
    label: str

    def __call__(self, y) -> np.ndarray | float:
        arr = np.asarray(y, dtype=float)
        counts = np.searchsorted(self.sorted_values, arr, side="right")
        out = counts / self.sorted_values.size
        return float(out) if arr.ndim == 0 else out

    def table(self, levels: Optional[np.ndarray] = None) -> np.ndarray:
        if levels is None:
            levels = np.linspace(0.0, 1.0, 257)
        levels = np.asarray(levels, dtype=float)
        return np.column_stack([levels, self(levels)])


@dataclasses.dataclass(frozen=True)
class ToeplitzRestriction:
    """Restriction of the symbol to a finite open box of L^d sites.

    The matrix is (multilevel) Toeplitz, M[j, k] = Qhat[k - j], with
    row-major site enumeration for d > 1. Eigenvalues are ascending and
    clamped to [0, 1]; eigenvectors are not exposed since they depend on
    the site ordering while the spectrum does not.
    """

    box_side: int
    dimension: int
    matrix: np.ndarray = dataclasses.field(repr=False)
    eigenvalues: np.ndarray = dataclasses.field(repr=False)
    clamp_shift: float

    @property
    def sites(self) -> int:
        return self.box_side**self.dimension


def symbol_from_callable(
    fn: Callable,
    dimension: int = 1,
    label: str = "callable",
) -> Symbol:
    """Wrap a vectorized closed-form evaluator.

    For d=1 the callback receives a 1-d array of abscissae; for d>1 it
    receives the full (N, d) array.
    """

    if dimension == 1:
        def raw(pts: np.ndarray) -> np.ndarray:
            return np.asarray(fn(pts[:, 0]), dtype=float)
    else:
        def raw(pts: np.ndarray) -> np.ndarray:
            return np.asarray(fn(pts), dtype=float)

    return Symbol(dimension=dimension, label=label, raw_evaluator=raw)


def constant_symbol(value: float, dimension: int = 1, label: Optional[str] = None) -> Symbol:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"constant symbol value {value} outside [0, 1]")
    v = float(value)
    table = {_public_key((0,) * dimension, dimension): complex(v)}
    return Symbol(
        dimension=dimension,
        label=label or f"constant({v:g})",
        raw_evaluator=lambda pts: np.full(pts.shape[0], v),
        coefficients=table,
    )


def make_thermal_symbol(
    dispersion: Callable,
    beta: float,
    mu: float = 0.0,
    dimension: int = 1,
    label: Optional[str] = None,
) -> Symbol:
    """Fermi occupation q(x) = 1 / (1 + exp(beta (dispersion(x) - mu))).

    ``dispersion`` follows the callback convention of
    :func:`symbol_from_callable`. Values are strictly inside (0, 1) for
    finite dispersions; non-finite dispersion values raise
    :class:`EvaluationError`.
    """
    if not beta > 0.0:
        raise ConfigError(f"beta must be positive, got {beta}")

    def raw(pts: np.ndarray) -> np.ndarray:
        x = pts[:, 0] if dimension == 1 else pts
        eps = np.asarray(dispersion(x), dtype=float)
        if not np.all(np.isfinite(eps)):
            raise EvaluationError("dispersion produced non-finite values")
        return expit(-beta * (eps - mu))

    return Symbol(
        dimension=dimension,
        label=label or f"thermal(beta={beta:g}, mu={mu:g})",
        raw_evaluator=raw,
    )


def cosine_thermal_symbol(beta: float, mu: float = 0.0, label: Optional[str] = None) -> Symbol:
    """Thermal symbol of the nearest-neighbour chain, dispersion cos(2 pi x)."""
    return make_thermal_symbol(
        lambda x: np.cos(2.0 * np.pi * x),
        beta,
        mu,
        dimension=1,
        label=label or f"cosine-thermal(beta={beta:g}, mu={mu:g})",
    )


def symbol_from_fourier_table(
    coefficients: Mapping,
    dimension: int = 1,
    label: str = "fourier-table",
) -> Symbol:
    """Symbol given by a finite coefficient table {j: Qhat_j}.

    Hermitian symmetry Qhat_{-j} = conj(Qhat_j) is required (so q is
    real); q(x) = sum_j Qhat_j exp(2 pi i j.x).
    """
    table: dict[tuple, complex] = {}
    for key, val in coefficients.items():
        table[_normalize_key(key, dimension)] = complex(val)
    for tup, val in table.items():
        neg = tuple(-t for t in tup)
        mirror = table.get(neg, 0.0 + 0.0j)
        if abs(mirror - np.conj(val)) > 1e-10:
            raise ConfigError(
                f"coefficient table violates Hermitian symmetry at index {tup}"
            )
    js = np.array(sorted(table.keys()), dtype=float).reshape(len(table), dimension)
    cs = np.array([table[tuple(int(t) for t in j)] for j in js])

    def raw(pts: np.ndarray) -> np.ndarray:
        phases = np.exp(2.0j * np.pi * pts @ js.T)
        vals = phases @ cs
        return vals.real

    public = {_public_key(k, dimension): v for k, v in table.items()}
    return Symbol(dimension=dimension, label=label, raw_evaluator=raw, coefficients=public)


def cosine_symbol(label: str = "cosine") -> Symbol:
    """The symbol q(x) = (1 + cos(2 pi x)) / 2, an exact 3-term series."""
    return symbol_from_fourier_table({-1: 0.25, 0: 0.5, 1: 0.25}, 1, label)


def symbol_from_grid(values: Sequence[float], label: str = "grid") -> Symbol:
    """d=1 symbol from uniform periodic grid samples, linearly interpolated.

    Sample i sits at x = i/N; the interpolant wraps around at x = 1.
    """
    vals = np.asarray(list(values), dtype=float)
    if vals.ndim != 1 or vals.size < 2:
        raise ConfigError("grid symbol needs at least two samples")
    if vals.min() < -RANGE_GUARD or vals.max() > 1.0 + RANGE_GUARD:
        raise ConfigError("grid samples outside [0, 1]")
    n = vals.size
    xp = np.arange(n + 1) / n
    fp = np.concatenate([vals, vals[:1]])

    def raw(pts: np.ndarray) -> np.ndarray:
        return np.interp(np.mod(pts[:, 0], 1.0), xp, fp)

    return Symbol(dimension=1, label=label, raw_evaluator=raw)


def fourier_coefficients(
    q: Symbol,
    cutoff: int,
    spec: Optional[QuadratureSpec] = None,
) -> CoefficientTable:
    """Fourier coefficients Qhat_j = int q(x) exp(-2 pi i j.x) dx, |j|_inf <= cutoff.

    Computed by the shared quadrature engine (all indices integrated
    simultaneously under one refinement). Hermitian symmetry of the
    result is verified to 1e-10.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    d = q.dimension
    js = np.array(
        list(itertools.product(range(-cutoff, cutoff + 1), repeat=d)), dtype=float
    )

    def integrand(pts: np.ndarray) -> np.ndarray:
        vals = q.evaluate(pts)
        return vals[:, None] * np.exp(-2.0j * np.pi * (pts @ js.T))

    raw, _err = integrate_unit_cube(integrand, d, spec)
    table: CoefficientTable = {}
    for j_row, c in zip(js, raw):
        tup = tuple(int(t) for t in j_row)
        table[_public_key(tup, d)] = complex(c)
    for j_row in js:
        tup = tuple(int(t) for t in j_row)
        neg = tuple(-t for t in tup)
        a = table[_public_key(tup, d)]
        b = table[_public_key(neg, d)]
        if abs(b - np.conj(a)) > 1e-10:
            raise QuasifreeError(
                f"Fourier coefficients violate Hermitian symmetry at {tup}: "
                f"|Qhat(-j) - conj(Qhat(j))| = {abs(b - np.conj(a)):.3e}"
            )
    return table


def _coefficient_array(table: CoefficientTable, dimension: int, reach: int) -> np.ndarray:
    """Pack a coefficient dict into a dense (2*reach+1)^d array, zero-filled."""
    shape = (2 * reach + 1,) * dimension
    arr = np.zeros(shape, dtype=complex)
    for key, val in table.items():
        tup = _normalize_key(key, dimension)
        if max(abs(t) for t in tup) <= reach:
            arr[tuple(t + reach for t in tup)] = val
    return arr


def restrict_to_box(
    q: Symbol,
    box_side: int,
    spec: Optional[QuadratureSpec] = None,
) -> ToeplitzRestriction:
    """Restrict the symbol's operator to an open box of ``box_side``^d sites.

    Uses the exact coefficient table when the symbol is a finite Fourier
    series, otherwise computes coefficients up to reach box_side - 1 by
    quadrature. Eigenvalues outside [-1e-9, 1+1e-9] are an error; inside
    the band they are clamped to [0, 1].
    """
    if box_side < 1:
        raise ValueError("box_side must be >= 1")
    d = q.dimension
    reach = box_side - 1
    if q.coefficients is not None:
        table = q.coefficients
    else:
        table = fourier_coefficients(q, reach, spec) if reach > 0 else fourier_coefficients(q, 0, spec)
    dense = _coefficient_array(table, d, reach if reach > 0 else 0)

    sites = np.array(list(itertools.product(range(box_side), repeat=d)))
    diff = sites[None, :, :] - sites[:, None, :]  # M[j, k] = Qhat[k - j]
    idx = tuple(diff[..., axis] + (reach if reach > 0 else 0) for axis in range(d))
    matrix = dense[idx]
    matrix = 0.5 * (matrix + matrix.conj().T)
    if np.abs(matrix.imag).max(initial=0.0) < 1e-14:
        matrix = matrix.real

    try:
        eig = np.linalg.eigvalsh(matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise QuasifreeError(f"eigendecomposition failed for box {box_side}^{d}") from exc

    if eig.min() < -RANGE_GUARD or eig.max() > 1.0 + RANGE_GUARD:
        raise SymbolRangeError(
            f"restriction spectrum outside [0,1] band: [{eig.min():.3e}, {eig.max():.3e}]"
        )
    clamped = np.clip(eig, 0.0, 1.0)
    shift = float(np.abs(clamped - eig).max(initial=0.0))
    return ToeplitzRestriction(
        box_side=box_side,
        dimension=d,
        matrix=matrix,
        eigenvalues=np.sort(clamped),
        clamp_shift=shift,
    )


def distribution_function(q: Symbol, samples: int) -> DistributionFunction:
    """Empirical distribution function on a deterministic midpoint grid.

    The grid has round(samples^(1/d)) points per dimension, so the
    actual sample count is the nearest perfect power.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    d = q.dimension
    per_dim = max(1, round(samples ** (1.0 / d)))
    axes = [(np.arange(per_dim) + 0.5) / per_dim] * d
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    values = np.sort(q.evaluate(pts))
    return DistributionFunction(
        sorted_values=values, samples=values.size, dimension=d, label=q.label
    )


_REARRANGEMENTS = ("translation", "reflection", "permutation")


def rearrange(
    q: Symbol,
    kind: str,
    shift: Optional[Union[float, Sequence[float]]] = None,
    permutation: Optional[Sequence[int]] = None,
) -> Symbol:
    """Compose the symbol with a built-in measure-preserving map.

    kinds: ``translation`` (x -> x + shift mod 1), ``reflection``
    (x -> 1 - x), ``permutation`` (coordinate permutation). Rearranged
    symbols have the same distribution function and hence the same
    entropy densities.
    """
    d = q.dimension
    if kind == "translation":
        if shift is None:
            raise ConfigError("translation requires a shift")
        vec = np.broadcast_to(np.asarray(shift, dtype=float), (d,)).copy()
        transform = lambda pts: np.mod(pts + vec[None, :], 1.0)
        note = f"translate({', '.join(f'{v:g}' for v in vec)})"
    elif kind == "reflection":
        transform = lambda pts: 1.0 - pts
        note = "reflect"
    elif kind == "permutation":
        if permutation is None:
            raise ConfigError("permutation requires the permutation")
        perm = tuple(int(p) for p in permutation)
        if sorted(perm) != list(range(d)):
            raise ConfigError(f"{perm} is not a permutation of 0..{d - 1}")
        transform = lambda pts: pts[:, perm]
        note = f"permute{perm}"
    else:
        raise ConfigError(
            f"unsupported rearrangement {kind!r}; choose from {_REARRANGEMENTS}"
        )

    return Symbol(
        dimension=d,
        label=f"{q.label}|{note}",
        raw_evaluator=lambda pts: q.evaluate(transform(pts)),
    )


# ---------------------------------------------------------------------------
# Plain-text configuration files and CSV coefficient tables.

_KIND_KEYS = {
    "constant": {"value", "dimension"},
    "cosine-thermal": {"beta", "mu"},
    "fourier-table": {"coefficients", "dimension"},
    "grid": {"samples"},
}


def read_coefficients_csv(path: Union[str, Path]) -> tuple[CoefficientTable, int]:
    """Read a coefficient table from CSV with columns j, re, im.

    The j column holds an integer for d=1 or space-separated integers
    for d>1. Returns (table, dimension).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"coefficient file not found: {path}")
    table: CoefficientTable = {}
    dimension = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["j", "re", "im"]:
            raise ConfigError(f"{path}: expected CSV header 'j,re,im'")
        for row in reader:
            parts = row["j"].split()
            tup = tuple(int(p) for p in parts)
            if dimension is None:
                dimension = len(tup)
            elif len(tup) != dimension:
                raise ConfigError(f"{path}: inconsistent index dimension in row {row}")
            table[tup[0] if dimension == 1 else tup] = complex(
                float(row["re"]), float(row["im"])
            )
    if dimension is None:
        raise ConfigError(f"{path}: no coefficient rows")
    return table, dimension


def write_coefficients_csv(table: CoefficientTable, path: Union[str, Path]) -> None:
    path = Path(path)
    dim = None
    rows = []
    for key, val in table.items():
        tup = (key,) if isinstance(key, (int, np.integer)) else tuple(key)
        dim = len(tup) if dim is None else dim
        rows.append((" ".join(str(t) for t in tup), complex(val)))
    rows.sort(key=lambda r: tuple(int(p) for p in r[0].split()))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "re", "im"])
        for j, c in rows:
            writer.writerow([j, repr(c.real), repr(c.imag)])


def parse_symbol_config(text: str, base_dir: Union[str, Path] = ".") -> Symbol:
    """Parse the plain key-value symbol format.

    Lines are ``key = value``; blank lines and '#' comments are skipped;
    unknown or duplicate keys are rejected.
    """
    entries: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value

    kind = entries.pop("kind", None)
    if kind is None:
        raise ConfigError("missing required key 'kind'")
    if kind not in _KIND_KEYS:
        raise ConfigError(
            f"unknown kind {kind!r}; choose from {sorted(_KIND_KEYS)}"
        )
    label = entries.pop("label", None)
    unknown = set(entries) - _KIND_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown keys for kind {kind!r}: {sorted(unknown)}")

    try:
        if kind == "constant":
            value = float(entries["value"])
            dim = int(entries.get("dimension", "1"))
            return constant_symbol(value, dim, label)
        if kind == "cosine-thermal":
            beta = float(entries["beta"])
            mu = float(entries.get("mu", "0"))
            return cosine_thermal_symbol(beta, mu, label)
        if kind == "fourier-table":
            rel = entries["coefficients"]
            table, dim_csv = read_coefficients_csv(Path(base_dir) / rel)
            dim = int(entries.get("dimension", str(dim_csv)))
            if dim != dim_csv:
                raise ConfigError(
                    f"dimension {dim} conflicts with coefficient indices ({dim_csv}-d)"
                )
            return symbol_from_fourier_table(table, dim, label or "fourier-table")
        # kind == "grid"
        samples = [float(v) for v in entries["samples"].split(",") if v.strip()]
        return symbol_from_grid(samples, label or "grid")
    except KeyError as exc:
        raise ConfigError(f"kind {kind!r} requires key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"bad value in symbol config: {exc}") from None


def load_symbol(path: Union[str, Path]) -> Symbol:
    """Load a symbol from a plain-text config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"symbol file not found: {path}")
    return parse_symbol_config(path.read_text(), base_dir=path.parent)


def bundled_symbols() -> dict[str, Symbol]:
    """The test symbols shipped with the package."""
    return {
        "constant-half": constant_symbol(0.5, label="constant-half"),
        "cosine": cosine_symbol(),
        "thermal-beta1": cosine_thermal_symbol(1.0, label="thermal-beta1"),
        "thermal-beta2": cosine_thermal_symbol(2.0, label="thermal-beta2"),
    }
