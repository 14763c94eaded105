"""Adaptive tensor-product Gauss-Legendre quadrature on [0, 1]^d.

The engine keeps a frontier of panels (boxes), compares each panel's
16-point Gauss-Legendre estimate against the sum over its 2^d bisected
children, and accepts the refined value once the disagreement fits the
local error budget (absolute tolerance times panel volume). Refinement
is processed level by level so integrand evaluations stay vectorized.

This is the single integration backend of the package: entropy
densities, Fourier coefficients, and Laplace-representation checks all
go through it, so their error estimates share one source of truth.
"""

from __future__ import annotations

import dataclasses
import itertools
from typing import Callable, Optional

import numpy as np

from .errors import QuadratureNonConvergence

GL_ORDER = 16

_nodes, _weights = np.polynomial.legendre.leggauss(GL_ORDER)
_UNIT_NODES = 0.5 * (_nodes + 1.0)
_UNIT_WEIGHTS = 0.5 * _weights

_TENSOR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


@dataclasses.dataclass(frozen=True)
class QuadratureSpec:
    """Parameters of the adaptive panel rule.

    ``abs_tol`` is the absolute error budget for the whole integral;
    each panel gets a share proportional to its volume. Refinement
    never halts silently: exhausting ``max_depth`` or ``max_panels``
    with too much residual disagreement raises
    :class:`QuadratureNonConvergence` carrying the estimate.
    """

    rule: str = "gauss-legendre-16"
    initial_panels: int = 8
    abs_tol: float = 1e-10
    max_depth: int = 34
    max_panels: int = 400_000

    def __post_init__(self):
        if self.abs_tol <= 0.0:
            raise ValueError("abs_tol must be positive")
        if self.initial_panels < 1:
            raise ValueError("initial_panels must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


def _tensor_nodes(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-cube tensor nodes (G, dim) and weights (G,) for one panel."""
    if dim not in _TENSOR_CACHE:
        grids = np.meshgrid(*([_UNIT_NODES] * dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wgrids = np.meshgrid(*([_UNIT_WEIGHTS] * dim), indexing="ij")
        w = np.ones(pts.shape[0])
        for g in wgrids:
            w = w * g.ravel()
        _TENSOR_CACHE[dim] = (pts, w)
    return _TENSOR_CACHE[dim]


def integrate_unit_cube(
    fn: Callable[[np.ndarray], np.ndarray],
    dim: int,
    spec: Optional[QuadratureSpec] = None,
) -> tuple[np.ndarray | float, float]:
    """Integrate ``fn`` over [0, 1]^dim.

    ``fn`` maps an (N, dim) array of points to (N,) scalar values or to
    (N, m) vectors (real or complex); vector components are integrated
    simultaneously and share the refinement of the worst component.

    Returns ``(value, error_estimate)``. Raises
    :class:`QuadratureNonConvergence` if the summed panel disagreements
    exceed ``spec.abs_tol`` after exhausting refinement.
    """
    if spec is None:
        spec = QuadratureSpec()
    if dim < 1:
        raise ValueError("dim must be >= 1")

    unit_pts, unit_w = _tensor_nodes(dim)
    npanel_nodes = unit_pts.shape[0]
    state = {"vector": None}

    def estimates(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        npan = lo.shape[0]
        pts = lo[:, None, :] + (hi - lo)[:, None, :] * unit_pts[None, :, :]
        vals = np.asarray(fn(pts.reshape(npan * npanel_nodes, dim)))
        if state["vector"] is None:
            state["vector"] = vals.ndim == 2
        vals = vals.reshape(npan, npanel_nodes, -1)
        vol = np.prod(hi - lo, axis=1)
        return np.einsum("pgm,g->pm", vals, unit_w) * vol[:, None]

    edges = np.linspace(0.0, 1.0, spec.initial_panels + 1)
    corners = np.array(
        list(itertools.product(range(spec.initial_panels), repeat=dim)), dtype=float
    )
    width = 1.0 / spec.initial_panels
    lo = corners * width
    hi = lo + width
    parent_est = estimates(lo, hi)

    offsets = np.array(list(itertools.product((0, 1), repeat=dim)))
    nchild = offsets.shape[0]

    total = np.zeros(parent_est.shape[1], dtype=parent_est.dtype)
    err_total = 0.0

    for depth in range(spec.max_depth + 1):
        npan = lo.shape[0]
        if npan == 0:
            break
        if npan > spec.max_panels:
            raise QuadratureNonConvergence(
                f"panel budget exceeded ({npan} > {spec.max_panels})",
                value=None,
                error_estimate=np.inf,
            )
        mid = 0.5 * (lo + hi)
        child_lo = np.where(offsets[None, :, :] == 1, mid[:, None, :], lo[:, None, :])
        child_hi = np.where(offsets[None, :, :] == 1, hi[:, None, :], mid[:, None, :])
        child_lo = child_lo.reshape(npan * nchild, dim)
        child_hi = child_hi.reshape(npan * nchild, dim)
        child_est = estimates(child_lo, child_hi)
        refined = child_est.reshape(npan, nchild, -1).sum(axis=1)
        disagree = np.abs(parent_est - refined).max(axis=1)
        vol = np.prod(hi - lo, axis=1)
        accept = (disagree <= spec.abs_tol * vol) | (depth == spec.max_depth)

        total = total + refined[accept].sum(axis=0)
        err_total += float(disagree[accept].sum())

        keep = ~accept
        if not np.any(keep):
            lo = np.empty((0, dim))
            break
        keep_children = np.repeat(keep, nchild)
        lo = child_lo[keep_children]
        hi = child_hi[keep_children]
        parent_est = child_est[keep_children]

    value = total if state["vector"] else complex(total[0]) if np.iscomplexobj(total) else float(total[0])
    if err_total > spec.abs_tol:
        raise QuadratureNonConvergence(
            f"quadrature did not converge: estimated error {err_total:.3e} "
            f"exceeds tolerance {spec.abs_tol:.3e}",
            value=value,
            error_estimate=err_total,
        )
    return value, err_total


def integrate_interval(
    fn: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: Optional[QuadratureSpec] = None,
) -> tuple[float, float]:
    """Integrate a scalar function of one variable over [a, b].

    Thin wrapper over the unit-cube engine with an affine change of
    variables; ``fn`` receives a 1-d array of abscissae.
    """
    if not b > a:
        raise ValueError("need b > a")
    scale = b - a

    def wrapped(pts: np.ndarray) -> np.ndarray:
        x = a + scale * pts[:, 0]
        return np.asarray(fn(x)) * scale

    value, err = integrate_unit_cube(wrapped, 1, spec)
    return float(value), err
