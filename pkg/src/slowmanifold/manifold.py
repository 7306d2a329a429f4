"""Graph representation of candidate manifolds and stencil derivatives.

A candidate slow manifold is stored as a graph over a uniform grid in the
slow variable.  First and second derivatives along the grid come from
centered finite-difference stencils of order 2 or 4, with one-sided
stencils of the same formal order at the edges.  Stencil weights are
generated from the Vandermonde moment conditions, so any offset pattern
is available without hand-transcribed coefficient tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from math import factorial

import numpy as np

from .errors import DomainError, GridError

__all__ = ["GraphManifold", "derivative", "fd_weights", "uniform_grid"]

# central stencil half-width for (deriv, order)
_CENTRAL_HALF = {(1, 2): 1, (1, 4): 2, (2, 2): 1, (2, 4): 2}


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple, deriv: int) -> np.ndarray:
    """Finite-difference weights for the ``deriv``-th derivative at
    offset 0 from nodes at integer ``offsets`` (unit spacing)."""
    k = len(offsets)
    if deriv >= k:
        raise GridError(f"{k} nodes cannot produce derivative {deriv}")
    V = np.array([[o**p for o in offsets] for p in range(k)], dtype=float)
    rhs = np.zeros(k)
    rhs[deriv] = factorial(deriv)
    return np.linalg.solve(V, rhs)


def derivative(values, dx: float, deriv: int = 1, order: int = 4) -> np.ndarray:
    """Stencil derivative of uniformly sampled values.

    Centered stencils of the requested ``order`` on the interior,
    one-sided stencils of the same order at the edges.
    """
    if (deriv, order) not in _CENTRAL_HALF:
        raise GridError(f"unsupported (deriv, order) = ({deriv}, {order})")
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    half = _CENTRAL_HALF[(deriv, order)]
    npts = deriv + order  # one-sided stencil length
    if n < npts:
        raise GridError(f"grid too coarse for stencil: {n} < {npts} points")
    out = np.empty(n)
    cw = fd_weights(tuple(range(-half, half + 1)), deriv)
    out[half : n - half] = np.correlate(v, cw, mode="valid")
    for i in range(half):
        w_lo = fd_weights(tuple(range(-i, npts - i)), deriv)
        out[i] = v[:npts] @ w_lo
        w_hi = fd_weights(tuple(range(-(npts - 1 - i), i + 1)), deriv)
        out[n - 1 - i] = v[n - npts :] @ w_hi
    out /= dx**deriv
    return out


def uniform_grid(lo: float, hi: float, count: int) -> np.ndarray:
    if not (hi > lo):
        raise DomainError(f"need hi > lo, got [{lo}, {hi}]")
    if count < 5:
        raise GridError(f"grid needs at least 5 points, got {count}")
    return np.linspace(float(lo), float(hi), int(count))


@dataclass(frozen=True, eq=False)
class GraphManifold:
    """Candidate manifold as fast-variable values over a uniform slow grid.

    Attributes
    ----------
    grid : ndarray
        Strictly increasing, uniformly spaced slow-variable abscissae
        (at least 5 points; spacing uniform to 1e-12 relative, with an
        allowance for floating-point representation of the nodes).
    values : ndarray
        Fast-variable values, same length as ``grid``, all finite.
    eps : float
        Timescale parameter of the model the graph refers to.
    deriv_order : int
        Stencil order (2 or 4) used for derivatives along the graph.
    provenance : str
        Tag of the producing method (``"qssa"``, ``"eps0"``, ...).
    meta : dict
        Free-form extras (snapshot time, expansion coefficients, ...).
    """

    grid: np.ndarray
    values: np.ndarray
    eps: float
    deriv_order: int = 4
    provenance: str = "unspecified"
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise GridError("grid and values must be 1-d arrays of equal length")
        if grid.size < 5:
            raise GridError(f"grid needs at least 5 points, got {grid.size}")
        d = np.diff(grid)
        if np.any(d <= 0.0):
            raise GridError("grid must be strictly increasing")
        mean_dx = (grid[-1] - grid[0]) / (grid.size - 1)
        # 1e-12 relative uniformity, plus slack for node rounding
        tol = 1e-12 * mean_dx + 8.0 * np.finfo(float).eps * np.abs(grid).max()
        if np.abs(d - mean_dx).max() > tol:
            raise GridError("grid spacing is not uniform")
        if not np.all(np.isfinite(values)):
            raise GridError("manifold values contain non-finite entries")
        if self.deriv_order not in (2, 4):
            raise GridError(f"deriv_order must be 2 or 4, got {self.deriv_order}")
        if not (self.eps > 0.0):
            raise DomainError(f"eps must be positive, got {self.eps}")

    @property
    def spacing(self) -> float:
        return (self.grid[-1] - self.grid[0]) / (self.grid.size - 1)

    @property
    def interior(self) -> slice:
        """Points with a full centered stencil; edge points are excluded
        from max-norm reports because one-sided stencils carry larger
        error constants."""
        k = self.deriv_order // 2
        return slice(k, self.grid.size - k)

    def slope(self) -> np.ndarray:
        return derivative(self.values, self.spacing, 1, self.deriv_order)

    def curvature1d(self) -> np.ndarray:
        return derivative(self.values, self.spacing, 2, self.deriv_order)

    def with_values(self, values, provenance=None, **meta) -> "GraphManifold":
        return GraphManifold(
            grid=self.grid,
            values=values,
            eps=self.eps,
            deriv_order=self.deriv_order,
            provenance=self.provenance if provenance is None else provenance,
            meta={**self.meta, **meta},
        )
