"""Extended-phase-space geometry of a manifold family.

Appending time as an equal coordinate turns a time-dependent graph
``z2(z1, t)`` into a surface ``(z1, t) -> (z1, t, z2)`` in a flat
Euclidean space with unit weights.  Advecting an initial graph along
the flow generates such a family; its time derivatives follow from the
transport identity ``h_t = delta`` (the invariance defect), evaluated
analytically rather than by differencing snapshots, which keeps the
curvature criterion free of O(dt) noise.

For the surface the unit normal is ``(-h_z1, -h_t, 1)/W`` with
``W = sqrt(1 + h_z1**2 + h_t**2)``; the second-fundamental-form entries
are ``(h_z1z1, h_tz1, h_tt)/W`` and the sectional curvature of the
(unique, for one slow variable) tangent plane spanned by
``X = (1, 0, h_z1)`` and ``Y = (0, 1, h_t)`` is

    K = (h_z1z1 * h_tt - h_tz1**2) / W**4.

An invariant graph has a t-stationary family, so all time derivatives
and hence K vanish; K = 0 is necessary but NOT sufficient (every
trajectory graph is invariant, and ruled surfaces have K = 0 too), so
roots of the pointwise criterion must be post-filtered by
:func:`select_invariant_root`.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .asymptotics import _defect_parts, invariance_defect
from .errors import DomainError, GridError, NonGraphError, NonlinearSolverError
from .integrate import integrate
from .manifold import GraphManifold, derivative
from .models import ModelSpec, eval_jacobian

__all__ = [
    "AdvectedFamily",
    "CurvatureReport",
    "advect_family",
    "time_derivatives",
    "curvature_field",
    "solve_curvature_criterion",
    "select_invariant_root",
]


@dataclass(frozen=True, eq=False)
class AdvectedFamily:
    """One time slice of an advected graph family with its derivatives.

    On an invariant manifold (defect identically zero) the three time
    derivatives vanish to stencil accuracy.
    """

    base: GraphManifold
    t: float
    h_z1: np.ndarray
    h_z1z1: np.ndarray
    h_t: np.ndarray
    h_tz1: np.ndarray
    h_tt: np.ndarray


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    """Second fundamental form and time-sectional curvature per point.

    ``max_abs_K`` is reported over interior points (full centered
    stencils); edge values exist but use one-sided stencils.
    Metadata records that the extended phase space is metrized as flat
    Euclidean ``(z1, t, z2)`` with unit weights.
    """

    grid: np.ndarray
    K: np.ndarray
    II_11: np.ndarray
    II_12: np.ndarray
    II_22: np.ndarray
    W: np.ndarray
    max_abs_K: float
    meta: dict = dc_field(default_factory=dict)


_METRIC_NOTE = "extended phase space metrized as flat Euclidean (z1, t, z2), unit weights"


def time_derivatives(model: ModelSpec, m: GraphManifold, t: float = 0.0) -> AdvectedFamily:
    """Populate the family derivatives of a slice via the transport identity.

    ``h_t = delta``; ``h_tz1`` is the stencil derivative of the defect
    field; ``h_tt`` follows by the chain rule through h and h':

        h_tt = (df_fast/dz2 - h_z1 * df_slow/dz2) * delta - f_slow * h_tz1.
    """
    delta, f_slow, _f_fast, hp = _defect_parts(model, m)
    dx = m.spacing
    islow, ifast = model.slow_idx[0], model.fast_idx[0]
    Z = np.empty((2, m.grid.size))
    Z[islow] = m.grid
    Z[ifast] = m.values
    J = eval_jacobian(model, Z)
    dff = J[ifast, ifast]
    dfs = J[islow, ifast]
    h_tz1 = derivative(delta, dx, 1, m.deriv_order)
    h_tt = (dff - hp * dfs) * delta - f_slow * h_tz1
    return AdvectedFamily(
        base=m,
        t=t,
        h_z1=hp,
        h_z1z1=derivative(m.values, dx, 2, m.deriv_order),
        h_t=delta,
        h_tz1=h_tz1,
        h_tt=h_tt,
    )


def curvature_field(fam: AdvectedFamily) -> CurvatureReport:
    """Second fundamental form and sectional curvature of the slice."""
    W2 = 1.0 + fam.h_z1**2 + fam.h_t**2
    W = np.sqrt(W2)
    K = (fam.h_z1z1 * fam.h_tt - fam.h_tz1**2) / W2**2
    inner = fam.base.interior
    return CurvatureReport(
        grid=fam.base.grid,
        K=K,
        II_11=fam.h_z1z1 / W,
        II_12=fam.h_tz1 / W,
        II_22=fam.h_tt / W,
        W=W,
        max_abs_K=float(np.abs(K[inner]).max()),
        meta={"metric": _METRIC_NOTE, "t": fam.t, "provenance": fam.base.provenance},
    )


# ---------------------------------------------------------------------------
# advection of an initial-value manifold along the flow


def advect_family(
    model: ModelSpec,
    h0: GraphManifold,
    T: float,
    snapshots: int,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    guard: int = 8,
) -> list:
    """Transport an initial graph along the flow; re-grid each snapshot.

    Method of characteristics: the grid points (plus ``guard`` extra
    seeds beyond each edge, values linearly extended) are integrated
    under the full flow; each snapshot is re-interpolated onto the
    original grid by monotone cubic interpolation over the advected
    abscissae.  The snapshot grid is trimmed to the span covered by the
    advected non-guard seeds -- extrapolation is refused.

    Returns ``snapshots`` manifolds at times ``linspace(0, T, snapshots)``
    (the first is the initial slice restated); each carries its time in
    ``meta["t"]`` and the trimmed index range in ``meta["trim"]``.
    """
    if not T > 0.0:
        raise DomainError(f"need T > 0, got {T}")
    if snapshots < 2:
        raise DomainError("need at least 2 snapshots")
    grid = h0.grid
    dx = h0.spacing
    islow, ifast = model.slow_idx[0], model.fast_idx[0]

    seeds_x = list(grid)
    seeds_v = list(h0.values)
    slope_lo = float(h0.slope()[0])
    slope_hi = float(h0.slope()[-1])
    for j in range(1, guard + 1):
        xl = grid[0] - j * dx
        xr = grid[-1] + j * dx
        if _in_domain(model, xl, h0.values[0] - j * dx * slope_lo):
            seeds_x.insert(0, xl)
            seeds_v.insert(0, h0.values[0] - j * dx * slope_lo)
        if _in_domain(model, xr, h0.values[-1] + j * dx * slope_hi):
            seeds_x.append(xr)
            seeds_v.append(h0.values[-1] + j * dx * slope_hi)
    seeds_x = np.asarray(seeds_x)
    seeds_v = np.asarray(seeds_v)
    core = (seeds_x >= grid[0] - 0.5 * dx) & (seeds_x <= grid[-1] + 0.5 * dx)

    times = np.linspace(0.0, T, snapshots)
    n_seed = seeds_x.size
    X = np.empty((snapshots, n_seed))
    V = np.empty((snapshots, n_seed))
    z0 = np.zeros(model.dim)
    for k in range(n_seed):
        z0[islow], z0[ifast] = seeds_x[k], seeds_v[k]
        traj = integrate(model, z0, 0.0, T, rtol=rtol, atol=atol)
        states = traj.sample(times)
        X[:, k] = states[islow]
        V[:, k] = states[ifast]

    out = []
    for i, t in enumerate(times):
        xs, vs = X[i], V[i]
        if np.any(np.diff(xs) <= 0.0):
            raise NonGraphError(
                f"advected abscissae not monotone at t = {t}; family left graph form"
            )
        lo_core = xs[core].min()
        hi_core = xs[core].max()
        mask = (grid >= lo_core - 1e-12) & (grid <= hi_core + 1e-12)
        if mask.sum() < 5:
            raise GridError(f"trimmed snapshot grid shorter than 5 points at t = {t}")
        interp = PchipInterpolator(xs, vs, extrapolate=False)
        sub = grid[mask]
        vals = interp(sub)
        if np.any(~np.isfinite(vals)):
            raise GridError(f"snapshot interpolation left the advected span at t = {t}")
        idx = np.nonzero(mask)[0]
        out.append(
            GraphManifold(
                grid=sub,
                values=vals,
                eps=h0.eps,
                deriv_order=h0.deriv_order,
                provenance=f"advect[{h0.provenance}]",
                meta={"t": float(t), "trim": (int(idx[0]), int(idx[-1]))},
            )
        )
    return out


def _in_domain(model: ModelSpec, x: float, v: float) -> bool:
    z = np.zeros(model.dim)
    z[model.slow_idx[0]] = x
    z[model.fast_idx[0]] = v
    try:
        model.field(z)
    except Exception:
        return False
    return True


# ---------------------------------------------------------------------------
# pointwise zero-curvature criterion as a root-finding problem


def _curvature_residual(model: ModelSpec, grid, eps, deriv_order):
    """Residual closure R(h) = K(z1_j; h) over the full grid (edges use
    one-sided stencils and are unknowns like every other point)."""
    grid = np.asarray(grid, dtype=float)

    def resid(h):
        m = GraphManifold(grid=grid, values=h, eps=eps, deriv_order=deriv_order)
        fam = time_derivatives(model, m)
        W2 = 1.0 + fam.h_z1**2 + fam.h_t**2
        return (fam.h_z1z1 * fam.h_tt - fam.h_tz1**2) / W2**2

    return resid


def solve_curvature_criterion(
    model: ModelSpec,
    grid,
    seed: GraphManifold,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> GraphManifold:
    """Damped Newton solve of the pointwise criterion ``K(z1_j; h) = 0``.

    All grid values (edges included, via one-sided stencils) are
    unknowns; the Jacobian comes from forward differences on the
    residual and steps are globalized by Armijo backtracking.
    Convergence requires ``max|K| <= tol`` and step norm ``<= tol``.

    K = 0 is only a necessary condition: besides the attracting slow
    manifold it is satisfied by every trajectory graph, so seed close
    (the quasi-steady state is within O(eps)) and post-filter the result
    with :func:`select_invariant_root`.  Fine grids resolve the
    near-degenerate family modes and make the Newton system close to
    singular; a few tens of points per decade of the slow variable is
    the intended operating regime.

    Raises
    ------
    NonlinearSolverError
        Singular residual Jacobian, failed line search, or no
        convergence within ``max_iter`` iterations.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.shape != seed.grid.shape or np.abs(grid - seed.grid).max() > 1e-12:
        raise DomainError("seed must live on the requested grid")
    resid = _curvature_residual(model, grid, seed.eps, seed.deriv_order)
    n = grid.size
    h = seed.values.copy()
    R = resid(h)
    if not np.all(np.isfinite(R)):
        raise DomainError("seed defect/curvature not finite")
    n_iter = 0
    last_step = 0.0
    while np.abs(R).max() > tol or last_step > tol:
        if n_iter >= max_iter:
            raise NonlinearSolverError(
                f"curvature Newton did not converge in {max_iter} iterations "
                f"(max|K| = {np.abs(R).max():.2e})"
            )
        J = np.empty((n, n))
        fd = 1.5e-8 * (1.0 + np.abs(h))
        for j in range(n):
            hj = h.copy()
            hj[j] += fd[j]
            J[:, j] = (resid(hj) - R) / fd[j]
        try:
            d = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError:
            raise NonlinearSolverError("singular residual Jacobian") from None
        phi0 = 0.5 * float(R @ R)
        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-30:
            Rn = resid(h + alpha * d)
            if np.all(np.isfinite(Rn)) and 0.5 * float(Rn @ Rn) <= phi0 * (
                1.0 - 2e-4 * alpha
            ):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise NonlinearSolverError(
                f"curvature Newton line search failed at iteration {n_iter} "
                f"(max|K| = {np.abs(R).max():.2e}); try a coarser grid"
            )
        h = h + alpha * d
        R = Rn
        last_step = float(np.abs(alpha * d).max())
        n_iter += 1
    return GraphManifold(
        grid=grid,
        values=h,
        eps=seed.eps,
        deriv_order=seed.deriv_order,
        provenance="curvature",
        meta={"newton_iterations": n_iter, "max_abs_K": float(np.abs(R).max())},
    )


def select_invariant_root(
    model: ModelSpec,
    candidates: list,
    n_probe: int = 3,
    defect_tol: float = 1e-6,
    variational_tol: float = 1e-3,
    horizon: float = 1.0,
    rtol: float = 1e-9,
) -> tuple:
    """Rank curvature roots by invariance defect; cross-check the winner
    against the variational route.

    The zero-curvature criterion is necessary only, so candidate roots
    are ranked by their max interior invariance defect.  The winner is
    additionally compared against independently optimized trajectory
    starts (:func:`slowmanifold.variational.minimize_fast_ic`) at
    ``n_probe`` grid locations.  The sufficient-condition proxy flags
    PASS when the winner's defect is at most ``defect_tol`` and its
    worst variational discrepancy at most ``variational_tol``.

    Returns ``(winner, report)``.
    """
    from .variational import default_spec, minimize_fast_ic

    if not candidates:
        raise DomainError("need at least one candidate manifold")
    reports = [invariance_defect(model, m) for m in candidates]
    order = sorted(range(len(candidates)), key=lambda i: reports[i].max_abs)
    win = order[0]
    winner = candidates[win]

    qs = np.linspace(0.25, 0.75, n_probe)
    probe_idx = [int(round(q * (winner.grid.size - 1))) for q in qs]
    probe_z1 = winner.grid[probe_idx]

    probes = []
    for x in probe_z1:
        ref = float(np.interp(x, winner.grid, winner.values))
        spec = default_spec(
            model,
            z1_start=float(x),
            horizon=(0.0, horizon),
            bracket=(ref - 0.4, ref + 0.4),
            rtol=rtol,
        )
        z2_star, _phi, _diag = minimize_fast_ic(model, spec)
        probes.append((float(x), z2_star))

    rows = []
    for i, (m, rep) in enumerate(zip(candidates, reports)):
        gaps = [
            abs(float(np.interp(x, m.grid, m.values)) - z2s) for x, z2s in probes
        ]
        rows.append(
            {
                "provenance": m.provenance,
                "max_defect": rep.max_abs,
                "variational_gap": max(gaps),
                "is_winner": i == win,
            }
        )
    flag = (
        "PASS"
        if rows[win]["max_defect"] <= defect_tol
        and rows[win]["variational_gap"] <= variational_tol
        else "FAIL"
    )
    report = {
        "candidates": rows,
        "winner": rows[win]["provenance"],
        "probe_points": probes,
        "flag": flag,
        "defect_tol": defect_tol,
        "variational_tol": variational_tol,
    }
    return winner, report
