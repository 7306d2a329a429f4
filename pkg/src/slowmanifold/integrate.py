"""Adaptive time integration for stiff two-timescale systems.

The workhorse is an embedded Dormand-Prince 5(4) pair with proportional
step control.  When the controller is persistently forced below
``eps/50`` (the usual symptom of a timescale gap the explicit scheme
cannot step over economically), the run switches to an L-stable implicit
single-step scheme: the step is advanced by the implicit trapezoid rule
and its error estimated against a backward-Euler companion, with Newton
inner iterations driven by the model Jacobian.  Dense output between
accepted steps is cubic Hermite in both regimes, which is what the
quadrature in :mod:`slowmanifold.variational` relies on.

Local error per accepted step is controlled to ``rtol*|z| + atol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DomainError, NonlinearSolverError, SingularityError, StiffnessError
from .models import ModelSpec, eval_jacobian

__all__ = ["Trajectory", "integrate"]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

_H_MIN = 1e-14
_NEWTON_MAX = 25
_SWITCH_COUNT = 15  # consecutive small steps before going implicit


@dataclass(eq=False)
class Trajectory:
    """Accepted integration nodes plus a cubic-Hermite dense output.

    ``times`` is strictly increasing and at least two entries long;
    ``states`` holds one state per node (shape ``(len(times), dim)``).
    ``derivs`` stores the right-hand side at the nodes and powers the
    Hermite interpolation in :meth:`sample`.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    model_name: str
    tolerances: tuple
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) < 2:
            raise DomainError("trajectory needs at least 2 nodes")
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise DomainError("trajectory states must be finite")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def tf(self) -> float:
        return float(self.times[-1])

    def sample(self, t) -> np.ndarray:
        """Dense-output states at times ``t`` (scalar or array).

        Cubic Hermite interpolation on each accepted step using the
        stored endpoint states and derivatives.  Returns shape
        ``(dim,)`` for scalar ``t``, else ``(dim, len(t))``.
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if t_arr.min() < self.times[0] - 1e-12 or t_arr.max() > self.times[-1] + 1e-12:
            raise DomainError("sample time outside trajectory span")
        idx = np.clip(np.searchsorted(self.times, t_arr, side="right") - 1, 0, len(self.times) - 2)
        t0 = self.times[idx]
        h = self.times[idx + 1] - t0
        th = np.clip((t_arr - t0) / h, 0.0, 1.0)
        y0 = self.states[idx]
        y1 = self.states[idx + 1]
        f0 = self.derivs[idx]
        f1 = self.derivs[idx + 1]
        th = th[:, None]
        h = h[:, None]
        h00 = (1.0 + 2.0 * th) * (1.0 - th) ** 2
        h10 = th * (1.0 - th) ** 2
        h01 = th**2 * (3.0 - 2.0 * th)
        h11 = th**2 * (th - 1.0)
        out = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
        out = out.T
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[:, 0]
        return out


def _sc_norm(err, y0, y1, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / sc) ** 2)))


def integrate(
    model: ModelSpec,
    z0,
    t0: float,
    tf: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_steps: int = 2_000_000,
    method: str = "auto",
) -> Trajectory:
    """Integrate ``dz/dt = F(z)`` from ``t0`` to ``tf``.

    Parameters
    ----------
    model : ModelSpec
    z0 : array_like
        Initial state, inside the model domain.
    t0, tf : float
        Horizon with ``tf > t0``.
    rtol, atol : float
        Per-step local error control, ``|err| <= rtol*|z| + atol``.
    method : {"auto", "rk45", "implicit"}
        ``"auto"`` runs the explicit pair and switches to the implicit
        trapezoid/backward-Euler pair only when the controller is
        persistently pushed below ``eps/50``; the other values force one
        regime (useful for testing).

    Raises
    ------
    StiffnessError
        Step underflow (h < 1e-14).
    NonlinearSolverError
        Implicit-stage Newton failed to converge persistently.
    SingularityError
        The exact solution runs into a pole of the model.
    """
    if not tf > t0:
        raise DomainError(f"need tf > t0, got [{t0}, {tf}]")
    if method not in ("auto", "rk45", "implicit"):
        raise DomainError(f"unknown method {method!r}")
    y = np.asarray(z0, dtype=float).copy()
    if y.shape != (model.dim,):
        raise DomainError(f"z0 must have shape ({model.dim},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DomainError("z0 contains non-finite entries")

    f = model.field
    t = float(t0)
    fy = f(y)

    ts = [t]
    ys = [y.copy()]
    fs = [fy.copy()]
    meta = {"scheme": "rk45" if method != "implicit" else "implicit", "n_accepted": 0, "n_rejected": 0}

    # starting step: crude but safe; the controller fixes it quickly
    span = tf - t0
    d0 = _sc_norm(y, y, y, rtol, atol)
    d1 = _sc_norm(fy, y, y, rtol, atol)
    h = 0.01 * d0 / d1 if d1 > 1e-10 else span / 100.0
    h = min(max(h, _H_MIN * 10), span)

    implicit = method == "implicit"
    small_streak = 0
    switch_floor = model.eps / 50.0

    last_sing = None
    steps = 0
    while t < tf - 1e-14 * max(1.0, abs(tf)):
        if steps >= max_steps:
            raise StiffnessError(f"exceeded {max_steps} steps at t = {t}")
        steps += 1
        h = min(h, tf - t)
        if h < _H_MIN:
            if last_sing is not None:
                raise last_sing
            raise StiffnessError(f"step underflow (h = {h:.2e}) at t = {t}")

        if not implicit:
            try:
                y_new, f_new, err = _dopri_step(f, t, y, fy, h)
            except SingularityError as exc:
                last_sing = exc
                meta["n_rejected"] += 1
                h *= 0.25
                continue
            if err is None:  # non-finite stage: reject hard
                meta["n_rejected"] += 1
                h *= 0.25
                continue
            enorm = _sc_norm(err, y, y_new, rtol, atol)
            if enorm <= 1.0:
                t += h
                y, fy = y_new, f_new
                ts.append(t)
                ys.append(y.copy())
                fs.append(fy.copy())
                meta["n_accepted"] += 1
            else:
                meta["n_rejected"] += 1
            fac = 0.9 * enorm ** -0.2 if enorm > 0.0 else 5.0
            h *= min(5.0, max(0.2, fac))
            if method == "auto":
                small_streak = small_streak + 1 if h < switch_floor else 0
                if small_streak >= _SWITCH_COUNT:
                    implicit = True
                    meta["scheme"] = "rk45+implicit"
                    meta["switched_at"] = t
        else:
            try:
                y_tr, f_tr, y_be = _implicit_step(model, t, y, fy, h, rtol, atol)
            except SingularityError as exc:
                last_sing = exc
                meta["n_rejected"] += 1
                h *= 0.25
                continue
            except NonlinearSolverError:
                meta["n_rejected"] += 1
                h *= 0.25
                if h < _H_MIN:
                    raise
                continue
            enorm = _sc_norm(y_tr - y_be, y, y_tr, rtol, atol)
            if enorm <= 1.0:
                t += h
                y, fy = y_tr, f_tr
                ts.append(t)
                ys.append(y.copy())
                fs.append(fy.copy())
                meta["n_accepted"] += 1
            else:
                meta["n_rejected"] += 1
            fac = 0.9 * enorm ** -0.5 if enorm > 0.0 else 5.0
            h *= min(5.0, max(0.2, fac))

    return Trajectory(
        times=np.asarray(ts),
        states=np.asarray(ys),
        derivs=np.asarray(fs),
        model_name=model.name,
        tolerances=(rtol, atol),
        meta=meta,
    )


def _dopri_step(f, t, y, fy, h):
    k = [fy]
    for i in range(1, 7):
        yi = y + h * (_A[i] @ np.stack(k[:i]) if i > 1 else _A[i][0] * k[0])
        if not np.all(np.isfinite(yi)):
            return None, None, None
        k.append(f(yi))
    K = np.stack(k)
    y_new = y + h * (_B5 @ K)
    if not np.all(np.isfinite(y_new)):
        return None, None, None
    err = h * (_E @ K)
    return y_new, k[6], err  # FSAL: k7 evaluated at y_new


def _newton_solve(model, y_guess, residual, h_scale, rtol, atol):
    """Newton iteration for one implicit stage; returns the stage state."""
    y = y_guess.copy()
    I = np.eye(model.dim)
    for _ in range(_NEWTON_MAX):
        r = residual(y)
        J = eval_jacobian(model, y)
        try:
            dy = np.linalg.solve(I - h_scale * J, -r)
        except np.linalg.LinAlgError:
            raise NonlinearSolverError("singular implicit-stage matrix") from None
        y = y + dy
        sc = atol + rtol * np.abs(y)
        if not np.all(np.isfinite(y)):
            raise NonlinearSolverError("implicit stage diverged")
        if np.sqrt(np.mean((dy / sc) ** 2)) <= 0.03:
            return y
    raise NonlinearSolverError(
        f"implicit-stage Newton did not converge in {_NEWTON_MAX} iterations"
    )


def _implicit_step(model, t, y, fy, h, rtol, atol):
    f = model.field
    # implicit trapezoid (advances the solution)
    y_tr = _newton_solve(
        model,
        y + h * fy,
        lambda v: v - y - 0.5 * h * (fy + f(v)),
        0.5 * h,
        rtol,
        atol,
    )
    f_tr = f(y_tr)
    # backward Euler companion (error estimate)
    y_be = _newton_solve(
        model,
        y_tr,
        lambda v: v - y - h * f(v),
        h,
        rtol,
        atol,
    )
    return y_tr, f_tr, y_be
