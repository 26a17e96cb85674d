"""Adaptive Dormand-Prince 5(4) integrator with 4th-order dense output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SolverTolerances

# Butcher tableau of the Dormand-Prince pair
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th and the embedded 4th order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + s h) = y + h * K^T (P @ [s, s^2, s^3, s^4])
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
UNDERFLOW = 1e-12


class IntegrationError(RuntimeError):
    """Raised when an adaptive integrator cannot make progress."""


@dataclass
class Trajectory:
    """Solution sampled at the requested output times."""

    t: np.ndarray
    y: np.ndarray  # shape (len(t), dim)
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    n_newton_failures: int = 0


def _error_norm(err, y, y_new, tol: SolverTolerances) -> float:
    scale = tol.abs_tol + tol.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale)) if err.size else 0.0


def _initial_step(rhs, t0, y0, f0, direction_span, tol: SolverTolerances) -> float:
    # Hairer, Norsett & Wanner, Solving ODEs I, II.4
    scale = tol.abs_tol + tol.rel_tol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def integrate_rk45(rhs, y0, t_span, tol: SolverTolerances | None = None, *,
                   t_eval=None, tstops=None, first_step: float | None = None) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` over ``t_span`` with the Dormand-Prince pair.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y) -> ndarray`` of the same shape as ``y``.
    y0 : array_like
        Initial state (any shape; it is flattened internally).
    t_span : (float, float)
        Start and end time, ``t_span[1] > t_span[0]``.
    tol : SolverTolerances
        Local error is kept below ``abs_tol + rel_tol * |y|`` componentwise.
    t_eval : array_like, optional
        Output times inside ``t_span``; defaults to the two endpoints.
    tstops : array_like, optional
        Times that steps must land on exactly, e.g. kinks of a forcing term.

    Returns
    -------
    Trajectory
        Values at ``t_eval``, obtained from the continuous extension.
    """
    tol = tol or SolverTolerances()
    t0, tf = map(float, t_span)
    if not tf > t0:
        raise ValueError("t_span must be increasing")
    y0 = np.asarray(y0, dtype=float)
    shape = y0.shape
    y = y0.ravel().copy()

    def f(t, yy):
        return np.asarray(rhs(t, yy.reshape(shape)), dtype=float).ravel()

    t_eval = np.array([t0, tf]) if t_eval is None else np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or t_eval[0] < t0 or t_eval[-1] > tf:
        raise ValueError("t_eval must be sorted and inside t_span")
    stops = np.unique(np.concatenate([np.asarray(tstops if tstops is not None else [], float), [tf]]))
    stops = stops[(stops > t0) & (stops <= tf)]

    out = np.empty((len(t_eval), y.size))
    ie = 0
    while ie < len(t_eval) and t_eval[ie] == t0:
        out[ie] = y
        ie += 1

    span = tf - t0
    fy = f(t0, y)
    n_rhs = 1
    h = first_step if first_step else _initial_step(f, t0, y, fy, span, tol)
    n_rhs += 0 if first_step else 1
    h = min(h, tol.max_step)
    t = t0
    n_steps = n_rejected = 0
    k = np.empty((7, y.size))
    istop = 0

    while t < tf:
        next_stop = stops[istop]
        h = min(h, tol.max_step)
        landing = t + h >= next_stop - 1e-13 * max(1.0, abs(next_stop))
        if landing:
            h = next_stop - t
        if h < UNDERFLOW * span:
            raise IntegrationError(f"step size underflow at t={t:.6g} (h={h:.3g})")

        k[0] = fy
        for s in range(1, 7):
            k[s] = f(t + C[s] * h, y + h * (np.dot(A[s], k[:s])))
        n_rhs += 6
        y_new = y + h * (B @ k)
        # FSAL: the 7th stage is rhs at the new point
        err = _error_norm(h * (E @ k), y, y_new, tol)

        if err <= 1.0:
            t_new = next_stop if landing else t + h
            while ie < len(t_eval) and t_eval[ie] <= t_new:
                s = (t_eval[ie] - t) / h
                powers = np.array([s, s * s, s**3, s**4])
                out[ie] = y + h * (k.T @ (P @ powers))
                ie += 1
            if landing:
                istop += 1
                if ie > 0 and t_eval[ie - 1] == t_new:
                    out[ie - 1] = y_new
            t, y, fy = t_new, y_new, k[6].copy()
            n_steps += 1
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            h *= factor
        else:
            n_rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={t:.6g}")

    return Trajectory(t_eval, out.reshape((len(t_eval),) + shape), n_steps, n_rejected, n_rhs)
