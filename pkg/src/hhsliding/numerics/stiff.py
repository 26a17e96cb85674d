"""Adaptive TR-BDF2 integrator for method-of-lines parabolic systems.

The Jacobian of the right-hand side is assumed to be a constant tridiagonal
diffusion matrix (Neumann Laplacian) plus a state-dependent diagonal, so each
Newton step is a single banded solve.

TR-BDF2 (a trapezoidal stage to t + gamma h followed by a BDF2 stage to t + h,
gamma = 2 - sqrt 2) is L-stable and second order. The local error estimate
uses the embedded third-order formula of Bank et al., filtered through the
iteration matrix as recommended by Hosea and Shampine (1996) so that stiff
components do not throttle the step size.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .grid import SolverTolerances, laplacian_bands
from .rk45 import IntegrationError, Trajectory

GAMMA = 2.0 - np.sqrt(2.0)
D = GAMMA / 2.0
W = np.sqrt(2.0) / 4.0
# stage-two combination of y_n and the trapezoidal stage

C_Y = (1.0 - GAMMA) ** 2 / (GAMMA * (2.0 - GAMMA))
# y_{n+1} minus the third-order embedded solution, in units of h * f
ERR_WEIGHTS = np.array([W - (1.0 - W) / 3.0, W - (3.0 * W + 1.0) / 3.0, D - D / 3.0])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
UNDERFLOW = 1e-12


class _IterationMatrix:
    """I - c * (diffusion Laplacian + diag(d)) in banded storage."""

    def __init__(self, n: int, diffusion: float, dx: float | None):
        self.n = n
        if diffusion and n >= 3:
            self.lap = laplacian_bands(n, dx, diffusion)
        else:
            self.lap = np.zeros((3, n))

    def solve(self, c: float, diag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        ab = -c * self.lap
        ab[1] += 1.0 - c * diag
        return solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)


def integrate_stiff_mol(rhs, jacobian_diag_estimate, y0, t_span,
                        tol: SolverTolerances | None = None, *,
                        diffusion: float = 0.0, dx: float | None = None,
                        t_eval=None, tstops=None, first_step: float | None = None,
                        max_newton: int = 8, max_retries: int = 25,
                        limiter=None) -> Trajectory:
    """Integrate a stiff method-of-lines system ``y' = rhs(t, y)``.

    Parameters
    ----------
    rhs : callable
        Full right-hand side ``rhs(t, y)``, including the diffusion term.
    jacobian_diag_estimate : callable
        ``jacobian_diag_estimate(t, y)`` returning the diagonal of the
        reaction part of the Jacobian (the diffusion part is added here).
    diffusion, dx : float
        Coefficient and spacing of the Neumann Laplacian contained in ``rhs``.
        ``diffusion=0`` means the Jacobian is purely diagonal.
    max_newton : int
        Newton iterations per stage before the step is halved.
    max_retries : int
        Consecutive Newton failures tolerated before giving up.
    limiter : callable, optional
        ``limiter(t, z_old, z_new) -> z`` applied after every Newton update.
        Piecewise-linear right-hand sides (saturations) need it: a plain
        Newton step taken outside the steep piece overshoots across it and
        can cycle forever.
    """
    tol = tol or SolverTolerances()
    t0, tf = map(float, t_span)
    if not tf > t0:
        raise ValueError("t_span must be increasing")
    y = np.asarray(y0, dtype=float).ravel().copy()
    n = y.size
    if diffusion and dx is None:
        raise ValueError("dx is required when diffusion is nonzero")
    mat = _IterationMatrix(n, diffusion, dx)

    t_eval = np.array([t0, tf]) if t_eval is None else np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or t_eval[0] < t0 or t_eval[-1] > tf:
        raise ValueError("t_eval must be sorted and inside t_span")
    stops = np.unique(np.concatenate([np.asarray(tstops if tstops is not None else [], float), [tf]]))
    stops = stops[(stops > t0) & (stops <= tf)]

    out = np.empty((len(t_eval), n))
    ie = 0
    while ie < len(t_eval) and t_eval[ie] == t0:
        out[ie] = y
        ie += 1

    span = tf - t0
    fy = np.asarray(rhs(t0, y), dtype=float)
    n_rhs = 1
    if first_step:
        h = first_step
    else:
        scale = tol.abs_tol + tol.rel_tol * np.abs(y)
        d1 = np.max(np.abs(fy) / scale)
        # second-order start: h^2 |f| / scale ~ 0.01, never below 1e-8 of the span
        h = np.sqrt(0.01 / d1) if d1 > 1e-10 else 0.01 * span
        h = min(max(h, 1e-8 * span), 0.01 * span)
    t = t0
    n_steps = n_rejected = 0
    retries = 0
    n_failures = 0
    just_rejected = False
    istop = 0

    def newton(t_stage, c, base, guess):
        # solve z - c * rhs(t_stage, z) = base
        nonlocal n_rhs
        z = guess
        for _ in range(max_newton):
            fz = np.asarray(rhs(t_stage, z), dtype=float)
            n_rhs += 1
            resid = z - c * fz - base
            dz = mat.solve(c, np.asarray(jacobian_diag_estimate(t_stage, z), dtype=float), -resid)
            z_new = z + dz
            if limiter is not None:
                z_new = limiter(t_stage, z, z_new)
                dz = z_new - z
            z = z_new
            scale = tol.abs_tol + tol.rel_tol * np.abs(z)
            if np.max(np.abs(dz) / scale) <= 1e-2:
                return z
        return None

    while t < tf:
        next_stop = stops[istop]
        h = min(h, tol.max_step)
        landing = t + h >= next_stop - 1e-13 * max(1.0, abs(next_stop))
        if landing:
            h = next_stop - t
        if h < UNDERFLOW * span:
            raise IntegrationError(f"step size underflow at t={t:.6g} (h={h:.3g})")
        t_new = next_stop if landing else t + h
        c = D * h

        z = newton(t + GAMMA * h, c, y + c * fy, y)
        y_new = None
        if z is not None:
            y_new = newton(t_new, c, z + C_Y * (z - y), y + (z - y) / GAMMA)
        if y_new is None:
            retries += 1
            n_failures += 1
            if retries > max_retries:
                raise IntegrationError(f"Newton iteration failed to converge at t={t:.6g}")
            h *= 0.5
            n_rejected += 1
            continue
        retries = 0

        fz = np.asarray(rhs(t + GAMMA * h, z), dtype=float)
        f_new = np.asarray(rhs(t_new, y_new), dtype=float)
        n_rhs += 2
        est = h * (ERR_WEIGHTS[0] * fy + ERR_WEIGHTS[1] * fz + ERR_WEIGHTS[2] * f_new)
        est = mat.solve(c, np.asarray(jacobian_diag_estimate(t_new, y_new), dtype=float), est)
        scale = tol.abs_tol + tol.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(est) / scale))

        if err <= 1.0:
            while ie < len(t_eval) and t_eval[ie] <= t_new:
                out[ie] = _hermite(t, y, fy, t_new, y_new, f_new, t_eval[ie])
                ie += 1
            if landing:
                istop += 1
                if ie > 0 and t_eval[ie - 1] == t_new:
                    out[ie - 1] = y_new
            t, y, fy = t_new, y_new, f_new
            n_steps += 1
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** (-1.0 / 3.0))
            if just_rejected:
                factor = min(factor, 1.0)
            just_rejected = False
            h *= factor
            if not np.all(np.isfinite(y)):
                raise IntegrationError(f"non-finite state at t={t:.6g}")
        else:
            n_rejected += 1
            just_rejected = True
            h *= max(MIN_FACTOR, SAFETY * err ** (-1.0 / 3.0))

    return Trajectory(t_eval, out, n_steps, n_rejected, n_rhs, n_failures)


def _hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
