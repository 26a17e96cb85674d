"""Relay feedback: the multivalued sign graph and its saturation regularisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# relative slack on the band edge: an iterate parked at center + eps comes
# back from floating point a few ulps off the edge and must still count as
# inside the band
EDGE_SLACK = 1e-8


@dataclass(frozen=True)
class SignEpsilon:
    """Width of the linear band of the regularised sign."""

    epsilon: float = 1e-4

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon!r}")


def sign_multivalued(r: float) -> tuple[float, float]:
    """The sign graph at ``r`` as a closed interval ``(lo, hi)``."""
    if not np.isfinite(r):
        raise ValueError("argument must be finite")
    if r > 0:
        return (1.0, 1.0)
    if r < 0:
        return (-1.0, -1.0)
    return (-1.0, 1.0)


def sign_eps(s: SignEpsilon | float, r):
    """Saturated sign: -1 below -eps, r/eps inside the band, 1 above eps.

    This is the Yosida approximation of the sign graph.
    """
    eps = s.epsilon if isinstance(s, SignEpsilon) else float(s)
    x = np.asarray(r, dtype=float)
    out = np.where(x > eps, 1.0, np.where(x < -eps, -1.0, x / eps))
    return float(out) if out.ndim == 0 else out


def sign_eps_slope(s: SignEpsilon | float, r):
    """Derivative of :func:`sign_eps`: 1/eps on the closed band, 0 outside.

    The band edges (with a relative slack of ``EDGE_SLACK``) get the inner
    slope, which lets Newton iterates parked on an edge by
    :func:`clamp_to_band` enter the band.
    """
    eps = s.epsilon if isinstance(s, SignEpsilon) else float(s)
    x = np.asarray(r, dtype=float)
    out = np.where(np.abs(x) <= eps * (1.0 + EDGE_SLACK), 1.0 / eps, 0.0)
    return float(out) if out.ndim == 0 else out


def relay_current(s: SignEpsilon | float, rho: float, v, v_star):
    """Stabilising control current -rho * sign_eps(v - v_star)."""
    if rho < 0:
        raise ValueError("relay gain rho must be >= 0")
    out = -rho * np.asarray(sign_eps(s, np.asarray(v, dtype=float) - v_star))
    return float(out) if out.ndim == 0 else out


def clamp_to_band(s: SignEpsilon | float, old, new, center):
    """Stop iterates that jump over the edge of the band ``|r - center| <= eps``.

    A component moving from above ``center + eps`` to below it is parked on
    that edge, and likewise from below ``center - eps``; all others pass.
    Components already on an edge (up to rounding) are free to move.
    """
    eps = s.epsilon if isinstance(s, SignEpsilon) else float(s)
    outer = eps * (1.0 + EDGE_SLACK)
    d_old = np.asarray(old, dtype=float) - center
    d_new = np.asarray(new, dtype=float) - center
    out = np.where((d_old > outer) & (d_new < eps), eps, d_new)
    out = np.where((d_old < -outer) & (d_new > -eps), -eps, out)
    return center + out
