"""Sufficient conditions for finite-time sliding and empirical onset detection.

With

    A = |v*_t| + delta |v*_xx| + f1M |v*| + f2M + f1M |v0 - v*|

(all sup-norms), any gain rho > A + |v0 - v*| / T drives v onto v* by

    T* = |v0 - v*| / (rho - A),

and |v - v*| stays below the comparison envelope q(t) = (|v0 - v*| - (rho - A) t)^+.
A is a crude bound: the gains needed in practice are far smaller.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import model
from .coupled import Scenario, SimulationResult, TargetTrajectory
from .model import GatingBounds, HHParameters


class SlidingConditionError(ValueError):
    """The gain does not exceed the bound A, so no sliding time is guaranteed."""


@dataclass(frozen=True)
class SlidingBound:
    rho: float
    A: float
    f1M: float
    f2M: float
    dev0: float
    rho_min: float
    T_star: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def lipschitz_constants(params: HHParameters, M: float) -> tuple[float, float]:
    """Lipschitz constants of f1 and f2 on the cube |n|, |m|, |h| <= M."""
    M3 = M**3
    L1 = max(4 * M3 * params.g_K, 3 * M3 * params.g_Na, M3 * params.g_Na)
    L2 = max(4 * M3 * params.g_K * abs(params.V_K),
             3 * M3 * params.g_Na * abs(params.V_Na),
             M3 * params.g_Na * abs(params.V_Na))
    return L1, L2


def coefficient_bounds(params: HHParameters, gb: GatingBounds) -> tuple[float, float]:
    """Upper bounds (f1M, f2M) on |f1| and |f2| over the gating box."""
    L1, L2 = lipschitz_constants(params, gb.largest)
    f1M = abs(model.f1(0.0, 0.0, 0.0, params)) + L1 * gb.total
    f2M = abs(model.f2(0.0, 0.0, 0.0, params)) + L2 * gb.total
    return f1M, f2M


def bound_A(target: TargetTrajectory, dev0: float, f1M: float, f2M: float, delta: float,
            xmesh: np.ndarray | None = None) -> float:
    return (target.sup_dt() + delta * target.sup_dxx(xmesh) + f1M * target.sup(xmesh)
            + f2M + f1M * dev0)


def sliding_time(rho: float, A: float, dev0: float) -> float:
    if not rho > A:
        raise SlidingConditionError(f"rho={rho:g} does not exceed A={A:g}")
    return dev0 / (rho - A)


def comparison_q(t, rho: float, A: float, dev0: float):
    """The envelope (dev0 - (rho - A) t)^+, zero from the sliding time on."""
    if not rho > A:
        raise SlidingConditionError(f"rho={rho:g} does not exceed A={A:g}")
    t = np.asarray(t, dtype=float)
    # zero is imposed from T* on so rounding cannot leave a positive residue
    out = np.where(t >= dev0 / (rho - A), 0.0, np.maximum(dev0 - (rho - A) * t, 0.0))
    return float(out) if out.ndim == 0 else out


def initial_deviation(v0: np.ndarray, target: TargetTrajectory, tmesh: np.ndarray,
                      xmesh: np.ndarray) -> float:
    """sup over (t, x) of |v0(x) - v*(t, x)|."""
    v0 = np.asarray(v0, dtype=float)
    if target.kind == "time_sinusoid":
        # the sinusoid sweeps [b - |a|, b + |a|]
        return float(np.max(np.abs(v0 - target.b)) + abs(target.a))
    return float(np.max(np.abs(v0 - target.at(0.0, xmesh))))


def analyze(s: Scenario, gb: GatingBounds | None = None) -> SlidingBound:
    """Bounds for the full Hodgkin-Huxley scenario ``s``."""
    gb = gb or model.gating_bounds()
    p = s.params
    x = s.mesh.xmesh
    f1M, f2M = coefficient_bounds(p, gb)
    dev0 = initial_deviation(s.initial_potential(), s.target, s.mesh.tmesh, x)
    A = bound_A(s.target, dev0, f1M, f2M, p.delta, x)
    rho_min = A + dev0 / s.mesh.T
    T_star = sliding_time(p.rho, A, dev0) if p.rho > rho_min else None
    return SlidingBound(p.rho, A, f1M, f2M, dev0, rho_min, T_star)


def default_band(epsilon: float = 1e-4, threshold: float = 1e-3) -> float:
    return 2.0 * epsilon + 5.0 * threshold


def deviation_profile(result: SimulationResult, target: TargetTrajectory | None = None) -> np.ndarray:
    """sup_x |v - v*| at every saved time."""
    vstar = result.vstar if target is None else target.on_grid(result.tmesh, result.xmesh)
    return np.max(np.abs(np.asarray(result.v) - vstar), axis=1)


def detect_sliding(result: SimulationResult, target: TargetTrajectory | None = None,
                   band: float | None = None) -> float | None:
    """First saved time after which v stays within ``band`` of v* for good.

    Returns ``None`` when the final saved state is still outside the band.
    """
    band = default_band() if band is None else band
    inside = deviation_profile(result, target) <= band
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    k = 0 if outside.size == 0 else int(outside[-1]) + 1
    return float(result.tmesh[k])
