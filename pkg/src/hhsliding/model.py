"""Hodgkin-Huxley rate functions and membrane coefficient functions.

Potentials are in mV measured from rest (the classical 1952 convention, where
depolarisation is positive), times in ms, conductances in mS/cm^2.

The membrane equation is written as

    C_M v_t = delta v_xx - f1(n, m, h) v + f2(n, m, h) + I_C

and every gating variable ``w`` obeys ``w_t = -h1(v) w + h2(v)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

# Below this magnitude of the exponent argument u, u/(e^u - 1) is evaluated
# from its Taylor series instead of the (cancelling) closed form.
SERIES_THRESHOLD = 1e-4

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class GatingKind(str, enum.Enum):
    """The three gating variables of the classical model."""

    N = "n"  # potassium activation
    M = "m"  # sodium activation
    H = "h"  # sodium inactivation


@dataclass(frozen=True)
class HHParameters:
    """Physical constants of the controlled cable equation.

    Defaults are the classical squid-axon set used by all presets.
    """

    g_K: float = 36.0
    g_Na: float = 120.0
    g_l: float = 0.3
    V_K: float = -12.0
    V_Na: float = 115.0
    V_l: float = 10.613
    delta: float = 0.1
    C_M: float = 0.91
    rho: float = 0.0
    epsilon: float = 1e-4

    def __post_init__(self):
        for name in ("g_K", "g_Na", "g_l", "delta", "C_M", "epsilon"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"rho must be finite and >= 0, got {self.rho!r}")
        for name in ("V_K", "V_Na", "V_l"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def with_overrides(self, **overrides) -> "HHParameters":
        return replace(self, **overrides)


@dataclass(frozen=True)
class GatingBounds:
    """Suprema of h2/h1 for each gating kind."""

    n_M: float
    m_M: float
    h_M: float

    def __post_init__(self):
        for name in ("n_M", "m_M", "h_M"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value!r}")

    @property
    def largest(self) -> float:
        return max(self.n_M, self.m_M, self.h_M)

    @property
    def total(self) -> float:
        return self.n_M + self.m_M + self.h_M


@dataclass(frozen=True)
class ReducedModel:
    """Two-field model: potential ``v`` coupled to one concentration ``w``.

    The coefficient callables must accept numpy arrays. The bounds are
    hypotheses supplied by the caller, not computed here.

    Attributes
    ----------
    f1, f2 : callable
        Coefficients of the potential equation, functions of ``w``.
    h1, h2 : callable
        Coefficients of the concentration equation, functions of ``v``.
    a : float
        Positive lower bound on ``f1``.
    w_M : float
        Supremum of ``h2 / h1``.
    f1M, f2M : float, optional
        Upper bounds on ``|f1|`` and ``|f2|`` over ``[0, w_M]``. When omitted
        they are estimated by sampling that interval.
    """

    f1: Callable
    f2: Callable
    h1: Callable
    h2: Callable
    a: float
    w_M: float
    f1M: float | None = None
    f2M: float | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("lower bound a on f1 must be positive")
        if not self.w_M > 0:
            raise ValueError("w_M must be positive")

    def check(self, r: np.ndarray | None = None, w: np.ndarray | None = None) -> None:
        """Raise ``ValueError`` if hypothesis (ii) fails on the sample points."""
        if r is None:
            r = np.linspace(-100.0, 200.0, 301)
        if w is None:
            w = np.linspace(0.0, self.w_M, 101)
        f1 = np.broadcast_to(self.f1(w), np.shape(w))
        if np.any(f1 < self.a):
            raise ValueError("f1 falls below its declared lower bound a")
        h1 = np.broadcast_to(self.h1(r), np.shape(r))
        h2 = np.broadcast_to(self.h2(r), np.shape(r))
        if np.any(h1 <= 0) or np.any(h2 <= 0):
            raise ValueError("h1 and h2 must be strictly positive")
        if np.any(h2 / h1 > self.w_M * (1 + 1e-12)):
            raise ValueError("h2/h1 exceeds the declared w_M")

    def coefficient_bounds(self) -> tuple[float, float]:
        w = np.linspace(0.0, self.w_M, 1001)
        f1M = self.f1M
        if f1M is None:
            f1M = float(np.max(np.abs(np.broadcast_to(self.f1(w), w.shape))))
        f2M = self.f2M
        if f2M is None:
            f2M = float(np.max(np.abs(np.broadcast_to(self.f2(w), w.shape))))
        return f1M, f2M


def _as_kind(kind) -> GatingKind:
    return kind if isinstance(kind, GatingKind) else GatingKind(kind)


def _check_finite(v):
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("potential must be finite")
    return arr


def _scalar_or_array(out: np.ndarray, like):
    return float(out) if np.ndim(like) == 0 else out


def _u_over_expm1(u: np.ndarray) -> np.ndarray:
    """u / (e^u - 1), continuous through the removable singularity at u = 0."""
    small = np.abs(u) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, u)
    direct = safe / np.expm1(safe)
    series = 1.0 / (1.0 + u / 2.0 + u * u / 6.0)
    return np.where(small, series, direct)


def alpha(kind, v):
    """Opening rate alpha_k(v) in 1/ms."""
    kind = _as_kind(kind)
    x = _check_finite(v)
    if kind is GatingKind.N:
        out = 0.1 * _u_over_expm1(1.0 - 0.1 * x)
    elif kind is GatingKind.M:
        out = _u_over_expm1(2.5 - 0.1 * x)
    else:
        out = 0.07 * np.exp(-x / 20.0)
    return _scalar_or_array(out, v)


def beta(kind, v):
    """Closing rate beta_k(v) in 1/ms."""
    kind = _as_kind(kind)
    x = _check_finite(v)
    if kind is GatingKind.N:
        out = 0.125 * np.exp(-x / 80.0)
    elif kind is GatingKind.M:
        out = 4.0 * np.exp(-x / 18.0)
    else:
        out = 1.0 / (np.exp(3.0 - 0.1 * x) + 1.0)
    return _scalar_or_array(out, v)


def h1k(kind, v):
    """Total relaxation rate alpha + beta of gating variable ``kind``."""
    return alpha(kind, v) + beta(kind, v)


def h2k(kind, v):
    return alpha(kind, v)


def gating_steady_state(kind, v):
    """Fraction alpha / (alpha + beta) approached when v is held fixed."""
    a = alpha(kind, v)
    return a / (a + beta(kind, v))


def gating_rhs(kind, v, w):
    """Right-hand side -h1(v) w + h2(v) of a gating equation."""
    a = alpha(kind, v)
    return -(a + beta(kind, v)) * w + a


def f1(n, m, h, p: HHParameters):
    """Total membrane conductance g_K n^4 + g_Na m^3 h + g_l."""
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=float)
    h = np.asarray(h, dtype=float)
    out = p.g_K * n**4 + p.g_Na * m**3 * h + p.g_l
    return float(out) if out.ndim == 0 else out


def f2(n, m, h, p: HHParameters):
    """Conductance-weighted reversal potentials, the current at v = 0."""
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=float)
    h = np.asarray(h, dtype=float)
    out = p.g_K * p.V_K * n**4 + p.g_Na * p.V_Na * m**3 * h + p.g_l * p.V_l
    return float(out) if out.ndim == 0 else out


def default_potential_grid() -> np.ndarray:
    return np.linspace(-100.0, 200.0, 3001)


def _golden_max(fun, lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    best = [(fun(a), a), (fc, c), (fd, d), (fun(b), b)]
    value, x = max(best)
    return x, value


def gating_sup_ratio(kind, grid: np.ndarray | None = None) -> float:
    """Numerical supremum of h2/h1 over a potential window, capped at 1.

    The grid maximiser is refined by golden-section search on the two
    neighbouring grid cells.
    """
    kind = _as_kind(kind)
    grid = default_potential_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty potential grid")
    grid = np.sort(grid)
    ratio = gating_steady_state(kind, grid)
    ratio = np.atleast_1d(ratio)
    i = int(np.argmax(ratio))
    best = float(ratio[i])
    if grid.size > 1:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        _, refined = _golden_max(lambda x: float(gating_steady_state(kind, x)), lo, hi)
        best = max(best, refined)
    return min(best, 1.0)


def gating_bounds(grid: np.ndarray | None = None) -> GatingBounds:
    return GatingBounds(
        n_M=gating_sup_ratio(GatingKind.N, grid),
        m_M=gating_sup_ratio(GatingKind.M, grid),
        h_M=gating_sup_ratio(GatingKind.H, grid),
    )
