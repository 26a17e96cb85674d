"""Space-time meshes, saved fields and the Neumann Laplacian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SolverTolerances:
    """Local error tolerances for the inner time integrators."""

    rel_tol: float = 1e-6
    abs_tol: float = 1e-6
    max_step: float = np.inf

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Mesh:
    """Uniform grid on [0, L] x [0, T] with ``maxX`` nodes and ``maxT`` saved times."""

    L: float = 1.0
    T: float = 100.0
    maxX: int = 25
    maxT: int = 200
    xmesh: np.ndarray = field(init=False, repr=False, compare=False)
    tmesh: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.maxX < 3:
            raise ValueError("maxX must be >= 3")
        if self.maxT < 2:
            raise ValueError("maxT must be >= 2")
        if not (self.L > 0 and self.T > 0):
            raise ValueError("L and T must be positive")
        object.__setattr__(self, "xmesh", np.linspace(0.0, self.L, self.maxX))
        object.__setattr__(self, "tmesh", np.linspace(0.0, self.T, self.maxT))

    @property
    def dx(self) -> float:
        return self.L / (self.maxX - 1)

    def refined(self) -> "Mesh":
        """Mesh with twice the cells in each direction; old nodes are kept."""
        return Mesh(self.L, self.T, 2 * self.maxX - 1, 2 * self.maxT - 1)


class StateField(np.ndarray):
    """A ``maxT x maxX`` array holding one scalar field on the saved grid."""

    def __new__(cls, values):
        arr = np.array(values, dtype=float)
        if arr.ndim != 2:
            raise ValueError("a state field is a 2-D (time x space) array")
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("state field contains non-finite values")
        return arr.view(cls)


def laplacian_neumann(u, dx: float, delta: float = 1.0) -> np.ndarray:
    """delta * u_xx by central differences with mirrored ghost nodes.

    The mirror u_0 = u_2 gives the boundary rows 2 delta (u_2 - u_1) / dx^2.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] < 3:
        raise ValueError("need at least 3 nodes for the Neumann Laplacian")
    out = np.empty_like(u)
    out[..., 1:-1] = u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]
    out[..., 0] = 2.0 * (u[..., 1] - u[..., 0])
    out[..., -1] = 2.0 * (u[..., -2] - u[..., -1])
    return out * (delta / dx**2)


def laplacian_bands(n: int, dx: float, delta: float = 1.0) -> np.ndarray:
    """The Neumann Laplacian as a (3, n) banded matrix for ``solve_banded``."""
    if n < 3:
        raise ValueError("need at least 3 nodes for the Neumann Laplacian")
    c = delta / dx**2
    ab = np.zeros((3, n))
    ab[0, 1:] = c
    ab[1, :] = -2.0 * c
    ab[2, :-1] = c
    ab[0, 1] = 2.0 * c
    ab[2, -2] = 2.0 * c
    return ab


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = dx / 2.0
    return w


def interp_time(field, tmesh: np.ndarray, t: float, j: int | None = None):
    """Piecewise-linear value of ``field`` at time ``t`` (one column if ``j`` given)."""
    tmesh = np.asarray(tmesh)
    if not tmesh[0] <= t <= tmesh[-1]:
        raise ValueError(f"t={t} outside [{tmesh[0]}, {tmesh[-1]}]")
    k = int(np.searchsorted(tmesh, t, side="right")) - 1
    k = min(max(k, 0), len(tmesh) - 2)
    t0, t1 = tmesh[k], tmesh[k + 1]
    s = (t - t0) / (t1 - t0)
    row = field[k] if s == 0.0 else (1.0 - s) * field[k] + s * field[k + 1]
    row = np.asarray(row, dtype=float)
    return float(row[j]) if j is not None else row


class TimeInterpolant:
    """Fast repeated piecewise-linear lookups in a saved field.

    Precomputes per-interval slopes so each call is one search plus an axpy.
    """

    def __init__(self, tmesh: np.ndarray, values: np.ndarray):
        self.tmesh = np.asarray(tmesh, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.slopes = np.diff(self.values, axis=0) / np.diff(self.tmesh)[:, None]

    def __call__(self, t: float) -> np.ndarray:
        tm = self.tmesh
        if t <= tm[0]:
            return self.values[0]
        if t >= tm[-1]:
            return self.values[-1]
        k = int(np.searchsorted(tm, t, side="right")) - 1
        return self.values[k] + (t - tm[k]) * self.slopes[k]
