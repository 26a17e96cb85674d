"""Block Picard iteration for the relay-controlled cable equation.

Each outer iteration solves the potential equation over the whole horizon
with the gating fields frozen from the previous iterate, then re-solves the
gating equations node by node with the new potential, until two successive
potentials agree to ``threshold`` in the sup-norm over the saved grid.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model
from .model import GatingKind, HHParameters, ReducedModel
from .numerics.grid import Mesh, SolverTolerances, StateField, TimeInterpolant, laplacian_neumann
from .numerics.rk45 import IntegrationError, integrate_rk45
from .numerics.stiff import integrate_stiff_mol
from .relay import clamp_to_band, sign_eps, sign_eps_slope

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
TIME_BUDGET = "time_budget"


class SimulationError(RuntimeError):
    """An inner solve failed or produced non-finite values."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class TargetTrajectory:
    """The prescribed potential v*(t, x).

    ``kind`` is one of ``"constant"`` (value ``c``), ``"time_sinusoid"``
    (``a sin(omega t) + b``) or ``"space_profile"`` (time independent,
    ``profile`` is a callable of x).
    """

    kind: str = "constant"
    c: float = 0.0
    a: float = 0.0
    omega: float = 0.0
    b: float = 0.0
    profile: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "time_sinusoid", "space_profile"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "space_profile" and self.profile is None:
            raise ValueError("space_profile target needs a profile callable")

    @classmethod
    def constant(cls, c: float = 0.0) -> "TargetTrajectory":
        return cls("constant", c=c)

    @classmethod
    def sinusoid(cls, a: float, omega: float, b: float) -> "TargetTrajectory":
        return cls("time_sinusoid", a=a, omega=omega, b=b)

    @classmethod
    def space(cls, profile: Callable) -> "TargetTrajectory":
        return cls("space_profile", profile=profile)

    def at(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(x.shape, self.c)
        if self.kind == "time_sinusoid":
            return np.full(x.shape, self.a * np.sin(self.omega * t) + self.b)
        return np.broadcast_to(np.asarray(self.profile(x), dtype=float), x.shape).copy()

    def on_grid(self, tmesh: np.ndarray, xmesh: np.ndarray) -> np.ndarray:
        return np.array([self.at(t, xmesh) for t in tmesh])

    def sup_dt(self) -> float:
        return abs(self.a * self.omega) if self.kind == "time_sinusoid" else 0.0

    def sup_dxx(self, xmesh: np.ndarray | None = None) -> float:
        if self.kind != "space_profile":
            return 0.0
        if xmesh is None:
            raise ValueError("xmesh needed for the second difference of a space profile")
        xmesh = np.asarray(xmesh)
        dx = xmesh[1] - xmesh[0]
        return float(np.max(np.abs(laplacian_neumann(self.at(0.0, xmesh), dx))))

    def sup(self, xmesh: np.ndarray | None = None) -> float:
        if self.kind == "constant":
            return abs(self.c)
        if self.kind == "time_sinusoid":
            return abs(self.a) + abs(self.b)
        if xmesh is None:
            raise ValueError("xmesh needed for the sup-norm of a space profile")
        return float(np.max(np.abs(self.at(0.0, xmesh))))

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c}
        if self.kind == "time_sinusoid":
            return {"kind": "time_sinusoid", "a": self.a, "omega": self.omega, "b": self.b}
        return {"kind": "space_profile", "profile": getattr(self.profile, "__name__", repr(self.profile))}


@dataclass
class Scenario:
    """Parameters, grid, initial data and target for one controlled run."""

    params: HHParameters
    mesh: Mesh
    v0: float | Callable = 0.0
    n0: float = 0.45
    m0: float = 0.03
    h0: float = 0.397
    target: TargetTrajectory = field(default_factory=TargetTrajectory)
    name: str = "custom"
    x_fixed: float = 0.0

    def __post_init__(self):
        for label in ("n0", "m0", "h0"):
            value = getattr(self, label)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{label} must lie in [0, 1], got {value!r}")

    def initial_potential(self) -> np.ndarray:
        x = self.mesh.xmesh
        if callable(self.v0):
            return np.broadcast_to(np.asarray(self.v0(x), dtype=float), x.shape).copy()
        return np.full(x.shape, float(self.v0))


@dataclass
class SimulationResult:
    """Converged (or last) fields of a Picard run on the saved grid."""

    fields: dict[str, StateField]
    tmesh: np.ndarray
    xmesh: np.ndarray
    vstar: np.ndarray
    iterations: int
    residual_trace: list[float]
    stop_reason: str
    elapsed: float

    @property
    def v(self) -> StateField:
        return self.fields["v"]

    @property
    def n(self) -> StateField:
        return self.fields["n"]

    @property
    def m(self) -> StateField:
        return self.fields["m"]

    @property
    def h(self) -> StateField:
        return self.fields["h"]

    @property
    def w(self) -> StateField:
        return self.fields["w"]

    @property
    def converged(self) -> bool:
        return self.stop_reason == CONVERGED


def _solve_potential(v0, mesh, tol, c_m, delta, rho, eps, F1, F2, target, iteration):
    """One pass of the potential block with coefficients F1, F2 frozen."""
    x = mesh.xmesh
    dx = mesh.dx
    f1_t = TimeInterpolant(mesh.tmesh, F1)
    f2_t = TimeInterpolant(mesh.tmesh, F2)
    inv_c = 1.0 / c_m
    if target.kind == "constant":
        vstar_fixed = target.at(0.0, x)
        vstar = lambda t: vstar_fixed  # noqa: E731
    elif target.kind == "space_profile":
        vstar_fixed = target.at(0.0, x)
        vstar = lambda t: vstar_fixed  # noqa: E731
    else:
        vstar = lambda t: target.at(t, x)  # noqa: E731

    def rhs(t, v):
        out = laplacian_neumann(v, dx, delta) - f1_t(t) * v + f2_t(t)
        if rho:
            out -= rho * sign_eps(eps, v - vstar(t))
        return out * inv_c

    def jac_diag(t, v):
        d = -f1_t(t)
        if rho:
            d = d - rho * sign_eps_slope(eps, v - vstar(t))
        return d * inv_c

    def limiter(t, old, new):
        return clamp_to_band(eps, old, new, vstar(t))

    try:
        traj = integrate_stiff_mol(rhs, jac_diag, v0, (mesh.tmesh[0], mesh.tmesh[-1]), tol,
                                   diffusion=delta * inv_c, dx=dx,
                                   t_eval=mesh.tmesh, tstops=mesh.tmesh,
                                   limiter=limiter if rho else None)
    except IntegrationError as exc:
        raise SimulationError(f"potential solve failed: {exc}", iteration) from exc
    return traj.y


def _solve_gating(rates, w0, v_field, mesh, tol, iteration):
    """Integrate all gating equations at all nodes with v interpolated in time.

    ``rates`` is a list of ``(h1, h2)`` callables, one pair per gating field;
    ``w0`` has shape (len(rates), maxX). Nodes are uncoupled, so they are
    stacked into one vector system.
    """
    v_t = TimeInterpolant(mesh.tmesh, v_field)

    def rhs(t, w):
        v = v_t(t)
        out = np.empty_like(w)
        for k, (h1, h2) in enumerate(rates):
            out[k] = -h1(v) * w[k] + h2(v)
        return out

    try:
        traj = integrate_rk45(rhs, w0, (mesh.tmesh[0], mesh.tmesh[-1]), tol,
                              t_eval=mesh.tmesh, tstops=mesh.tmesh)
    except IntegrationError as exc:
        raise SimulationError(f"gating solve failed: {exc}", iteration) from exc
    return traj.y  # (maxT, len(rates), maxX)


def _hh_rates(kind: GatingKind):
    def h1(v):
        return model.h1k(kind, v)

    def h2(v):
        return model.h2k(kind, v)

    return h1, h2


def _picard(mesh, v0, gating0, rates, coeffs, c_m, delta, rho, eps, target, tol,
            threshold, n_iter_max, time_budget, names):
    """Shared outer loop; ``coeffs(gating_fields) -> (F1, F2)`` on the grid."""
    start = time.perf_counter()
    maxT, maxX = mesh.maxT, mesh.maxX
    gating = np.broadcast_to(gating0[None, :, :], (maxT,) + gating0.shape).copy()
    v_prev = np.broadcast_to(v0, (maxT, maxX)).copy()
    residuals: list[float] = []
    stop_reason = MAX_ITERATIONS
    iteration = 0
    v_field = v_prev

    while True:
        F1, F2 = coeffs(gating)
        iteration += 1
        v_field = _solve_potential(v0, mesh, tol, c_m, delta, rho, eps, F1, F2, target, iteration)
        if not np.all(np.isfinite(v_field)):
            raise SimulationError("non-finite potential", iteration)
        gating = _solve_gating(rates, gating0, v_field, mesh, tol, iteration)
        if not np.all(np.isfinite(gating)):
            raise SimulationError("non-finite gating field", iteration)
        residual = float(np.max(np.abs(v_field - v_prev)))
        residuals.append(residual)
        v_prev = v_field
        elapsed = time.perf_counter() - start
        log.debug("iteration %d residual %.3e elapsed %.2fs", iteration, residual, elapsed)
        if residual < threshold:
            stop_reason = CONVERGED
            break
        if iteration >= n_iter_max:
            stop_reason = MAX_ITERATIONS
            break
        if elapsed > time_budget:
            stop_reason = TIME_BUDGET
            break

    fields = {"v": StateField(v_field)}
    for k, name in enumerate(names):
        fields[name] = StateField(gating[:, k, :])
    return SimulationResult(
        fields=fields,
        tmesh=mesh.tmesh.copy(),
        xmesh=mesh.xmesh.copy(),
        vstar=target.on_grid(mesh.tmesh, mesh.xmesh),
        iterations=iteration,
        residual_trace=residuals,
        stop_reason=stop_reason,
        elapsed=time.perf_counter() - start,
    )


def run_simulation(s: Scenario, tol: SolverTolerances | None = None, threshold: float = 1e-3,
                   n_iter_max: int = 100, time_budget: float = 900.0) -> SimulationResult:
    """Solve the controlled Hodgkin-Huxley system for scenario ``s``.

    Stops when successive potentials differ by less than ``threshold`` in the
    sup-norm, after ``n_iter_max`` iterations, or once ``time_budget`` wall
    seconds have elapsed.
    """
    tol = tol or SolverTolerances()
    p = s.params
    x = s.mesh.xmesh
    gating0 = np.array([np.full(x.shape, s.n0), np.full(x.shape, s.m0), np.full(x.shape, s.h0)])
    rates = [_hh_rates(k) for k in (GatingKind.N, GatingKind.M, GatingKind.H)]

    def coeffs(g):
        n, m, h = g[:, 0, :], g[:, 1, :], g[:, 2, :]
        return model.f1(n, m, h, p), model.f2(n, m, h, p)

    return _picard(s.mesh, s.initial_potential(), gating0, rates, coeffs, p.C_M, p.delta,
                   p.rho, p.epsilon, s.target, tol, threshold, n_iter_max, time_budget,
                   names=("n", "m", "h"))


def run_reduced(rm: ReducedModel, mesh: Mesh, v0, w0, target: TargetTrajectory | None = None,
                rho: float = 0.0, epsilon: float = 1e-4, delta: float = 0.1,
                tol: SolverTolerances | None = None, threshold: float = 1e-3,
                n_iter_max: int = 100, time_budget: float = 900.0) -> SimulationResult:
    """Picard iteration for the two-field reduced model (capacitance 1)."""
    tol = tol or SolverTolerances()
    target = target or TargetTrajectory.constant(0.0)
    x = mesh.xmesh
    v0_vec = np.broadcast_to(np.asarray(v0(x) if callable(v0) else v0, dtype=float), x.shape).copy()
    w0_vec = np.broadcast_to(np.asarray(w0(x) if callable(w0) else w0, dtype=float), x.shape).copy()

    def h1(v):
        return np.broadcast_to(rm.h1(v), np.shape(v))

    def h2(v):
        return np.broadcast_to(rm.h2(v), np.shape(v))

    def coeffs(g):
        w = g[:, 0, :]
        return (np.broadcast_to(rm.f1(w), w.shape).astype(float),
                np.broadcast_to(rm.f2(w), w.shape).astype(float))

    return _picard(mesh, v0_vec, w0_vec[None, :], [(h1, h2)], coeffs, 1.0, delta, rho, epsilon,
                   target, tol, threshold, n_iter_max, time_budget, names=("w",))
