import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hhsliding import model
from hhsliding.numerics.grid import (Mesh, SolverTolerances, StateField, interp_time,
                                     laplacian_neumann, trapezoid_weights)
from hhsliding.numerics.rk45 import IntegrationError, integrate_rk45
from hhsliding.numerics.stiff import integrate_stiff_mol
from hhsliding.relay import sign_eps, sign_eps_slope


def gating_closed_form(kind, v, w0, t):
    h1, h2 = model.h1k(kind, v), model.h2k(kind, v)
    return np.exp(-h1 * t) * w0 + h2 / h1 * (1.0 - np.exp(-h1 * t))


# --- mesh ---------------------------------------------------------------

def test_mesh_nodes():
    mesh = Mesh(L=1.0, T=10.0, maxX=5, maxT=11)
    assert mesh.xmesh.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert mesh.tmesh[0] == 0.0 and mesh.tmesh[-1] == 10.0
    assert np.all(np.diff(mesh.tmesh) > 0)
    assert mesh.dx == 0.25


def test_mesh_refined_keeps_nodes():
    mesh = Mesh(1.0, 100.0, 25, 200)
    fine = mesh.refined()
    np.testing.assert_allclose(fine.xmesh[::2], mesh.xmesh, atol=1e-15)
    np.testing.assert_allclose(fine.tmesh[::2], mesh.tmesh, atol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(maxX=2), dict(maxT=1), dict(L=0.0), dict(T=-1.0)])
def test_mesh_invalid(kwargs):
    with pytest.raises(ValueError):
        Mesh(**kwargs)


def test_state_field_rejects_nan():
    with pytest.raises(FloatingPointError):
        StateField([[0.0, np.nan]])
    assert StateField(np.zeros((2, 3))).shape == (2, 3)


def test_tolerances_positive():
    with pytest.raises(ValueError):
        SolverTolerances(rel_tol=0.0)


# --- Laplacian ----------------------------------------------------------

def test_laplacian_constant_is_zero():
    assert np.all(laplacian_neumann(np.full(7, 3.2), 0.1, 0.5) == 0.0)


def test_laplacian_quadratic_interior_exact():
    x = np.linspace(0, 1, 11)
    lap = laplacian_neumann(x**2, x[1] - x[0], delta=0.3)
    np.testing.assert_allclose(lap[1:-1], 0.6, rtol=1e-12)


def test_laplacian_boundary_rows_use_mirror():
    u = np.array([1.0, 3.0, 4.0, 2.0])
    lap = laplacian_neumann(u, 0.5, 1.0)
    assert lap[0] == pytest.approx(2 * (3.0 - 1.0) / 0.25)
    assert lap[-1] == pytest.approx(2 * (4.0 - 2.0) / 0.25)


def test_laplacian_cosine_mode_second_order():
    errors = []
    for nx in (11, 21, 41):
        x = np.linspace(0, 1, nx)
        u = np.cos(np.pi * x)
        lap = laplacian_neumann(u, x[1] - x[0], 0.1)
        errors.append(np.max(np.abs(lap + 0.1 * np.pi**2 * u)))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.05)


def test_laplacian_too_short():
    with pytest.raises(ValueError):
        laplacian_neumann(np.zeros(2), 0.1)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(3, 40), elements=st.floats(-100, 100)))
def test_laplacian_flux_balance(u):
    dx = 1.0 / (u.size - 1)
    total = trapezoid_weights(u.size, dx) @ laplacian_neumann(u, dx, 0.1)
    assert abs(total) < 1e-12 * max(1.0, np.max(np.abs(u)) / dx)


# --- time interpolation ---------------------------------------------------

def test_interp_time():
    tmesh = np.array([0.0, 1.0, 2.0])
    field = np.array([[0.0, 1.0], [2.0, 3.0], [6.0, 5.0]])
    assert interp_time(field, tmesh, 1.0, 0) == 2.0
    assert interp_time(field, tmesh, 0.5, 1) == 2.0
    assert interp_time(field, tmesh, 2.0, 1) == 5.0
    with pytest.raises(ValueError):
        interp_time(field, tmesh, 2.5, 0)


@given(st.floats(0, 3))
def test_interp_time_reproduces_linear_fields(t):
    tmesh = np.linspace(0, 3, 7)
    field = 2.0 * tmesh[:, None] - np.array([1.0, 0.5])
    np.testing.assert_allclose(interp_time(field, tmesh, t), 2.0 * t - np.array([1.0, 0.5]), atol=1e-12)


# --- Dormand-Prince -------------------------------------------------------

def test_rk45_exponential_decay():
    tol = SolverTolerances(1e-6, 1e-6)
    traj = integrate_rk45(lambda t, y: -y, [1.0], (0.0, 1.0), tol)
    assert abs(traj.y[-1, 0] - np.exp(-1.0)) < 10 * tol.abs_tol


def test_rk45_constant_solution_exact():
    traj = integrate_rk45(lambda t, y: np.zeros_like(y), [1.5, -2.0], (0.0, 3.0),
                          t_eval=np.linspace(0, 3, 13))
    assert np.all(traj.y == np.array([1.5, -2.0]))


@pytest.mark.parametrize("kind", list(model.GatingKind))
def test_rk45_gating_frozen_potential_matches_closed_form(kind):
    t = np.linspace(0.0, 10.0, 101)
    w0 = 0.45
    tol = SolverTolerances(1e-8, 1e-8)
    traj = integrate_rk45(lambda s, w: model.gating_rhs(kind, 0.0, w), [w0], (0.0, 10.0), tol, t_eval=t)
    assert np.max(np.abs(traj.y[:, 0] - gating_closed_form(kind, 0.0, w0, t))) < 1e-6


def test_rk45_error_scales_with_tolerance():
    def err(tol):
        traj = integrate_rk45(lambda t, y: -y, [1.0], (0.0, 5.0), SolverTolerances(tol, tol),
                              t_eval=np.linspace(0, 5, 51))
        return np.max(np.abs(traj.y[:, 0] - np.exp(-traj.t)))

    assert err(1e-5) / err(1e-5 / 16) >= 8


def test_rk45_dense_output_matches_forced_stops():
    tol = SolverTolerances(1e-7, 1e-7)
    t_eval = np.linspace(0, 6, 25)

    def rhs(t, y):
        return np.array([y[1], -y[0] + 0.3 * np.sin(2 * t)])

    dense = integrate_rk45(rhs, [1.0, 0.0], (0, 6), tol, t_eval=t_eval)
    stopped = integrate_rk45(rhs, [1.0, 0.0], (0, 6), tol, t_eval=t_eval, tstops=t_eval)
    assert np.max(np.abs(dense.y - stopped.y)) < 10 * tol.abs_tol


def test_rk45_step_underflow_raises():
    with pytest.raises(IntegrationError):
        integrate_rk45(lambda t, y: y**2, [1.0], (0.0, 2.0))


def test_rk45_accepts_matrix_state():
    y0 = np.ones((3, 4))
    traj = integrate_rk45(lambda t, y: -y, y0, (0, 1))
    assert traj.y.shape == (2, 3, 4)
    np.testing.assert_allclose(traj.y[-1], np.exp(-1.0), atol=1e-5)


# --- TR-BDF2 --------------------------------------------------------------

def heat_problem(maxX=25, delta=0.1):
    mesh = Mesh(L=1.0, T=1.0, maxX=maxX, maxT=11)
    u0 = np.cos(np.pi * mesh.xmesh)

    def rhs(t, u):
        return laplacian_neumann(u, mesh.dx, delta)

    def jac(t, u):
        return np.zeros_like(u)

    return mesh, u0, rhs, jac


def test_stiff_heat_mode():
    mesh, u0, rhs, jac = heat_problem()
    traj = integrate_stiff_mol(rhs, jac, u0, (0, 1), diffusion=0.1, dx=mesh.dx, t_eval=mesh.tmesh)
    exact = np.exp(-0.1 * np.pi**2 * mesh.tmesh)[:, None] * u0
    assert np.max(np.abs(traj.y - exact)) < 1e-3


def test_stiff_zero_rhs_constant():
    traj = integrate_stiff_mol(lambda t, y: np.zeros_like(y), lambda t, y: np.zeros_like(y),
                               [2.0, 3.0, 4.0], (0, 5), t_eval=np.linspace(0, 5, 6))
    assert np.all(traj.y == np.array([2.0, 3.0, 4.0]))


def test_stiff_scalar_relay():
    eps = 1e-4
    t = np.linspace(0, 2, 201)
    traj = integrate_stiff_mol(lambda s, y: -sign_eps(eps, y), lambda s, y: -sign_eps_slope(eps, y),
                               [1.0], (0, 2), t_eval=t)
    assert np.max(np.abs(traj.y[:, 0] - np.maximum(1 - t, 0.0))) < 1e-3


def test_stiff_unconditionally_stable_on_diffusion():
    mesh, u0, rhs, jac = heat_problem()
    T = 10.0
    t = np.linspace(0, T, 41)
    traj = integrate_stiff_mol(rhs, jac, u0, (0, T), SolverTolerances(1e-6, 1e-6, max_step=T),
                               diffusion=0.1, dx=mesh.dx, t_eval=t)
    amp = (traj.y @ u0) / (u0 @ u0)
    assert np.all(np.isfinite(traj.y))
    assert np.all(amp > 0) and np.all(np.diff(amp) < 0)


def test_stiff_large_diffusion_no_blow_up():
    mesh, u0, _, jac = heat_problem()
    delta = 50.0  # delta/dx^2 ~ 3e4

    def rhs(t, u):
        return laplacian_neumann(u, mesh.dx, delta)

    rough = u0 + np.cos(24 * np.pi * mesh.xmesh)
    t = np.linspace(0, 1, 11)
    traj = integrate_stiff_mol(rhs, jac, rough, (0, 1), SolverTolerances(1e-6, 1e-6, max_step=1.0),
                               diffusion=delta, dx=mesh.dx, t_eval=t)
    assert np.all(np.isfinite(traj.y))
    wts = trapezoid_weights(mesh.maxX, mesh.dx)
    assert np.max(np.abs(traj.y[-1] - wts @ rough / wts.sum())) < 1e-5


def test_stiff_dense_output_matches_forced_stops():
    mesh, u0, rhs, jac = heat_problem()
    tol = SolverTolerances(1e-6, 1e-6)
    t = np.linspace(0, 1, 17)
    dense = integrate_stiff_mol(rhs, jac, u0, (0, 1), tol, diffusion=0.1, dx=mesh.dx, t_eval=t)
    stopped = integrate_stiff_mol(rhs, jac, u0, (0, 1), tol, diffusion=0.1, dx=mesh.dx, t_eval=t, tstops=t)
    assert np.max(np.abs(dense.y - stopped.y)) < 10 * tol.abs_tol


def test_stiff_newton_failure_raises():
    with pytest.raises(IntegrationError):
        integrate_stiff_mol(lambda t, y: -y**3, lambda t, y: np.zeros_like(y), [50.0], (0, 1),
                            first_step=0.5, max_newton=1, max_retries=2)
