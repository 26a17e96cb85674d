import numpy as np
import pytest
from scipy.optimize import brentq

from hhsliding import model
from hhsliding.coupled import (CONVERGED, MAX_ITERATIONS, TIME_BUDGET, Scenario, SimulationError,
                               TargetTrajectory, run_reduced, run_simulation)
from hhsliding.model import GatingKind, HHParameters, ReducedModel
from hhsliding.numerics.grid import Mesh
from hhsliding.presets import PRESETS, preset
from hhsliding.sliding import comparison_q, default_band, detect_sliding


def const(value):
    return lambda u: np.full(np.shape(u), float(value))


def reduced(f2=0.5, w_M=0.5):
    return ReducedModel(f1=const(1.0), f2=const(f2), h1=const(1.0), h2=const(0.5), a=1.0, w_M=w_M)


# --- target -----------------------------------------------------------------

def test_target_sup_norms():
    t = TargetTrajectory.sinusoid(0.5, 4 / np.pi, 0.6)
    assert t.sup_dt() == pytest.approx(2 / np.pi)
    assert t.sup_dxx() == 0.0
    assert t.sup() == pytest.approx(1.1)
    c = TargetTrajectory.constant(-2.0)
    assert (c.sup_dt(), c.sup_dxx(), c.sup()) == (0.0, 0.0, 2.0)


def test_target_space_profile_uses_mirror_second_difference():
    x = np.linspace(0, 1, 11)
    t = TargetTrajectory.space(lambda s: s**2)
    # interior rows give 2; the mirrored ghost at x=1 gives 2 (0.81 - 1) / 0.01 = -38
    assert t.sup_dxx(x) == pytest.approx(38.0, rel=1e-12)
    assert t.sup(x) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        t.sup(None)


def test_target_rejects_unknown_kind():
    with pytest.raises(ValueError):
        TargetTrajectory("ramp")


def test_scenario_rejects_gating_outside_unit_interval():
    with pytest.raises(ValueError):
        Scenario(HHParameters(), Mesh(), n0=1.5)


# --- reduced model ----------------------------------------------------------

def test_reduced_linear_decay():
    mesh = Mesh(L=1.0, T=3.0, maxX=9, maxT=61)
    res = run_reduced(reduced(f2=0.0), mesh, v0=2.0, w0=0.2)
    assert res.converged
    exact = 2.0 * np.exp(-mesh.tmesh)[:, None]
    assert np.max(np.abs(res.v - exact)) < 1e-3


@pytest.fixture(scope="module")
def bound_case():
    mesh = Mesh(L=1.0, T=2.0, maxX=11, maxT=201)
    return run_reduced(reduced(), mesh, v0=1.0, w0=0.5, rho=3.0, epsilon=1e-4, delta=0.1)


def test_reduced_sliding_bound_onset(bound_case):
    onset = detect_sliding(bound_case, band=2e-4 + 5e-3)
    assert onset is not None and onset <= 1.05 * (2.0 / 3.0)


def test_reduced_sliding_bound_envelope(bound_case):
    band = default_band(1e-4, 1e-3)
    q = comparison_q(bound_case.tmesh, 3.0, 1.5, 1.0)
    assert np.all(np.abs(bound_case.v) <= q[:, None] + band)


def test_reduced_gating_stays_below_w_M():
    mesh = Mesh(L=1.0, T=5.0, maxX=7, maxT=51)
    res = run_reduced(reduced(), mesh, v0=0.3, w0=0.5)
    assert np.all(res.w <= 0.5 + 1e-9)


# --- full system ------------------------------------------------------------

def resting_equilibrium(p):
    def balance(v):
        n, m, h = (model.gating_steady_state(k, v) for k in GatingKind)
        return -model.f1(n, m, h, p) * v + model.f2(n, m, h, p)

    return brentq(balance, -5.0, 5.0, xtol=1e-14)


def test_equilibrium_is_a_fixed_point():
    p = HHParameters()
    v_eq = resting_equilibrium(p)
    n0, m0, h0 = (model.gating_steady_state(k, v_eq) for k in GatingKind)
    s = Scenario(p, Mesh(T=10.0, maxX=5, maxT=21), v0=v_eq, n0=n0, m0=m0, h0=h0)
    res = run_simulation(s)
    assert res.converged
    assert np.max(np.abs(res.v - v_eq)) < 1e-4
    assert np.max(np.abs(res.n - n0)) < 1e-6


def short(name, **kw):
    return preset(name, T=10.0, maxX=9, maxT=41, **kw)


def test_deterministic():
    a = run_simulation(short("fig2"))
    b = run_simulation(short("fig2"))
    for key in ("v", "n", "m", "h"):
        assert np.array_equal(a.fields[key], b.fields[key])
    assert a.residual_trace == b.residual_trace


@pytest.mark.parametrize("name", PRESETS)
def test_short_presets_keep_gating_in_unit_interval(name):
    res = run_simulation(short(name))
    for key in ("n", "m", "h"):
        f = np.asarray(res.fields[key])
        assert f.min() >= -1e-9 and f.max() <= 1 + 1e-9
    assert len(res.residual_trace) == res.iterations
    if res.converged:
        assert res.residual_trace[-1] < 1e-3


@pytest.mark.parametrize("name", ["fig1", "fig2", "fig3"])
def test_translation_invariance(name):
    v = np.asarray(run_simulation(short(name)).v)
    assert np.max(v.max(axis=1) - v.min(axis=1)) < 1e-4


def test_stop_reason_max_iterations():
    res = run_simulation(short("fig1"), n_iter_max=1)
    assert res.stop_reason == MAX_ITERATIONS
    assert res.iterations == 1


def test_stop_reason_time_budget():
    res = run_simulation(short("fig1"), time_budget=0.0)
    assert res.stop_reason == TIME_BUDGET
    assert res.iterations == 1


def test_converged_stop_reason():
    assert run_simulation(short("fig2")).stop_reason == CONVERGED


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_inner_failure_reports_iteration():
    # an absurd leak reversal potential overflows the first potential solve
    s = short("fig1", V_l=1e305, g_l=1e3)
    with pytest.raises(SimulationError) as info:
        run_simulation(s)
    assert info.value.iteration == 1
    assert "iteration 1" in str(info.value)
