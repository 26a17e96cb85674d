"""Named reference scenarios fig1 to fig6 for the relay-controlled cable."""

from __future__ import annotations

import numpy as np

from .coupled import Scenario, TargetTrajectory
from .model import HHParameters
from .numerics.grid import Mesh

PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6")

# Frequency of the periodic target of fig3, read literally as 4/pi rad/ms.
FIG3_OMEGA = 4.0 / np.pi
REDUCED_GK = 3.8229


def fig6_initial_potential(x):
    return 0.5 * np.sin(4.0 * np.pi * np.asarray(x)) + 0.6


def preset(name: str, *, T: float = 100.0, maxX: int = 25, maxT: int = 200,
           fig3_omega: float = FIG3_OMEGA, **overrides) -> Scenario:
    """Build a named scenario; ``overrides`` patch ``HHParameters`` fields."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")
    mesh = Mesh(L=1.0, T=T, maxX=maxX, maxT=maxT)
    v0 = 4.82
    target = TargetTrajectory.constant(0.0)
    x_fixed = 0.0
    settings: dict = {}
    if name == "fig1":
        settings = dict(rho=0.0)
    elif name == "fig2":
        settings = dict(rho=20.0)
    elif name == "fig3":
        settings = dict(rho=20.0)
        target = TargetTrajectory.sinusoid(0.5, fig3_omega, 0.6)
    elif name == "fig4":
        settings = dict(rho=0.0, g_K=REDUCED_GK)
    elif name == "fig5":
        settings = dict(rho=20.0, g_K=REDUCED_GK)
    elif name == "fig6":
        settings = dict(rho=50.0, delta=50.0, g_K=36.0)
        v0 = fig6_initial_potential
        x_fixed = 0.5
    settings.update(overrides)
    params = HHParameters(**settings)
    return Scenario(params=params, mesh=mesh, v0=v0, n0=0.45, m0=0.03, h0=0.397,
                    target=target, name=name, x_fixed=x_fixed)
