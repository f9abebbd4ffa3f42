"""Harmonic-oscillator trajectories from the closed-form rotation solution.

For mass m and stiffness k (omega = sqrt(k/m)) the phase-space state
evolves by an exact rotation-like matrix:

    [x(t)]   [ cos(w t)         sin(w t)/(m w) ] [x0]
    [p(t)] = [ -m w sin(w t)    cos(w t)       ] [p0]

Each sample is evaluated directly at t = j*dt, so there is no integration
error and the energy p^2/(2m) + k x^2/2 is constant to round-off.
"""

from __future__ import annotations

import numpy as np

from ..trajectory import Trajectory
from .tables import OscillatorSystem, system_to_dict

__all__ = ["oscillator_state", "gen_oscillator", "oscillator_energy"]


def oscillator_state(system: OscillatorSystem, t: float) -> tuple[float, float]:
    """Exact (x, p) at time t."""
    if system.m <= 0 or system.k <= 0:
        raise ValueError("oscillator needs m > 0 and k > 0")
    w = system.omega
    p0 = system.m * system.v0
    c, s = np.cos(w * t), np.sin(w * t)
    x = c * system.x0 + s / (system.m * w) * p0
    p = -system.m * w * s * system.x0 + c * p0
    return float(x), float(p)


def gen_oscillator(system: OscillatorSystem, system_id: str = "osc") -> Trajectory:
    w = system.omega
    if system.m <= 0 or system.k <= 0:
        raise ValueError("oscillator needs m > 0 and k > 0")
    t = np.arange(system.steps) * system.dt
    p0 = system.m * system.v0
    c, s = np.cos(w * t), np.sin(w * t)
    x = c * system.x0 + s / (system.m * w) * p0
    p = -system.m * w * s * system.x0 + c * p0
    return Trajectory(
        qs=x[:, None], ps=p[:, None], us=np.zeros((system.steps, 0)),
        dt=system.dt, system_id=system_id, generator="oscillator",
        params=system_to_dict(system),
    )


def oscillator_energy(qs: np.ndarray, ps: np.ndarray, m: float, k: float) -> np.ndarray:
    """Energy series for states given as (T, 1) arrays (or (T,))."""
    x = np.asarray(qs).reshape(len(qs), -1)[:, 0]
    p = np.asarray(ps).reshape(len(ps), -1)[:, 0]
    return p * p / (2.0 * m) + 0.5 * k * x * x
