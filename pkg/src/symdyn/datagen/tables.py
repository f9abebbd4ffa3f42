"""Parameter tables for the reference simulators and deterministic sampling.

Each table id names a published parameter regime:

* ``2a`` / ``2b``  -- damped spring mesh, in-distribution / shifted
* ``3a`` / ``3b``  -- monitored open quantum oscillator, in-dist / shifted
* ``8in`` / ``8out`` -- conservative harmonic oscillator, in-dist / shifted

Every sampled field is drawn uniformly from its stated range, in a fixed
order, from a seed-derived substream, so one (table, count, seed) triple
always yields the same list of system specs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

__all__ = [
    "SpringMeshSystem",
    "OscillatorSystem",
    "QuantumSystem",
    "TABLE_IDS",
    "sample_system_params",
]


@dataclass
class SpringMeshSystem:
    nx: int
    ny: int
    mass: float
    k_spring: float
    gamma: float
    dt: float
    steps: int
    init_scale: float
    fixed_top: bool = True

    @property
    def d(self) -> int:
        return 2 * self.nx * self.ny


@dataclass
class OscillatorSystem:
    m: float
    k: float
    x0: float
    v0: float
    dt: float = 0.01
    steps: int = 3000

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.k / self.m))


@dataclass
class QuantumSystem:
    fock_dim: int
    omega: float
    chi: float
    beta_cubic: float
    gamma: float
    n_th: float
    eta: float
    alpha0_re: float
    alpha0_im: float
    dt: float = 0.5
    steps: int = 600
    substeps: int = 200


# Uniform ranges, in sampling order.  The quantum bath rate and cubic drive
# have no published range; the defaults below keep the squeezing term below
# its instability threshold (gamma > 2*chi) at every sampled point.
_SPRING_RANGES = {
    "2a": dict(gamma=(0.1, 0.2), mass=(0.1, 2.0), k_spring=(0.001, 0.5),
               init_scale=(0.0, 0.6), dt=(0.001, 0.03)),
    "2b": dict(gamma=(0.01, 0.05), mass=(3.0, 5.0), k_spring=(1.0, 3.0),
               init_scale=(0.9, 2.5), dt=(0.1, 0.3)),
}
_QUANTUM_RANGES = {
    "3a": dict(omega=(0.5, 1.0), chi=(0.1, 0.4), n_th=(0.1, 0.5), eta=(0.7, 1.0),
               gamma=(1.0, 1.4), beta_cubic=(0.0, 0.02)),
    "3b": dict(omega=(0.1, 0.4), chi=(0.5, 0.8), n_th=(0.6, 0.7), eta=(0.4, 0.6),
               gamma=(1.8, 2.2), beta_cubic=(0.02, 0.05)),
}
_OSC_RANGES = {
    "8in": dict(m=(0.5, 1.0), k=(0.5, 4.0), x0=(-1.0, 1.0), v0=(-1.0, 1.0)),
    "8out": dict(m=(2.5, 3.0), k=(5.0, 6.0), x0=(1.0, 1.5), v0=(-1.5, -1.0)),
}
_OSC_STEPS = {"8in": 3000, "8out": 800}

TABLE_IDS = tuple(sorted([*_SPRING_RANGES, *_QUANTUM_RANGES, *_OSC_RANGES]))

SPRING_STEPS_DEFAULT = 2000
MESH_SIZE_DEFAULT = (3, 3)
QUANTUM_ALPHA0_MAG = (0.5, 1.5)
FOCK_DIM_DEFAULT = 20


def _u(rng: np.random.Generator, lo_hi) -> float:
    lo, hi = lo_hi
    return float(rng.uniform(lo, hi))


def sample_system_params(table_id: str, count: int, seed: int, *,
                         mesh_size: tuple[int, int] | None = None,
                         steps: int | None = None,
                         fock_dim: int = FOCK_DIM_DEFAULT):
    """Draw `count` system specs from the given table; deterministic per seed.

    Each system gets its own RNG substream so specs are independent of
    `count` prefix-wise: the first k systems of a larger draw match a
    smaller draw exactly.
    """
    if table_id not in TABLE_IDS:
        raise KeyError(f"unknown table id {table_id!r}; known: {TABLE_IDS}")
    streams = np.random.SeedSequence(seed).spawn(count)
    systems = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        if table_id in _SPRING_RANGES:
            r = _SPRING_RANGES[table_id]
            nx, ny = mesh_size or MESH_SIZE_DEFAULT
            systems.append(SpringMeshSystem(
                nx=nx, ny=ny,
                gamma=_u(rng, r["gamma"]), mass=_u(rng, r["mass"]),
                k_spring=_u(rng, r["k_spring"]), init_scale=_u(rng, r["init_scale"]),
                dt=_u(rng, r["dt"]), steps=steps or SPRING_STEPS_DEFAULT,
            ))
        elif table_id in _QUANTUM_RANGES:
            r = _QUANTUM_RANGES[table_id]
            omega = _u(rng, r["omega"])
            chi = _u(rng, r["chi"])
            n_th = _u(rng, r["n_th"])
            eta = _u(rng, r["eta"])
            gamma = _u(rng, r["gamma"])
            beta_cubic = _u(rng, r["beta_cubic"])
            mag = _u(rng, QUANTUM_ALPHA0_MAG)
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            systems.append(QuantumSystem(
                fock_dim=fock_dim, omega=omega, chi=chi, beta_cubic=beta_cubic,
                gamma=gamma, n_th=n_th, eta=eta,
                alpha0_re=mag * np.cos(phase), alpha0_im=mag * np.sin(phase),
                steps=steps or 600,
            ))
        else:
            r = _OSC_RANGES[table_id]
            systems.append(OscillatorSystem(
                m=_u(rng, r["m"]), k=_u(rng, r["k"]),
                x0=_u(rng, r["x0"]), v0=_u(rng, r["v0"]),
                steps=steps or _OSC_STEPS[table_id],
            ))
    return systems


def system_to_dict(system) -> dict:
    d = asdict(system)
    d["kind"] = type(system).__name__
    return d
