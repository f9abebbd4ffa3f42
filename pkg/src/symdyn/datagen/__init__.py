"""Reference simulators: spring mesh, harmonic oscillator, monitored quantum mode."""

from .noise import inject_noise
from .oscillator import gen_oscillator, oscillator_energy, oscillator_state
from .quantum import gen_quantum_sme, simulate_sme
from .spring_mesh import gen_spring_mesh, mesh_energy
from .tables import (
    TABLE_IDS,
    OscillatorSystem,
    QuantumSystem,
    SpringMeshSystem,
    sample_system_params,
    system_to_dict,
)

__all__ = [
    "TABLE_IDS",
    "OscillatorSystem",
    "QuantumSystem",
    "SpringMeshSystem",
    "gen_oscillator",
    "gen_quantum_sme",
    "gen_spring_mesh",
    "inject_noise",
    "mesh_energy",
    "oscillator_energy",
    "oscillator_state",
    "sample_system_params",
    "simulate_sme",
    "system_to_dict",
]
