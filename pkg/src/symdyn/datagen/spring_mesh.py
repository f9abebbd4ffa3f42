"""Damped spring-mesh simulator on a rectangular lattice.

Point masses sit on an nx x ny grid with unit spacing, joined to their
4-neighbors by Hooke springs (rest length = spacing). Forces follow spring
extension/compression along the current edge direction; a viscous term
-gamma * v drains energy when gamma > 0. Integration is symplectic Euler:

    p_{n+1} = p_n + (F_spring(q_n) - gamma * p_n / m) * dt
    q_{n+1} = q_n + p_{n+1} / m * dt

so the conservative case (gamma = 0) shows bounded energy oscillation with
no secular drift. The top row of nodes can be pinned to anchor the mesh.

State layout: q and p are per-node (x, y) displacements from rest and the
matching momenta, flattened row-major into length 2*nx*ny vectors.
"""

from __future__ import annotations

import numpy as np

from ..errors import GenerationError
from ..trajectory import Trajectory
from .tables import SpringMeshSystem, system_to_dict

__all__ = ["mesh_edges", "mesh_energy", "gen_spring_mesh"]


def mesh_edges(nx: int, ny: int) -> np.ndarray:
    """(E, 2) node-index pairs of the 4-neighbor lattice (no diagonals)."""
    def node(ix, iy):
        return iy * nx + ix

    edges = []
    for iy in range(ny):
        for ix in range(nx):
            if ix + 1 < nx:
                edges.append((node(ix, iy), node(ix + 1, iy)))
            if iy + 1 < ny:
                edges.append((node(ix, iy), node(ix, iy + 1)))
    return np.asarray(edges, dtype=np.intp)


def _rest_positions(nx: int, ny: int) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(nx, dtype=np.float64), np.arange(ny, dtype=np.float64))
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def _spring_forces(pos: np.ndarray, edges: np.ndarray, k: float, rest_len: float = 1.0) -> np.ndarray:
    rvec = pos[edges[:, 1]] - pos[edges[:, 0]]
    length = np.linalg.norm(rvec, axis=1)
    if np.any(length < 1e-9):
        raise GenerationError("spring-mesh degenerate: two nodes coincide")
    f = (k * (length - rest_len) / length)[:, None] * rvec
    forces = np.zeros_like(pos)
    np.add.at(forces, edges[:, 0], f)
    np.add.at(forces, edges[:, 1], -f)
    return forces


def mesh_energy(qs: np.ndarray, ps: np.ndarray, system: SpringMeshSystem) -> np.ndarray:
    """Total energy along a trajectory of flattened displacement states."""
    n = system.nx * system.ny
    rest = _rest_positions(system.nx, system.ny)
    edges = mesh_edges(system.nx, system.ny)
    qs = np.asarray(qs).reshape(len(qs), n, 2)
    ps = np.asarray(ps).reshape(len(ps), n, 2)
    kinetic = (ps ** 2).sum(axis=(1, 2)) / (2.0 * system.mass)
    pos = rest[None, :, :] + qs
    rvec = pos[:, edges[:, 1]] - pos[:, edges[:, 0]]
    length = np.linalg.norm(rvec, axis=2)
    potential = 0.5 * system.k_spring * ((length - 1.0) ** 2).sum(axis=1)
    return kinetic + potential


def gen_spring_mesh(system: SpringMeshSystem, seed: int, system_id: str = "mesh") -> Trajectory:
    rng = np.random.default_rng(seed)
    n = system.nx * system.ny
    rest = _rest_positions(system.nx, system.ny)
    edges = mesh_edges(system.nx, system.ny)

    fixed = np.zeros(n, dtype=bool)
    if system.fixed_top and system.ny > 1:
        fixed[(system.ny - 1) * system.nx:] = True

    u = rng.uniform(-system.init_scale, system.init_scale, size=(n, 2))
    u[fixed] = 0.0
    p = np.zeros((n, 2))

    qs = np.empty((system.steps, 2 * n))
    ps = np.empty((system.steps, 2 * n))
    with np.errstate(over="ignore", invalid="ignore"):  # blow-ups surface as GenerationError
        _integrate(system, rest, edges, fixed, u, p, qs, ps)
    energy = mesh_energy(qs, ps, system)
    e0 = energy[0]
    if e0 > 0 and energy.max() > 10.0 * e0:
        raise GenerationError(
            f"spring-mesh energy blow-up x{energy.max() / e0:.1f} (dt={system.dt} unstable)")
    return Trajectory(
        qs=qs, ps=ps, us=np.zeros((system.steps, 0)), dt=system.dt,
        system_id=system_id, generator="spring_mesh",
        params=system_to_dict(system), seed=seed,
        extras={"energy": energy.tolist()},
    )


def _integrate(system, rest, edges, fixed, u, p, qs, ps):
    for t in range(system.steps):
        qs[t] = u.ravel()
        ps[t] = p.ravel()
        force = _spring_forces(rest + u, edges, system.k_spring) - (system.gamma / system.mass) * p
        p = p + force * system.dt
        p[fixed] = 0.0
        u = u + (p / system.mass) * system.dt
        u[fixed] = 0.0
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(p)):
            raise GenerationError(f"spring-mesh diverged at step {t} (dt={system.dt} too large)")
