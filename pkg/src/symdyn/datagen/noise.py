"""Additive Gaussian observation noise for benchmark robustness studies."""

from __future__ import annotations

import numpy as np

from ..trajectory import Trajectory

__all__ = ["inject_noise"]


def inject_noise(traj: Trajectory, sigma: float, seed: int = 0) -> Trajectory:
    """i.i.d. N(0, sigma^2) on the q/p channels; controls pass through untouched."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return Trajectory(traj.qs.copy(), traj.ps.copy(), traj.us.copy(), traj.dt,
                          traj.system_id, traj.generator, dict(traj.params), traj.seed,
                          dict(traj.extras))
    rng = np.random.default_rng(seed)
    qs = traj.qs + rng.normal(0.0, sigma, traj.qs.shape)
    ps = traj.ps + rng.normal(0.0, sigma, traj.ps.shape)
    return Trajectory(qs, ps, traj.us.copy(), traj.dt, traj.system_id,
                      traj.generator, dict(traj.params), traj.seed, dict(traj.extras))
