"""Time-ordered phase-space trajectories with controls and provenance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

__all__ = ["Trajectory"]


@dataclass
class Trajectory:
    """T steps of (q, p) plus control inputs and generation metadata.

    ``qs``/``ps`` are (T, d); ``us`` is (T, m) with m possibly 0. ``extras``
    carries generator-specific diagnostics (energy series, expectation
    values, ...) and is preserved by file round trips.
    """

    qs: np.ndarray
    ps: np.ndarray
    us: np.ndarray
    dt: float
    system_id: str = "sys"
    generator: str = "unknown"
    params: dict = field(default_factory=dict)
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.qs = np.asarray(self.qs, dtype=np.float64)
        self.ps = np.asarray(self.ps, dtype=np.float64)
        self.us = np.asarray(self.us, dtype=np.float64)
        if self.qs.ndim != 2 or self.ps.ndim != 2:
            raise ShapeError("qs/ps must be (T, d) arrays")
        if self.qs.shape != self.ps.shape:
            raise ShapeError(f"qs {self.qs.shape} vs ps {self.ps.shape}")
        if self.us.size == 0:
            self.us = np.zeros((self.qs.shape[0], 0))
        if self.us.shape[0] != self.qs.shape[0]:
            raise ShapeError("us must have one row per step")
        if not (np.all(np.isfinite(self.qs)) and np.all(np.isfinite(self.ps)) and np.all(np.isfinite(self.us))):
            raise ShapeError("trajectory contains non-finite values")

    @property
    def T(self) -> int:
        return self.qs.shape[0]

    @property
    def d(self) -> int:
        return self.qs.shape[1]

    @property
    def m(self) -> int:
        return self.us.shape[1]

    def states(self) -> np.ndarray:
        """(T, 2d) array [q, p]."""
        return np.concatenate([self.qs, self.ps], axis=1)

    def slice(self, start: int, stop: int) -> "Trajectory":
        return Trajectory(self.qs[start:stop], self.ps[start:stop], self.us[start:stop],
                          self.dt, self.system_id, self.generator, dict(self.params), self.seed)
