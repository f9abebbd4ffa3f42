"""Symplectic shear layers with exact inverses and analytic Jacobians.

A shear sub-layer moves exactly one canonical coordinate by a function of
the other, scaled by the time step:

    up :  q <- q + alpha(p) * dt      (p untouched)
    low:  p <- p + beta(q)  * dt      (q untouched)

Its Jacobian is block-triangular with identity diagonal blocks, e.g. for a
"low" layer ``[[I, 0], [d(beta)/dq * dt, I]]``. Such a map is symplectic iff
the cross block is symmetric, which is enforced structurally here:

* linear drives store only the upper triangle of their weight matrix, so the
  materialized matrix equals its transpose bit-for-bit;
* activation drives are ``a * sigma(x)`` with a diagonal scale, whose
  Jacobian ``diag(a * sigma'(x))`` is symmetric for any input.

Compositions of shears therefore stay symplectic at any depth, and each
shear is invertible in closed form by subtracting the same drive.

Layer code is dual-use: it runs on plain ndarrays (inference, Jacobians)
and on autodiff Tensors (training); both paths execute the same formulas.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

__all__ = [
    "PhasePoint",
    "ShearLayer",
    "SympStack",
    "la_stack",
    "symplectic_form",
]


def symplectic_form(d: int) -> np.ndarray:
    """The canonical 2d x 2d block matrix [[0, I], [-I, 0]]."""
    omega = np.zeros((2 * d, 2 * d))
    omega[:d, d:] = np.eye(d)
    omega[d:, :d] = -np.eye(d)
    return omega


@dataclass
class PhasePoint:
    """Canonical coordinates plus the step size used to advance them."""

    q: np.ndarray
    p: np.ndarray
    dt: float

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.q.shape != self.p.shape:
            raise ShapeError(f"q shape {self.q.shape} != p shape {self.p.shape}")

    @property
    def d(self) -> int:
        return self.q.shape[-1]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p], axis=-1)


def _tri_index(d: int) -> np.ndarray:
    """(d, d) gather map sending both (i, j) and (j, i) to one triangle slot."""
    idx = np.zeros((d, d), dtype=np.intp)
    k = 0
    for i in range(d):
        for j in range(i, d):
            idx[i, j] = k
            idx[j, i] = k
            k += 1
    return idx


def _sigma(x, fn: str):
    if fn == "tanh":
        return x.tanh() if isinstance(x, Tensor) else np.tanh(x)
    if fn == "sigmoid":
        return x.sigmoid() if isinstance(x, Tensor) else 1.0 / (1.0 + np.exp(-x))
    raise ValueError(f"unknown activation: {fn}")


def _sigma_prime(x: np.ndarray, fn: str) -> np.ndarray:
    if fn == "tanh":
        y = np.tanh(x)
        return 1.0 - y * y
    y = 1.0 / (1.0 + np.exp(-x))
    return y * (1.0 - y)


class ShearLayer:
    """One up/low shear with a linear or activation drive."""

    def __init__(self, kind: str, fn: str, d: int, rng: np.random.Generator | None = None,
                 weight_std: float | None = None, act_scale: float = 0.1):
        if kind not in ("up", "low"):
            raise ValueError(f"kind must be 'up' or 'low', got {kind!r}")
        if fn not in ("linear", "tanh", "sigmoid"):
            raise ValueError(f"fn must be linear/tanh/sigmoid, got {fn!r}")
        self.kind = kind
        self.fn = fn
        self.d = d
        rng = rng or np.random.default_rng(0)
        if fn == "linear":
            std = weight_std if weight_std is not None else np.sqrt(0.01 / d)
            n_tri = d * (d + 1) // 2
            self.tri = ad.parameter(rng.normal(0.0, std, n_tri))
            self.bias = ad.parameter(np.zeros(d))
            self._sym_idx = _tri_index(d)
        else:
            self.scale = ad.parameter(np.full(d, act_scale))

    # -- parameters ------------------------------------------------------
    def parameters(self) -> list[tuple[str, Tensor]]:
        if self.fn == "linear":
            return [("tri", self.tri), ("bias", self.bias)]
        return [("scale", self.scale)]

    def weight_matrix(self) -> np.ndarray:
        """Materialized symmetric weight matrix (linear drives only)."""
        return self.tri.data[self._sym_idx]

    # -- drive -------------------------------------------------------------
    def drive(self, x, drop=None):
        """alpha/beta evaluated at x; x is (B, d) Tensor or (..., d) ndarray."""
        if self.fn == "linear":
            tri, bias = self.tri, self.bias
            if drop is not None:
                rng, rate = drop
                tri = tri * ad.dropout_mask(rng, tri.shape, rate)
            if isinstance(x, Tensor):
                return x @ tri[self._sym_idx] + bias
            return x @ tri.data[self._sym_idx] + bias.data
        scale = self.scale
        if drop is not None:
            rng, rate = drop
            scale = scale * ad.dropout_mask(rng, scale.shape, rate)
        if isinstance(x, Tensor):
            return _sigma(x, self.fn) * scale
        return _sigma(x, self.fn) * scale.data

    # -- maps --------------------------------------------------------------
    def _check(self, q):
        dq = q.shape[-1]
        if dq != self.d:
            raise ShapeError(f"layer dimension {self.d} != input dimension {dq}")

    def forward(self, q, p, dt, drop=None):
        self._check(q)
        if self.kind == "up":
            return q + self.drive(p, drop) * dt, p
        return q, p + self.drive(q, drop) * dt

    def inverse(self, q, p, dt):
        """Exact inverse: subtract the same drive (the untouched side is unchanged)."""
        self._check(q)
        if self.kind == "up":
            return q - self.drive(p) * dt, p
        return q, p - self.drive(q) * dt

    def jac_cross(self, q: np.ndarray, p: np.ndarray, dt: float) -> np.ndarray:
        """The d x d cross block of the Jacobian (already scaled by dt)."""
        if self.fn == "linear":
            return self.weight_matrix() * dt
        x = p if self.kind == "up" else q
        return np.diag(self.scale.data * _sigma_prime(x, self.fn)) * dt

    def jacobian(self, q: np.ndarray, p: np.ndarray, dt: float) -> np.ndarray:
        d = self.d
        J = np.eye(2 * d)
        D = self.jac_cross(q, p, dt)
        if self.kind == "up":
            J[:d, d:] = D
        else:
            J[d:, :d] = D
        return J


class SympStack:
    """An ordered list of shear layers applied left to right."""

    def __init__(self, layers: list[ShearLayer], d: int):
        for lay in layers:
            if lay.d != d:
                raise ShapeError("all layers must share one phase dimension")
        if not layers:
            warnings.warn("empty symplectic stack acts as the identity map", stacklevel=2)
        self.layers = list(layers)
        self.d = d

    def __len__(self) -> int:
        return len(self.layers)

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, lay in enumerate(self.layers):
            for name, t in lay.parameters():
                out.append((f"layer{i:02d}.{name}", t))
        return out

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.parameters()]

    def clone(self) -> "SympStack":
        """Deep copy with fresh parameter Tensors (detached from any graph)."""
        new = SympStack.__new__(SympStack)
        new.d = self.d
        new.layers = []
        for lay in self.layers:
            c = ShearLayer.__new__(ShearLayer)
            c.kind, c.fn, c.d = lay.kind, lay.fn, lay.d
            if lay.fn == "linear":
                c.tri = ad.parameter(lay.tri.data.copy())
                c.bias = ad.parameter(lay.bias.data.copy())
                c._sym_idx = lay._sym_idx
            else:
                c.scale = ad.parameter(lay.scale.data.copy())
            new.layers.append(c)
        return new

    def load_from(self, other: "SympStack") -> None:
        for mine, theirs in zip(self.param_tensors(), other.param_tensors()):
            mine.data = theirs.data.copy()

    def forward(self, q, p, dt, drop=None):
        for lay in self.layers:
            q, p = lay.forward(q, p, dt, drop)
        return q, p

    def inverse(self, q, p, dt):
        for lay in reversed(self.layers):
            q, p = lay.inverse(q, p, dt)
        return q, p

    def forward_point(self, x: PhasePoint) -> PhasePoint:
        q, p = self.forward(x.q, x.p, x.dt)
        return PhasePoint(q, p, x.dt)

    def inverse_point(self, x: PhasePoint) -> PhasePoint:
        q, p = self.inverse(x.q, x.p, x.dt)
        return PhasePoint(q, p, x.dt)

    def jacobian(self, q: np.ndarray, p: np.ndarray, dt: float) -> np.ndarray:
        """Chained analytic Jacobian at (q, p); exactly unit determinant per factor."""
        J = np.eye(2 * self.d)
        for lay in self.layers:
            J = lay.jacobian(q, p, dt) @ J
            q, p = lay.forward(q, p, dt)
        return J


def la_stack(d: int, blocks: int = 3, activation: str = "tanh",
             rng: np.random.Generator | None = None, act_scale: float = 0.1) -> SympStack:
    """Stack of `blocks` linear/activation groups.

    Each block is [linear-up, linear-low, activation-up, activation-low];
    small near-identity initialization keeps early bidirectional training
    stable. With ``activation="linear"`` the nonlinear pair is dropped and
    each block is a pure linear shear pair -- the right inductive bias for
    exactly linear families, and safe from saturation far outside the
    training amplitudes.
    """
    rng = rng or np.random.default_rng(0)
    layers: list[ShearLayer] = []
    for _ in range(blocks):
        layers.append(ShearLayer("up", "linear", d, rng))
        layers.append(ShearLayer("low", "linear", d, rng))
        if activation != "linear":
            layers.append(ShearLayer("up", activation, d, rng, act_scale=act_scale))
            layers.append(ShearLayer("low", activation, d, rng, act_scale=act_scale))
    return SympStack(layers, d)
