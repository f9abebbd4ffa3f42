"""Adaptive-moment optimizers (Adam and its decoupled-weight-decay variant).

The update is exposed both as a pure function (`adaptive_step`) and as a
stateful class. Parameter data is replaced, never mutated in place, so
autodiff closures recorded before a step stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import NonFiniteError, ShapeError

__all__ = ["AdamState", "adaptive_step", "Adam"]


@dataclass
class AdamState:
    """First/second moment accumulators for one flat list of parameters."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: list[Tensor]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adaptive_step(
    values: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decoupled: bool = True,
) -> list[np.ndarray]:
    """One bias-corrected adaptive-moment update; mutates `state`, returns new values.

    With ``decoupled=True`` the weight decay is applied directly to the
    parameters (AdamW); otherwise it is folded into the gradient.
    """
    if len(values) != len(grads) or len(values) != len(state.m):
        raise ShapeError("params/grads/state length mismatch")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    out = []
    for i, (val, g) in enumerate(zip(values, grads)):
        if g.shape != val.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {val.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient passed to optimizer")
        if weight_decay != 0.0 and not decoupled:
            g = g + weight_decay * val
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        new = val - lr * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay != 0.0 and decoupled:
            new = new - lr * weight_decay * val
        out.append(new)
    return out


class Adam:
    """Stateful wrapper binding `adaptive_step` to a list of Tensors.

    ``kind="adam"`` is the classic update, ``kind="adamw"`` decouples the
    weight decay.
    """

    def __init__(self, params: list[Tensor], lr: float, kind: str = "adam",
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if kind not in ("adam", "adamw"):
            raise ValueError(f"unknown optimizer kind: {kind}")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decoupled = kind == "adamw"
        self.state = AdamState.zeros_like(self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new_values = adaptive_step(
            [p.data for p in self.params], grads, self.state, self.lr,
            self.beta1, self.beta2, self.eps, self.weight_decay, self.decoupled,
        )
        for p, val in zip(self.params, new_values):
            p.data = val
