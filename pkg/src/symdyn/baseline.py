"""Naive MLP next-step baseline at a matched parameter budget.

Takes the same flattened context window the attention decoder sees and
regresses the next state directly, with no structural prior and no
per-system adaptation. Serves as the floor any structured model must beat.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import DIVERGENCE_THRESHOLD
from .errors import NonFiniteError, ShapeError, TrainingDiverged
from .optim import Adam
from .trajectory import Trajectory

__all__ = ["MLPBaseline", "hidden_for_budget", "train_mlp_baseline", "mlp_rollout"]


class MLPBaseline:
    """Two hidden tanh layers: flat window -> h -> h -> next state."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB5]))
        self.in_dim, self.hidden, self.out_dim = in_dim, hidden, out_dim

        def mat(rows, cols):
            return ad.parameter(rng.normal(0.0, 1.0 / np.sqrt(rows), (rows, cols)))

        self.w1 = mat(in_dim, hidden)
        self.b1 = ad.parameter(np.zeros(hidden))
        self.w2 = mat(hidden, hidden)
        self.b2 = ad.parameter(np.zeros(hidden))
        self.w3 = mat(hidden, out_dim)
        self.b3 = ad.parameter(np.zeros(out_dim))

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def n_params(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def forward(self, x: np.ndarray) -> Tensor:
        h1 = ad.tanh(ad.constant(x) @ self.w1 + self.b1)
        h2 = ad.tanh(h1 @ self.w2 + self.b2)
        return h2 @ self.w3 + self.b3

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(np.atleast_2d(x)).data


def hidden_for_budget(in_dim: int, out_dim: int, target_params: int) -> int:
    """Hidden width whose total parameter count best approaches the target."""
    best_h, best_gap = 4, None
    for h in range(4, 4097):
        n = in_dim * h + h + h * h + h + h * out_dim + out_dim
        gap = abs(n - target_params)
        if best_gap is None or gap < best_gap:
            best_h, best_gap = h, gap
        if n > target_params and gap > best_gap:
            break
    return best_h


def _windows_flat(traj: Trajectory, c: int) -> tuple[np.ndarray, np.ndarray]:
    T = traj.T
    if T < c + 1:
        raise ShapeError(f"trajectory too short: T={T} < c+1={c + 1}")
    feats = np.concatenate([traj.qs, traj.ps, np.full((T, 1), traj.dt), traj.us], axis=1)
    t_index = np.arange(c - 1, T - 1)
    idx = t_index[:, None] + np.arange(-c + 1, 1)[None, :]
    X = feats[idx].reshape(len(t_index), -1)
    Y = np.concatenate([traj.qs[t_index + 1], traj.ps[t_index + 1]], axis=1)
    return X, Y


def train_mlp_baseline(corpus: list[Trajectory], c: int, hidden: int,
                       epochs: int = 60, lr: float = 3e-3, batch: int = 256,
                       seed: int = 0, val_frac: float = 0.2) -> tuple[MLPBaseline, dict]:
    """Pooled supervised regression with early stopping on held-out systems."""
    if not corpus:
        raise ShapeError("empty corpus")
    d, m = corpus[0].d, corpus[0].m
    in_dim = c * (2 * d + m + 1)
    model = MLPBaseline(in_dim, hidden, 2 * d, seed=seed)

    n_val = max(1, int(round(val_frac * len(corpus)))) if len(corpus) > 1 else 0
    train_trajs = corpus[:len(corpus) - n_val] if n_val else corpus
    val_trajs = corpus[len(corpus) - n_val:] if n_val else []
    Xtr = np.concatenate([_windows_flat(t, c)[0] for t in train_trajs])
    Ytr = np.concatenate([_windows_flat(t, c)[1] for t in train_trajs])
    if val_trajs:
        Xv = np.concatenate([_windows_flat(t, c)[0] for t in val_trajs])
        Yv = np.concatenate([_windows_flat(t, c)[1] for t in val_trajs])

    opt = Adam(model.parameters(), lr=lr, kind="adam")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB6]))
    best = [t.data.copy() for t in model.parameters()]
    best_val = np.inf
    history = {"train": [], "val": []}
    for _ in range(epochs):
        order = rng.permutation(len(Xtr))
        losses = []
        for s in range(0, len(order), batch):
            sel = order[s:s + batch]
            opt.zero_grad()
            loss = ad.mse(model.forward(Xtr[sel]), Ytr[sel]) * (2.0 * d)
            value = loss.item()
            if not np.isfinite(value) or value > DIVERGENCE_THRESHOLD:
                raise TrainingDiverged(f"baseline loss diverged: {value}")
            losses.append(value)
            loss.backward()
            opt.step()
        history["train"].append(float(np.mean(losses)))
        if val_trajs:
            val = ad.mse(model.forward(Xv), Yv).item() * (2.0 * d)
        else:
            val = history["train"][-1]
        history["val"].append(float(val))
        if val < best_val:
            best_val = val
            best = [t.data.copy() for t in model.parameters()]
    for t, data in zip(model.parameters(), best):
        t.data = data
    history["best_val"] = float(best_val)
    return model, history


def mlp_rollout(model: MLPBaseline, seed_window: Trajectory, controls: np.ndarray | None,
                horizon: int, c: int) -> Trajectory:
    """Autoregressive rollout with the same windowing as the attention decoder."""
    d, m = seed_window.d, seed_window.m
    dt = seed_window.dt
    qs = list(seed_window.qs)
    ps = list(seed_window.ps)
    us = list(seed_window.us)
    pq, pp, pu = [], [], []
    for k in range(horizon):
        feats = np.concatenate([np.stack(qs[-c:]), np.stack(ps[-c:]),
                                np.full((c, 1), dt),
                                np.stack(us[-c:]) if m else np.zeros((c, 0))], axis=1)
        try:
            pred = model.predict(feats.reshape(1, -1))[0]
        except NonFiniteError:
            break
        if not np.all(np.isfinite(pred)):
            break
        qn, pn = pred[:d], pred[d:]
        un = controls[k] if m else np.zeros(0)
        qs.append(qn); ps.append(pn); us.append(un)
        pq.append(qn); pp.append(pn); pu.append(un)
    n = len(pq)
    return Trajectory(np.asarray(pq).reshape(n, d), np.asarray(pp).reshape(n, d),
                      np.asarray(pu).reshape(n, m), dt, seed_window.system_id, "mlp_rollout")
