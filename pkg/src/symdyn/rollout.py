"""Autoregressive multi-step inference: predictions feed back as inputs.

The rollout seeds a window buffer with c ground-truth steps, then repeats:
encode the buffered states with the frozen encoder, decode one step,
append the prediction, shift the buffer. Controls are exogenous and read
from the provided schedule; ground truth beyond the seed window is never
touched, so there is no teacher forcing at inference.
"""

from __future__ import annotations

import numpy as np

from .decoder import AdaptiveDecoder, DecoderLocalParams, SystemBatch, inner_adapt_decoder
from .encoder import SymplecticEncoder
from .errors import NonFiniteError, ShapeError
from .trajectory import Trajectory

__all__ = [
    "rollout",
    "evaluate_rollout",
    "persistence_rollout",
    "adapt_to_system",
]


def rollout(encoder: SymplecticEncoder, decoder: AdaptiveDecoder,
            zeta: DecoderLocalParams, seed_window: Trajectory,
            controls: np.ndarray | None, horizon: int) -> tuple[Trajectory, dict]:
    """Predict `horizon` steps from a c-step ground-truth seed window.

    ``controls`` supplies u for the predicted steps, shape (horizon, m)
    (ignored when m = 0). Returns (trajectory of predictions, diagnostics);
    a non-finite prediction halts early with the partial output flagged.
    """
    c = decoder.settings.context_window
    if seed_window.T != c:
        raise ShapeError(f"seed window must have exactly c={c} steps, got {seed_window.T}")
    if horizon < 0:
        raise ShapeError("horizon must be >= 0")
    d, m = decoder.d, decoder.m
    if seed_window.d != d or seed_window.m != m:
        raise ShapeError("seed window dimensions do not match the decoder")
    if m > 0:
        controls = np.asarray(controls, dtype=np.float64)
        if controls is None or controls.shape != (horizon, m):
            raise ShapeError(f"controls must have shape ({horizon}, {m})")
    dt = seed_window.dt

    qs = list(seed_window.qs)
    ps = list(seed_window.ps)
    us = list(seed_window.us)
    preds_q, preds_p, preds_u = [], [], []
    halted = False

    for k in range(horizon):
        win_q = np.stack(qs[-c:])
        win_p = np.stack(ps[-c:])
        win_u = np.stack(us[-c:]) if m > 0 else np.zeros((c, 0))
        feats = np.concatenate([win_q, win_p, np.full((c, 1), dt), win_u], axis=1)[None]
        try:
            zq, zp = encoder.forward(win_q, win_p, dt)
            latents = np.concatenate([zq, zp], axis=1)[None]
            pred = decoder.predict(feats, latents, zeta)[0]
        except NonFiniteError:
            halted = True
            break
        if not np.all(np.isfinite(pred)):
            halted = True
            break
        q_next, p_next = pred[:d], pred[d:]
        u_next = controls[k] if m > 0 else np.zeros(0)
        qs.append(q_next)
        ps.append(p_next)
        us.append(u_next)
        preds_q.append(q_next)
        preds_p.append(p_next)
        preds_u.append(u_next)

    n = len(preds_q)
    traj = Trajectory(
        qs=np.asarray(preds_q).reshape(n, d),
        ps=np.asarray(preds_p).reshape(n, d),
        us=np.asarray(preds_u).reshape(n, m),
        dt=dt, system_id=seed_window.system_id, generator="rollout",
        params=dict(seed_window.params), seed=seed_window.seed,
    )
    return traj, {"halted": halted, "steps": n}


def persistence_rollout(seed_window: Trajectory, horizon: int) -> Trajectory:
    """The minimal baseline: freeze the last observed state for the whole horizon."""
    q = np.repeat(seed_window.qs[-1][None], horizon, axis=0)
    p = np.repeat(seed_window.ps[-1][None], horizon, axis=0)
    u = np.zeros((horizon, seed_window.m))
    return Trajectory(q, p, u, seed_window.dt, seed_window.system_id, "persistence")


def evaluate_rollout(pred: Trajectory, truth: Trajectory) -> dict:
    """Unweighted MSE across all phase-space dimensions plus error curves."""
    if pred.T != truth.T or pred.d != truth.d:
        raise ShapeError(f"length/dim mismatch: pred ({pred.T},{pred.d}) vs truth ({truth.T},{truth.d})")
    dq = pred.qs - truth.qs
    dp = pred.ps - truth.ps
    sq = np.concatenate([dq, dp], axis=1) ** 2
    return {
        "mse": float(sq.mean()),
        "per_step": sq.mean(axis=1),
        "per_coord": sq.mean(axis=0),
    }


def adapt_encoder_to_system(encoder: SymplecticEncoder, traj: Trajectory,
                            adapt_frac: float, steps: int, lr: float,
                            optimizer: str = "adam") -> SymplecticEncoder:
    """Fast-adapted encoder copy for one system (the shared one is untouched).

    Uses the same inner procedure as episodic training: a detached parameter
    copy takes a few adaptive steps on the forward one-step error over the
    adaptation segment.
    """
    from .encoder import inner_adapt_encoder, make_split
    split = make_split(traj.T, adapt_frac)
    adapted, _ = inner_adapt_encoder(encoder, traj, split, steps, lr, optimizer)
    return SymplecticEncoder(adapted)


def adapt_to_system(decoder: AdaptiveDecoder, encoder: SymplecticEncoder,
                    traj: Trajectory, adapt_frac: float, rng: np.random.Generator,
                    steps: int | None = None, skip: bool = False
                    ) -> tuple[DecoderLocalParams, SystemBatch]:
    """Few-shot protocol for a test system: fresh locals fitted on its adapt split.

    With ``skip=True`` the freshly initialized locals are returned unadapted
    (zero-shot evaluation).
    """
    batch = SystemBatch(traj, encoder, decoder.settings.context_window, adapt_frac)
    zeta = decoder.new_zeta(rng)
    if not skip:
        zeta, _ = inner_adapt_decoder(decoder, batch, zeta, steps=steps)
    return zeta, batch
