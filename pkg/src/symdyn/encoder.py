"""Bidirectionally trained symplectic encoder with fast per-system adaptation.

The encoder is a shear stack mapping (q_t, p_t, dt) -> (q_{t+1}, p_{t+1});
its exact inverse (same parameters, reversed layers, subtracted drives)
steps backwards in time. Training is episodic over a family of systems:

* inner loop -- for each system, a detached copy of the parameters takes K
  adaptive-moment steps on the forward one-step MSE over the adaptation
  segment of its trajectory;
* outer loop -- a combined residual couples the forward and inverse passes
  at the adapted parameters,

      r_t = fwd(x_t) - inv(x_{t+1}) - (x_{t+1} - x_t),

  averaged over the meta segment and the batch; its gradient (evaluated at
  the adapted parameters, first-order) updates the shared initialization.

The residual is zero exactly when forward predictions and inverse
reconstructions agree with the data, so minimizing it enforces
time-reversal consistency, not just one-step fit. Only the global
parameters ever change; per-system adapted copies are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import EncoderSettings, SplitSettings
from .errors import ShapeError, TrainingDiverged
from .io import TelemetryWriter, load_checkpoint, save_checkpoint
from .optim import Adam
from .sympnet import SympStack, la_stack
from .trajectory import Trajectory

__all__ = [
    "AdaptMetaSplit",
    "make_split",
    "SymplecticEncoder",
    "inner_adapt_encoder",
    "encoder_inner_loss",
    "encoder_meta_loss",
    "train_encoder",
    "count_parameters",
]

DIVERGENCE_THRESHOLD = 1e6


@dataclass(frozen=True)
class AdaptMetaSplit:
    """Disjoint transition-index sets covering a trajectory prefix."""

    adapt_indices: np.ndarray
    meta_indices: np.ndarray

    @property
    def t_adapt(self) -> int:
        return len(self.adapt_indices)

    @property
    def t_meta(self) -> int:
        return len(self.meta_indices)


def make_split(n_steps: int, adapt_frac: float = 0.3) -> AdaptMetaSplit:
    """Contiguous split of the transition indices 0..n_steps-2.

    The leading fraction adapts, the remainder evaluates; both parts must be
    nonempty. Contiguity respects the temporal structure of the data.
    """
    n_trans = n_steps - 1
    if n_trans < 2:
        raise ShapeError(f"need >= 3 steps to split, got {n_steps}")
    n_adapt = int(round(adapt_frac * n_trans))
    n_adapt = min(max(n_adapt, 1), n_trans - 1)
    idx = np.arange(n_trans)
    return AdaptMetaSplit(idx[:n_adapt], idx[n_adapt:])


class SymplecticEncoder:
    """A shear stack plus the conveniences training and inference need."""

    def __init__(self, stack: SympStack):
        self.stack = stack

    @property
    def d(self) -> int:
        return self.stack.d

    @classmethod
    def create(cls, d: int, blocks: int = 3, activation: str = "tanh",
               seed: int = 0, act_scale: float = 0.1) -> "SymplecticEncoder":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E]))
        return cls(la_stack(d, blocks=blocks, activation=activation, rng=rng,
                            act_scale=act_scale))

    def forward(self, q, p, dt, drop=None):
        return self.stack.forward(q, p, dt, drop)

    def inverse(self, q, p, dt):
        return self.stack.inverse(q, p, dt)

    def clone(self) -> "SymplecticEncoder":
        return SymplecticEncoder(self.stack.clone())

    def parameters(self):
        return self.stack.parameters()

    # -- persistence -----------------------------------------------------
    _ACT_CODE = {"tanh": 0.0, "sigmoid": 1.0, "linear": 2.0}

    def to_tensors(self) -> dict[str, np.ndarray]:
        out = {name: t.data.copy() for name, t in self.stack.parameters()}
        out["_arch.d"] = np.asarray(float(self.stack.d))
        first_act = next((lay.fn for lay in self.stack.layers if lay.fn != "linear"), "linear")
        per_block = 2 if first_act == "linear" else 4
        out["_arch.blocks"] = np.asarray(len(self.stack.layers) / per_block)
        out["_arch.activation"] = np.asarray(self._ACT_CODE[first_act])
        return out

    def save(self, path, fingerprint: str = "") -> None:
        save_checkpoint(path, self.to_tensors(), kind="encoder", fingerprint=fingerprint)

    @classmethod
    def load(cls, path) -> "SymplecticEncoder":
        tensors, kind, _ = load_checkpoint(path)
        if kind != "encoder":
            raise ShapeError(f"checkpoint kind {kind!r} is not an encoder")
        d = int(tensors["_arch.d"])
        blocks = int(round(float(tensors["_arch.blocks"])))
        code = float(tensors["_arch.activation"])
        activation = {v: k for k, v in cls._ACT_CODE.items()}[code]
        enc = cls.create(d, blocks=blocks, activation=activation)
        for name, t in enc.stack.parameters():
            t.data = tensors[name].copy()
        return enc


def count_parameters(named_params) -> int:
    return int(sum(t.data.size for _, t in named_params))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _transition_batch(traj: Trajectory, indices: np.ndarray):
    q0 = ad.constant(traj.qs[indices])
    p0 = ad.constant(traj.ps[indices])
    q1 = traj.qs[indices + 1]
    p1 = traj.ps[indices + 1]
    return q0, p0, q1, p1


def encoder_inner_loss(stack: SympStack, traj: Trajectory, indices: np.ndarray,
                       drop=None) -> Tensor:
    """Forward one-step MSE: mean over indices of ||fwd(x_t) - x_{t+1}||^2."""
    q0, p0, q1, p1 = _transition_batch(traj, indices)
    qh, ph = stack.forward(q0, p0, traj.dt, drop)
    resid = ad.concat([qh - q1, ph - p1], axis=1)
    return ad.sum_squares(resid) * (1.0 / len(indices))


def encoder_meta_loss(stack: SympStack, traj: Trajectory, indices: np.ndarray) -> Tensor:
    """Combined forward/inverse residual averaged over the meta segment.

    Zero iff fwd(x_t) - inv(x_{t+1}) equals the state increment at every
    index; couples both directions through the shared parameters.
    """
    if len(indices) == 0:
        raise ShapeError("meta segment is empty")
    q0, p0, q1t, p1t = _transition_batch(traj, indices)
    q1 = ad.constant(q1t)
    p1 = ad.constant(p1t)
    qf, pf = stack.forward(q0, p0, traj.dt)
    qb, pb = stack.inverse(q1, p1, traj.dt)
    rq = qf - qb - (q1t - traj.qs[indices])
    rp = pf - pb - (p1t - traj.ps[indices])
    resid = ad.concat([rq, rp], axis=1)
    return ad.sum_squares(resid) * (1.0 / len(indices))


# ---------------------------------------------------------------------------
# adaptation and training
# ---------------------------------------------------------------------------

def inner_adapt_encoder(encoder: SymplecticEncoder, traj: Trajectory,
                        split: AdaptMetaSplit, steps: int, lr: float,
                        optimizer: str = "adam", drop=None) -> tuple[SympStack, list[float]]:
    """K adaptation steps on a detached parameter copy; the global stack is untouched.

    Returns (adapted stack, inner-loss history). A fresh optimizer state is
    used for every call.
    """
    adapted = encoder.stack.clone()
    if steps == 0:
        return adapted, []
    opt = Adam(adapted.param_tensors(), lr=lr, kind=optimizer)
    history = []
    for _ in range(steps):
        opt.zero_grad()
        loss = encoder_inner_loss(adapted, traj, split.adapt_indices, drop)
        value = loss.item()
        if not np.isfinite(value) or value > DIVERGENCE_THRESHOLD:
            raise TrainingDiverged(f"encoder inner loss diverged: {value}")
        history.append(value)
        loss.backward()
        opt.step()
    return adapted, history


def _meta_eval(encoder: SymplecticEncoder, traj: Trajectory, split: AdaptMetaSplit,
               settings: EncoderSettings) -> float:
    adapted, _ = inner_adapt_encoder(encoder, traj, split, settings.inner_steps,
                                     settings.inner_lr, settings.inner_optimizer)
    return encoder_meta_loss(adapted, traj, split.meta_indices).item()


def train_encoder(corpus: list[Trajectory], settings: EncoderSettings,
                  splits: SplitSettings | None = None, seed: int = 0,
                  telemetry: TelemetryWriter | None = None,
                  d: int | None = None) -> tuple[SymplecticEncoder, dict]:
    """Episodic training over a family of conservative systems.

    The corpus is split (train_frac) into training and validation systems;
    validation tracks the post-adaptation meta loss and early-stops after
    `patience` epochs without improvement, restoring the best parameters.
    Deterministic for a fixed seed.
    """
    splits = splits or SplitSettings()
    telemetry = telemetry or TelemetryWriter(None)
    if not corpus:
        raise ShapeError("empty training corpus")
    d = d or corpus[0].d
    for traj in corpus:
        if traj.d != d:
            raise ShapeError("all trajectories must share one phase dimension")

    n_train = max(1, int(round(splits.train_frac * len(corpus))))
    train_set = corpus[:n_train]
    val_set = corpus[n_train:]
    sys_splits = {id(t): make_split(t.T, splits.adapt_frac) for t in corpus}

    encoder = SymplecticEncoder.create(d, blocks=settings.blocks,
                                       activation=settings.activation, seed=seed,
                                       act_scale=settings.init_act_scale)
    global_params = encoder.stack.param_tensors()
    outer_opt = Adam(global_params, lr=settings.outer_lr, kind=settings.outer_optimizer,
                     weight_decay=settings.weight_decay)

    ss = np.random.SeedSequence([seed, 0xE7])
    epoch_rngs = [np.random.default_rng(child) for child in ss.spawn(settings.max_epochs)]

    best_val = np.inf
    best_params = [t.data.copy() for t in global_params]
    stale = 0
    history = {"inner": [], "meta": [], "val": []}
    stopped_at = settings.max_epochs

    for epoch in range(settings.max_epochs):
        rng = epoch_rngs[epoch]
        order = rng.permutation(len(train_set))
        inner_losses = []
        meta_losses = []
        for start in range(0, len(order), settings.batch_size):
            batch = [train_set[i] for i in order[start:start + settings.batch_size]]
            outer_opt.zero_grad()
            accum = [np.zeros_like(t.data) for t in global_params]
            batch_meta = 0.0
            for traj in batch:
                split = sys_splits[id(traj)]
                drop = (rng, settings.dropconnect) if settings.dropconnect > 0 else None
                adapted, hist = inner_adapt_encoder(
                    encoder, traj, split, settings.inner_steps,
                    settings.inner_lr, settings.inner_optimizer, drop=drop)
                if hist:
                    inner_losses.append(hist[-1])
                loss = encoder_meta_loss(adapted, traj, split.meta_indices)
                value = loss.item()
                if not np.isfinite(value) or value > DIVERGENCE_THRESHOLD:
                    raise TrainingDiverged(f"encoder meta loss diverged: {value}")
                batch_meta += value
                loss.backward()
                # first-order meta-gradient: evaluated at the adapted copy,
                # applied to the shared initialization
                for acc, t in zip(accum, adapted.param_tensors()):
                    if t.grad is not None:
                        acc += t.grad
            scale = 1.0 / len(batch)
            for t, acc in zip(global_params, accum):
                t.grad = acc * scale
            outer_opt.step()
            meta_losses.append(batch_meta * scale)

        val_losses = [_meta_eval(encoder, t, sys_splits[id(t)], settings) for t in val_set]
        val = float(np.mean(val_losses)) if val_losses else float(np.mean(meta_losses))
        history["inner"].append(float(np.mean(inner_losses)) if inner_losses else 0.0)
        history["meta"].append(float(np.mean(meta_losses)))
        history["val"].append(val)
        telemetry.emit(event="epoch", epoch=epoch, inner_loss_mean=history["inner"][-1],
                       meta_loss=history["meta"][-1], val_loss=val)

        if val < best_val - 1e-12:
            best_val = val
            best_params = [t.data.copy() for t in global_params]
            stale = 0
        else:
            stale += 1
            if stale >= settings.patience:
                stopped_at = epoch + 1
                break

    for t, data in zip(global_params, best_params):
        t.data = data
    history["stopped_at"] = stopped_at
    history["best_val"] = float(best_val)
    telemetry.emit(event="done", stopped_at=stopped_at, best_val=history["best_val"])
    return encoder, history
