"""Causal attention decoder with per-system meta-attention adaptation.

One decoding step consumes a context window of c raw states plus controls,
shaped (2d + m + 1) x c with columns [q, p, dt, u], and the frozen
encoder's one-step images z_c of those same states. The pipeline is

    window --linear--> z_d --+PE--> [LN -> masked self-attention] (residual)
                             --> [LN -> cross-attention onto z_c] (residual)
                             --> LN -> two-layer MLP -> F

and the prediction is  x_hat = z_c[last] + F :  the decoder learns the
bounded perturbation that carries the conservative one-step image onto the
observed (dissipative, driven) next state. With all decoder weights at
zero the composed map reduces to the encoder itself.

Parameters are partitioned: global parameters (input projection, self-
attention, cross-attention keys, output MLP, layer norms) are shared across
systems and trained in the outer loop; the cross-attention query and value
projections are local, re-initialized per system and fitted in a few inner
gradient steps. The outer loss back-propagates only to the global set.

Self-attention is causally masked (position t never sees columns > t);
cross-attention may read the whole window's z_c, which precedes the
prediction target. Sinusoidal positional encodings are added to z_d because
nothing else in the input distinguishes column order.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import DecoderSettings, SplitSettings
from .encoder import AdaptMetaSplit, DIVERGENCE_THRESHOLD, SymplecticEncoder, make_split
from .errors import ShapeError, TrainingDiverged
from .io import TelemetryWriter, load_checkpoint, save_checkpoint
from .optim import Adam
from .trajectory import Trajectory

__all__ = [
    "DecoderGlobalParams",
    "DecoderLocalParams",
    "AdaptiveDecoder",
    "controlnet_project",
    "masked_self_attention",
    "meta_cross_attention",
    "build_windows",
    "encode_states",
    "window_split",
    "inner_adapt_decoder",
    "decoder_loss",
    "train_decoder",
]


def default_hidden(d: int, heads: int) -> int:
    """Smallest multiple of the head count that fits the state width 2d."""
    return max(heads, int(np.ceil(2 * d / heads)) * heads)


def sinusoidal_encoding(c: int, h: int) -> np.ndarray:
    pos = np.arange(c)[:, None]
    i = np.arange(h)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / h)
    enc = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return enc


class DecoderGlobalParams:
    """Shared decoder parameters (everything except cross-attn query/value)."""

    def __init__(self, d: int, m: int, hidden: int, heads: int, seed: int = 0):
        if hidden % heads != 0:
            raise ShapeError(f"hidden={hidden} must be divisible by heads={heads}")
        self.d, self.m, self.h, self.heads = d, m, hidden, heads
        w = 2 * d + m + 1
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAD]))

        def mat(rows, cols, scale=None):
            s = scale if scale is not None else 1.0 / np.sqrt(rows)
            return ad.parameter(rng.normal(0.0, s, (rows, cols)))

        self.controlnet_w = mat(w, hidden)
        self.controlnet_b = ad.parameter(np.zeros(hidden))
        self.ln1_g = ad.parameter(np.ones(hidden))
        self.ln1_b = ad.parameter(np.zeros(hidden))
        self.attn_q = mat(hidden, hidden)
        self.attn_k = mat(hidden, hidden)
        self.attn_v = mat(hidden, hidden)
        self.attn_o = mat(hidden, hidden)
        self.ln2_g = ad.parameter(np.ones(hidden))
        self.ln2_b = ad.parameter(np.zeros(hidden))
        self.cross_k = mat(2 * d, hidden)
        self.mlp_w1 = mat(hidden, hidden)
        self.mlp_b1 = ad.parameter(np.zeros(hidden))
        # near-zero head: the untrained decoder starts as a tiny perturbation
        self.mlp_w2 = mat(hidden, 2 * d, scale=1e-3)
        self.mlp_b2 = ad.parameter(np.zeros(2 * d))

    _NAMES = ["controlnet_w", "controlnet_b", "ln1_g", "ln1_b", "attn_q", "attn_k",
              "attn_v", "attn_o", "ln2_g", "ln2_b", "cross_k",
              "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"]

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(n, getattr(self, n)) for n in self._NAMES]

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.parameters()]


class DecoderLocalParams:
    """Per-system cross-attention query/value projections (the adapted set)."""

    def __init__(self, d: int, hidden: int, rng: np.random.Generator, std: float = 0.02):
        self.cross_q = ad.parameter(rng.normal(0.0, std, (hidden, hidden)))
        self.cross_v = ad.parameter(rng.normal(0.0, std, (2 * d, hidden)))

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("cross_q", self.cross_q), ("cross_v", self.cross_v)]

    def param_tensors(self) -> list[Tensor]:
        return [self.cross_q, self.cross_v]

    def clone(self) -> "DecoderLocalParams":
        new = DecoderLocalParams.__new__(DecoderLocalParams)
        new.cross_q = ad.parameter(self.cross_q.data.copy())
        new.cross_v = ad.parameter(self.cross_v.data.copy())
        return new


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def controlnet_project(window, w: Tensor, b: Tensor) -> Tensor:
    """Affine per-column projection of the raw window into the latent stream."""
    x = window if isinstance(window, Tensor) else ad.constant(window)
    return x @ w + b


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, c, h = x.shape
    return x.reshape(b, c, heads, h // heads).swapaxes(1, 2)  # (B, H, c, dk)


def _merge_heads(x: Tensor) -> Tensor:
    b, heads, c, dk = x.shape
    return x.swapaxes(1, 2).reshape(b, c, heads * dk)


def _causal_mask(c: int) -> np.ndarray:
    mask = np.triu(np.ones((c, c)), k=1) * (-1e30)
    return mask[None, None, :, :]


def masked_self_attention(z_d: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
                          wo: Tensor, heads: int, pe: np.ndarray | None = None) -> Tensor:
    """Causal multi-head self-attention; output at t depends only on columns <= t.

    Positional information, when given, is added to the projected queries
    and keys only, so it steers the attention pattern without polluting the
    value stream.
    """
    c = z_d.shape[1]
    q = z_d @ wq
    k = z_d @ wk
    if pe is not None:
        q = q + pe
        k = k + pe
    q = _split_heads(q, heads)
    k = _split_heads(k, heads)
    v = _split_heads(z_d @ wv, heads)
    dk = q.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dk))
    scores = scores + _causal_mask(c)
    attn = ad.softmax(scores, axis=-1)
    out = _merge_heads(attn @ v)
    return out @ wo


def meta_cross_attention(stream: Tensor, z_c, cross_k: Tensor, cross_q: Tensor,
                         cross_v: Tensor, heads: int,
                         pe_q: np.ndarray | None = None,
                         pe_k: np.ndarray | None = None) -> Tensor:
    """Cross-attention of the decoded stream onto the conservative latents.

    Queries come from the stream through the local projection, keys from z_c
    through the global projection, values from z_c through the local
    projection. Positional terms on queries/keys give the attention a stable
    alignment backbone that survives re-initialization of the local
    parameters. Returns the additive update (caller owns the residual).
    """
    zc = z_c if isinstance(z_c, Tensor) else ad.constant(z_c)
    if zc.shape[-2] == 0:
        raise ShapeError("cross-attention needs at least one latent column")
    q = stream @ cross_q
    k = zc @ cross_k
    if pe_q is not None:
        q = q + pe_q
    if pe_k is not None:
        k = k + pe_k
    q = _split_heads(q, heads)
    k = _split_heads(k, heads)
    v = _split_heads(zc @ cross_v, heads)
    dk = q.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dk))
    attn = ad.softmax(scores, axis=-1)
    return _merge_heads(attn @ v)


# ---------------------------------------------------------------------------
# the decoder module
# ---------------------------------------------------------------------------

class AdaptiveDecoder:
    """Global parameters plus the wiring; local parameters are passed per call."""

    def __init__(self, d: int, m: int, settings: DecoderSettings, seed: int = 0):
        self.d, self.m = d, m
        self.settings = settings
        self.h = settings.hidden or default_hidden(d, settings.heads)
        self.heads = settings.heads
        self.theta = DecoderGlobalParams(d, m, self.h, self.heads, seed=seed)
        self._zeta_std = settings.zeta_init_std

    def new_zeta(self, rng: np.random.Generator) -> DecoderLocalParams:
        return DecoderLocalParams(self.d, self.h, rng, std=self._zeta_std)

    def delta(self, window: np.ndarray, z_c: np.ndarray, zeta: DecoderLocalParams,
              drop: tuple[np.random.Generator, float] | None = None) -> Tensor:
        """The perturbation F for a batch of windows; shape (B, 2d)."""
        th = self.theta
        z_d = controlnet_project(window, th.controlnet_w, th.controlnet_b)
        c = z_d.shape[1]
        z_d = z_d + self.settings.pe_scale * sinusoidal_encoding(c, self.h)

        sa = masked_self_attention(ad.layer_norm(z_d, th.ln1_g, th.ln1_b),
                                   th.attn_q, th.attn_k, th.attn_v, th.attn_o,
                                   self.heads)
        if drop is not None:
            sa = sa * ad.dropout_mask(drop[0], sa.shape, drop[1])
        u = z_d + sa

        cross = meta_cross_attention(ad.layer_norm(u, th.ln2_g, th.ln2_b), z_c,
                                     th.cross_k, zeta.cross_q, zeta.cross_v, self.heads)
        if drop is not None:
            cross = cross * ad.dropout_mask(drop[0], cross.shape, drop[1])
        y = u + cross

        # no normalization before the head: the regression target scales with
        # the state, and the cross-attention values carry that scale
        last = y[:, -1, :]
        hidden = ad.tanh(last @ th.mlp_w1 + th.mlp_b1)
        if drop is not None:
            hidden = hidden * ad.dropout_mask(drop[0], hidden.shape, drop[1])
        return hidden @ th.mlp_w2 + th.mlp_b2

    def forward(self, window: np.ndarray, z_c: np.ndarray, zeta: DecoderLocalParams,
                drop=None) -> Tensor:
        """Predicted next state: conservative image of the last column plus F."""
        f = self.delta(window, z_c, zeta, drop)
        return ad.constant(z_c[:, -1, :]) + f

    def predict(self, window: np.ndarray, z_c: np.ndarray, zeta: DecoderLocalParams) -> np.ndarray:
        return self.forward(window, z_c, zeta).data

    def clone(self) -> "AdaptiveDecoder":
        new = AdaptiveDecoder(self.d, self.m, self.settings, seed=0)
        for (_, mine), (_, theirs) in zip(new.theta.parameters(), self.theta.parameters()):
            mine.data = theirs.data.copy()
        return new

    # -- persistence -----------------------------------------------------
    def to_tensors(self, zeta: DecoderLocalParams | None = None) -> dict[str, np.ndarray]:
        out = {f"theta.{n}": t.data.copy() for n, t in self.theta.parameters()}
        if zeta is not None:
            out.update({f"zeta.{n}": t.data.copy() for n, t in zeta.parameters()})
        out["_arch.d"] = np.asarray(float(self.d))
        out["_arch.m"] = np.asarray(float(self.m))
        out["_arch.hidden"] = np.asarray(float(self.h))
        out["_arch.heads"] = np.asarray(float(self.heads))
        return out

    def save(self, path, zeta: DecoderLocalParams | None = None, fingerprint: str = "") -> None:
        save_checkpoint(path, self.to_tensors(zeta), kind="decoder", fingerprint=fingerprint)

    @classmethod
    def load(cls, path, settings: DecoderSettings | None = None
             ) -> tuple["AdaptiveDecoder", DecoderLocalParams | None]:
        tensors, kind, _ = load_checkpoint(path)
        if kind != "decoder":
            raise ShapeError(f"checkpoint kind {kind!r} is not a decoder")
        settings = settings or DecoderSettings()
        d = int(tensors["_arch.d"])
        m = int(tensors["_arch.m"])
        settings_h = int(tensors["_arch.hidden"])
        heads = int(tensors["_arch.heads"])
        import dataclasses
        settings = dataclasses.replace(settings, hidden=settings_h, heads=heads)
        dec = cls(d, m, settings)
        for n, t in dec.theta.parameters():
            t.data = tensors[f"theta.{n}"].copy()
        zeta = None
        if "zeta.cross_q" in tensors:
            zeta = dec.new_zeta(np.random.default_rng(0))
            zeta.cross_q.data = tensors["zeta.cross_q"].copy()
            zeta.cross_v.data = tensors["zeta.cross_v"].copy()
        return dec, zeta


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------

def build_windows(traj: Trajectory, c: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Teacher-forced windows for every admissible transition index.

    Returns (windows, targets, t_index): windows[i] covers steps
    [t-c+1 .. t] with feature columns [q, p, dt, u]; targets[i] is the
    state at t+1; t_index[i] = t. Requires T >= c + 1.
    """
    T, d, m = traj.T, traj.d, traj.m
    if T < c + 1:
        raise ShapeError(f"trajectory too short for context window: T={T}, c={c}")
    feats = np.concatenate(
        [traj.qs, traj.ps, np.full((T, 1), traj.dt), traj.us], axis=1)
    t_index = np.arange(c - 1, T - 1)
    idx = t_index[:, None] + np.arange(-c + 1, 1)[None, :]
    windows = feats[idx]  # (B, c, 2d+1+m)
    targets = np.concatenate([traj.qs[t_index + 1], traj.ps[t_index + 1]], axis=1)
    return windows, targets, t_index


def encode_states(encoder: SymplecticEncoder, traj: Trajectory) -> np.ndarray:
    """Frozen-encoder one-step images of every state; (T, 2d) array."""
    q1, p1 = encoder.forward(traj.qs, traj.ps, traj.dt)
    return np.concatenate([q1, p1], axis=1)


def window_latents(z_all: np.ndarray, t_index: np.ndarray, c: int) -> np.ndarray:
    idx = t_index[:, None] + np.arange(-c + 1, 1)[None, :]
    return z_all[idx]


def window_split(traj: Trajectory, c: int, adapt_frac: float) -> AdaptMetaSplit:
    """Adapt/meta split over the admissible window positions (not raw steps)."""
    n_windows = traj.T - c
    if n_windows < 2:
        raise ShapeError(f"need at least 2 windows, got {n_windows}")
    n_adapt = min(max(int(round(adapt_frac * n_windows)), 1), n_windows - 1)
    idx = np.arange(n_windows)
    return AdaptMetaSplit(idx[:n_adapt], idx[n_adapt:])


class SystemBatch:
    """Precomputed teacher-forcing arrays for one system (windows never change)."""

    def __init__(self, traj: Trajectory, encoder: SymplecticEncoder, c: int,
                 adapt_frac: float):
        self.traj = traj
        self.encoder = encoder
        self.windows, self.targets, self.t_index = build_windows(traj, c)
        z_all = encode_states(encoder, traj)
        self.latents = window_latents(z_all, self.t_index, c)
        self.split = window_split(traj, c, adapt_frac)

    def subset(self, indices: np.ndarray):
        return self.windows[indices], self.latents[indices], self.targets[indices]


# ---------------------------------------------------------------------------
# losses, adaptation, training
# ---------------------------------------------------------------------------

def decoder_loss(decoder: AdaptiveDecoder, batch: SystemBatch, indices: np.ndarray,
                 zeta: DecoderLocalParams, drop=None,
                 noise: tuple[np.random.Generator, float] | None = None) -> Tensor:
    """Mean over windows of ||prediction - next state||^2 (teacher forcing).

    `noise` perturbs the window state channels (q/p only; dt and controls
    stay clean), a denoising regularizer that hardens autoregressive
    feedback against the model's own prediction errors.
    """
    windows, latents, targets = batch.subset(indices)
    if noise is not None and noise[1] > 0.0:
        rng, std = noise
        d = decoder.d
        windows = windows.copy()
        windows[..., : 2 * d] += rng.normal(0.0, std, windows[..., : 2 * d].shape)
        # the latents must see the same perturbed states the rollout would
        b, c = windows.shape[:2]
        q = windows[..., :d].reshape(-1, d)
        p = windows[..., d: 2 * d].reshape(-1, d)
        zq, zp = batch.encoder.forward(q, p, batch.traj.dt)
        latents = np.concatenate([zq, zp], axis=1).reshape(b, c, 2 * d)
    pred = decoder.forward(windows, latents, zeta, drop)
    resid = pred - targets
    return ad.sum_squares(resid) * (1.0 / len(indices))


def inner_adapt_decoder(decoder: AdaptiveDecoder, batch: SystemBatch,
                        zeta: DecoderLocalParams, steps: int | None = None,
                        lr: float | None = None, drop=None,
                        noise=None) -> tuple[DecoderLocalParams, list[float]]:
    """Fit the local parameters on the adaptation windows; theta is left untouched.

    Gradients flow to theta tensors during backward but are never applied;
    the caller owns zeroing before its outer pass.
    """
    s = decoder.settings
    steps = s.inner_steps if steps is None else steps
    lr = s.inner_lr if lr is None else lr
    if steps == 0:
        return zeta, []
    opt = Adam(zeta.param_tensors(), lr=lr, kind=s.inner_optimizer)
    history = []
    for _ in range(steps):
        opt.zero_grad()
        loss = decoder_loss(decoder, batch, batch.split.adapt_indices, zeta, drop, noise)
        value = loss.item()
        if not np.isfinite(value) or value > DIVERGENCE_THRESHOLD:
            raise TrainingDiverged(f"decoder inner loss diverged: {value}")
        history.append(value)
        loss.backward()
        opt.step()
    return zeta, history


def _zero_grads(params: list[Tensor]) -> None:
    for t in params:
        t.grad = None


def _val_metric(decoder: AdaptiveDecoder, batch: SystemBatch, settings: DecoderSettings,
                global_zeta: DecoderLocalParams | None, rng: np.random.Generator) -> float:
    if settings.meta_attention:
        zeta = decoder.new_zeta(rng)
        zeta, _ = inner_adapt_decoder(decoder, batch, zeta)
    else:
        zeta = global_zeta
    return decoder_loss(decoder, batch, batch.split.meta_indices, zeta).item()


def train_decoder(corpus: list[Trajectory], encoder: SymplecticEncoder,
                  settings: DecoderSettings, splits: SplitSettings | None = None,
                  seed: int = 0, telemetry: TelemetryWriter | None = None
                  ) -> tuple[AdaptiveDecoder, DecoderLocalParams | None, dict]:
    """Bi-level training against a frozen encoder.

    With meta-attention on, every epoch re-initializes each system's local
    parameters, adapts them for K inner steps, and applies the outer-loss
    gradient (at the adapted locals) to the global parameters only. With it
    off, the local projections join the global set and train monolithically
    (no inner loop); that is the fold-in ablation variant.

    Returns (decoder, global_zeta_or_None, history).
    """
    splits = splits or SplitSettings()
    telemetry = telemetry or TelemetryWriter(None)
    if not corpus:
        raise ShapeError("empty decoder corpus")
    d, m = corpus[0].d, corpus[0].m
    for traj in corpus:
        if traj.d != d or traj.m != m:
            raise ShapeError("decoder corpus must share d and m")

    decoder = AdaptiveDecoder(d, m, settings, seed=seed)
    ss = np.random.SeedSequence([seed, 0xDE])
    init_rng = np.random.default_rng(ss.spawn(1)[0])
    global_zeta = decoder.new_zeta(init_rng) if not settings.meta_attention else None

    batches = [SystemBatch(t, encoder, settings.context_window, splits.adapt_frac)
               for t in corpus]
    n_train = max(1, int(round(splits.train_frac * len(batches))))
    train_set, val_set = batches[:n_train], batches[n_train:]

    theta_params = decoder.theta.param_tensors()
    outer_params = theta_params + (global_zeta.param_tensors() if global_zeta else [])
    outer_opt = Adam(outer_params, lr=settings.outer_lr, kind=settings.outer_optimizer,
                     weight_decay=settings.weight_decay)

    epoch_rngs = [np.random.default_rng(c) for c in ss.spawn(settings.max_epochs)]
    # one fixed substream for validation: identical local-init draws every
    # epoch, so the metric tracks global-parameter progress, not init noise
    val_seed = ss.spawn(1)[0]

    best_val = np.inf
    best = [t.data.copy() for t in outer_params]
    stale = 0
    history = {"inner": [], "outer": [], "val": []}
    stopped_at = settings.max_epochs

    for epoch in range(settings.max_epochs):
        rng = epoch_rngs[epoch]
        order = rng.permutation(len(train_set))
        inner_losses, outer_losses = [], []
        for start in range(0, len(order), settings.batch_size):
            group = [train_set[i] for i in order[start:start + settings.batch_size]]
            outer_opt.zero_grad()
            accum = [np.zeros_like(t.data) for t in outer_params]
            for batch in group:
                drop = (rng, settings.dropout) if settings.dropout > 0 else None
                noise = (rng, settings.train_noise_std) if settings.train_noise_std > 0 else None
                if settings.meta_attention:
                    zeta = decoder.new_zeta(rng)
                    zeta, hist = inner_adapt_decoder(decoder, batch, zeta, drop=drop,
                                                     noise=noise)
                    if hist:
                        inner_losses.append(hist[-1])
                    _zero_grads(theta_params)   # discard inner-pass leakage
                else:
                    zeta = global_zeta
                    _zero_grads(outer_params)
                loss = decoder_loss(decoder, batch, batch.split.meta_indices, zeta, drop, noise)
                value = loss.item()
                if not np.isfinite(value) or value > DIVERGENCE_THRESHOLD:
                    raise TrainingDiverged(f"decoder outer loss diverged: {value}")
                outer_losses.append(value)
                loss.backward()
                for acc, t in zip(accum, outer_params):
                    if t.grad is not None:
                        acc += t.grad
                _zero_grads(outer_params)
                if settings.per_system_outer:
                    for t, acc in zip(outer_params, accum):
                        t.grad = acc
                    outer_opt.step()
                    accum = [np.zeros_like(t.data) for t in outer_params]
            if not settings.per_system_outer:
                scale = 1.0 / len(group)
                for t, acc in zip(outer_params, accum):
                    t.grad = acc * scale
                outer_opt.step()

        val_rng = np.random.default_rng(val_seed)
        val_losses = [_val_metric(decoder, b, settings, global_zeta, val_rng)
                      for b in val_set]
        val = float(np.mean(val_losses)) if val_losses else float(np.mean(outer_losses))
        history["inner"].append(float(np.mean(inner_losses)) if inner_losses else 0.0)
        history["outer"].append(float(np.mean(outer_losses)))
        history["val"].append(val)
        telemetry.emit(event="epoch", epoch=epoch, inner_loss_mean=history["inner"][-1],
                       outer_loss=history["outer"][-1], val_loss=val)

        if val < best_val - 1e-12:
            best_val = val
            best = [t.data.copy() for t in outer_params]
            stale = 0
        else:
            stale += 1
            if stale >= settings.patience:
                stopped_at = epoch + 1
                break

    for t, data in zip(outer_params, best):
        t.data = data
    history["stopped_at"] = stopped_at
    history["best_val"] = float(best_val)
    telemetry.emit(event="done", stopped_at=stopped_at, best_val=history["best_val"])
    return decoder, global_zeta, history
