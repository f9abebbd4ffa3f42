"""Desk-scale task recipes shared by the ablation suites, CLI, and tests.

Each recipe builds corpora from the parameter tables, trains the encoder on
conservative data and the decoder on the task data against the frozen
encoder, and evaluates by the few-shot protocol: fit fresh local parameters
on a held-out system's adaptation segment, then roll out autoregressively
from the window that ends where the adaptation data ends.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .config import DecoderSettings, EncoderSettings, SplitSettings
from .datagen import (
    OscillatorSystem,
    gen_oscillator,
    gen_quantum_sme,
    gen_spring_mesh,
    sample_system_params,
)
from .decoder import AdaptiveDecoder, SystemBatch, decoder_loss, train_decoder
from .encoder import SymplecticEncoder, train_encoder
from .errors import ShapeError
from .optim import Adam
from .rollout import adapt_to_system, evaluate_rollout, persistence_rollout, rollout
from .trajectory import Trajectory

__all__ = [
    "MeshProfile",
    "mesh_corpus",
    "oscillator_corpus",
    "quantum_corpus",
    "train_mesh_encoder",
    "train_mesh_decoder",
    "finetune_all_params",
    "fewshot_rollout_mse",
    "DEC_VARIANTS",
]

DEC_VARIANTS = ("meta", "no_meta", "finetune")


@dataclass
class MeshProfile:
    """Sizes for a desk-scale 3x3 spring-mesh experiment."""

    mesh: tuple[int, int] = (3, 3)
    n_train: int = 8
    n_eval: int = 3
    steps: int = 150
    context: int = 10
    horizon: int = 60
    table: str = "2a"
    eval_table: str = "2a"     # held-out draws; the parameter-shift table is opt-in
    finetune_lr: float = 3e-4  # grid-searched so the finetune baseline is fair
    enc: EncoderSettings = field(default_factory=lambda: EncoderSettings(
        blocks=2, max_epochs=40, patience=12, batch_size=4, dropconnect=0.05))
    dec: DecoderSettings = field(default_factory=lambda: DecoderSettings(
        heads=4, context_window=10, inner_steps=6, max_epochs=80, patience=30,
        batch_size=4, dropout=0.0, outer_lr=4e-3, inner_lr=1e-2))
    splits: SplitSettings = field(default_factory=SplitSettings)


# ---------------------------------------------------------------------------
# corpora
# ---------------------------------------------------------------------------

def mesh_corpus(table: str, count: int, steps: int, seed: int,
                mesh: tuple[int, int] = (3, 3), conservative: bool = False,
                gamma: float | None = None, dt: float | None = None) -> list[Trajectory]:
    systems = sample_system_params(table, count, seed, mesh_size=mesh, steps=steps)
    trajs = []
    for i, sys in enumerate(systems):
        if conservative:
            sys = dataclasses.replace(sys, gamma=0.0)
        if gamma is not None:
            sys = dataclasses.replace(sys, gamma=gamma)
        if dt is not None:
            sys = dataclasses.replace(sys, dt=dt)
        trajs.append(gen_spring_mesh(sys, seed=seed * 1000 + i, system_id=f"mesh-{table}-{i}"))
    return trajs


def oscillator_corpus(table: str, count: int, steps: int, seed: int) -> list[Trajectory]:
    systems = sample_system_params(table, count, seed, steps=steps)
    return [gen_oscillator(s, system_id=f"osc-{table}-{i}") for i, s in enumerate(systems)]


def quantum_corpus(table: str, count: int, steps: int, seed: int,
                   substeps: int = 100) -> list[Trajectory]:
    systems = sample_system_params(table, count, seed, steps=steps)
    out = []
    for i, sys in enumerate(systems):
        sys = dataclasses.replace(sys, substeps=substeps)
        out.append(gen_quantum_sme(sys, seed=seed * 1000 + i, system_id=f"sme-{table}-{i}"))
    return out


def rotation_corpus_for_quantum(count: int, steps: int, seed: int,
                                dt: float = 0.5) -> list[Trajectory]:
    """Conservative analogue data for the quantum task's encoder pretraining.

    Quadrature pairs of an undamped mode rotate at the oscillator frequency;
    unit-mass oscillators with k = omega^2 and record-scale amplitudes
    reproduce exactly that state-space geometry.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0C]))
    trajs = []
    for i in range(count):
        omega = rng.uniform(0.5, 1.0)
        amp = rng.uniform(0.3, 0.9)
        phase = rng.uniform(0, 2 * np.pi)
        sys = OscillatorSystem(m=1.0, k=omega * omega, x0=amp * np.cos(phase),
                               v0=-amp * omega * np.sin(phase), dt=dt, steps=steps)
        trajs.append(gen_oscillator(sys, system_id=f"rot-{i}"))
    return trajs


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train_mesh_encoder(profile: MeshProfile, seed: int) -> SymplecticEncoder:
    """Encoder pretraining on conservative meshes drawn from the task table."""
    corpus = mesh_corpus(profile.table, profile.n_train, profile.steps, seed,
                         mesh=profile.mesh, conservative=True)
    encoder, _ = train_encoder(corpus, profile.enc, profile.splits, seed=seed)
    return encoder


def train_mesh_decoder(profile: MeshProfile, encoder: SymplecticEncoder, seed: int,
                       context: int | None = None, variant: str = "meta",
                       gamma: float | None = None):
    """Decoder training on dissipative meshes; variant picks the parameter regime."""
    if variant not in DEC_VARIANTS:
        raise ShapeError(f"unknown variant {variant!r}; known: {DEC_VARIANTS}")
    corpus = mesh_corpus(profile.table, profile.n_train, profile.steps, seed + 500,
                         mesh=profile.mesh, gamma=gamma)
    settings = dataclasses.replace(
        profile.dec,
        context_window=context or profile.dec.context_window,
        meta_attention=(variant == "meta"),
    )
    decoder, global_zeta, hist = train_decoder(corpus, encoder, settings,
                                               profile.splits, seed=seed)
    return {"decoder": decoder, "global_zeta": global_zeta, "history": hist,
            "corpus": corpus, "variant": variant, "encoder": encoder}


def finetune_all_params(decoder: AdaptiveDecoder, global_zeta, batch: SystemBatch,
                        steps: int, lr: float):
    """Test-time fine-tuning of the whole decoder on the adaptation windows.

    Clones the decoder (and its folded-in locals) so the shared model is
    untouched; returns (tuned decoder, tuned locals).
    """
    tuned = decoder.clone()
    zeta = global_zeta.clone()
    params = tuned.theta.param_tensors() + zeta.param_tensors()
    opt = Adam(params, lr=lr, kind=tuned.settings.inner_optimizer)
    for _ in range(steps):
        opt.zero_grad()
        loss = decoder_loss(tuned, batch, batch.split.adapt_indices, zeta)
        loss.backward()
        opt.step()
    return tuned, zeta


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def fewshot_rollout_mse(encoder: SymplecticEncoder, decoder: AdaptiveDecoder,
                        global_zeta, traj: Trajectory, variant: str,
                        adapt_frac: float, horizon: int, rng: np.random.Generator,
                        adapt_steps: int | None = None,
                        finetune_lr: float = 3e-4,
                        boundary: int | None = None) -> float:
    """Few-shot evaluation on one held-out system.

    Locals adapt on the leading fraction of the trajectory (per variant);
    the rollout is seeded with the window ending at the adaptation boundary
    and scored against the subsequent ground truth. Pass an explicit
    `boundary` to pin the scored segment when comparing decoders with
    different context windows.
    """
    c = decoder.settings.context_window
    n_windows = traj.T - c
    if boundary is None:
        boundary = c + max(int(round(adapt_frac * n_windows)), 1)
    if boundary < c + 1:
        raise ShapeError(f"boundary {boundary} leaves no room for a c={c} seed window")
    adapt_part = traj.slice(0, boundary)

    dec_eval = decoder
    if variant == "meta":
        zeta, _ = adapt_to_system(decoder, encoder, adapt_part, 1.0, rng, steps=adapt_steps)
    elif variant == "no_meta":
        zeta = global_zeta
    elif variant == "finetune":
        batch = SystemBatch(adapt_part, encoder, c, 1.0)
        # the full-window split of the adapt part: all windows adapt
        batch.split = dataclasses.replace(batch.split,
                                          adapt_indices=np.arange(len(batch.windows)),
                                          meta_indices=np.arange(len(batch.windows)))
        dec_eval, zeta = finetune_all_params(decoder, global_zeta, batch,
                                             adapt_steps or decoder.settings.inner_steps,
                                             finetune_lr)
    else:
        raise ShapeError(f"unknown variant {variant!r}")

    seed_win = traj.slice(boundary - c, boundary)
    horizon = min(horizon, traj.T - boundary)
    pred, _ = rollout(encoder, dec_eval, zeta, seed_win,
                      traj.us[boundary:boundary + horizon], horizon)
    if pred.T == 0:
        return float("inf")
    truth = traj.slice(boundary, boundary + pred.T)
    return evaluate_rollout(pred, truth)["mse"]


@dataclass
class OscillatorProfile:
    """Sizes for the desk-scale harmonic-oscillator study."""

    n_train: int = 10
    steps: int = 400
    table: str = "8in"
    eval_table: str = "8out"
    context: int = 8
    horizon: int = 600
    boundary: int = 200   # adaptation data ends here; rollout starts here
    eval_steps: int = 800
    enc: EncoderSettings = field(default_factory=lambda: EncoderSettings(
        blocks=3, activation="linear", max_epochs=120, patience=30, batch_size=5,
        dropconnect=0.0, outer_lr=2e-3))
    dec: DecoderSettings = field(default_factory=lambda: DecoderSettings(
        heads=4, hidden=16, context_window=8, inner_steps=5, max_epochs=90,
        patience=25, batch_size=5, dropout=0.0, outer_lr=3e-3, inner_lr=1e-2))
    splits: SplitSettings = field(default_factory=SplitSettings)


def train_oscillator_pair(profile: OscillatorProfile, seed: int):
    """Encoder + decoder trained on in-distribution conservative oscillators."""
    corpus = oscillator_corpus(profile.table, profile.n_train, profile.steps, seed)
    encoder, _ = train_encoder(corpus, profile.enc, profile.splits, seed=seed)
    settings = dataclasses.replace(profile.dec, context_window=profile.context)
    decoder, _, hist = train_decoder(corpus, encoder, settings, profile.splits, seed=seed)
    return {"encoder": encoder, "decoder": decoder, "corpus": corpus, "history": hist}


def persistence_mse(traj: Trajectory, c: int, adapt_frac: float, horizon: int) -> float:
    n_windows = traj.T - c
    boundary = c + max(int(round(adapt_frac * n_windows)), 1)
    seed_win = traj.slice(boundary - c, boundary)
    horizon = min(horizon, traj.T - boundary)
    pred = persistence_rollout(seed_win, horizon)
    truth = traj.slice(boundary, boundary + horizon)
    return evaluate_rollout(pred, truth)["mse"]
