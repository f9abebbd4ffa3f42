"""Ablation suites: context-window sweep, meta-attention comparison,
conservative-system adaptation.

Every suite trains fresh models over several seeds, evaluates by the
few-shot rollout protocol on held-out shifted-parameter systems, and
returns one record per (variant or window, seed) plus mean/std summaries.
The same entry point backs the CLI `ablate` subcommand and the acceptance
tests, so both report identical numbers.
"""

from __future__ import annotations

import numpy as np

from .pipeline import (
    MeshProfile,
    fewshot_rollout_mse,
    mesh_corpus,
    train_mesh_decoder,
    train_mesh_encoder,
)

__all__ = ["SUITES", "resolve_suite", "run_ablation", "context_window_sweep",
           "meta_attention_suite", "conservative_suite"]

# canonical name -> aliases accepted on the CLI
SUITES = {
    "context-window": ("table6",),
    "meta-attention": ("table5",),
    "conservative": (),
}


def resolve_suite(name: str) -> str:
    for canon, aliases in SUITES.items():
        if name == canon or name in aliases:
            return canon
    raise KeyError(f"unknown ablation suite {name!r}; known: {sorted(SUITES)} "
                   f"(aliases: {[a for al in SUITES.values() for a in al]})")


def _eval_systems(profile: MeshProfile, seed: int):
    return mesh_corpus(profile.eval_table, profile.n_eval, profile.steps, seed + 900,
                       mesh=profile.mesh)


def context_window_sweep(windows=(2, 10, 20, 30), seeds=(0, 1, 2, 3, 4),
                         profile: MeshProfile | None = None) -> dict:
    """Rollout error as a function of the decoder's context window."""
    profile = profile or MeshProfile()
    records = []
    # one shared rollout boundary so every window size scores the same segment
    c_max = max(windows)
    boundary = c_max + max(int(round(profile.splits.adapt_frac * (profile.steps - c_max))), 1)
    for seed in seeds:
        encoder = train_mesh_encoder(profile, seed)
        evals = _eval_systems(profile, seed)
        for c in windows:
            bundle = train_mesh_decoder(profile, encoder, seed, context=c, variant="meta")
            rng = np.random.default_rng(np.random.SeedSequence([seed, c, 0xE1]))
            mses = [fewshot_rollout_mse(encoder, bundle["decoder"], None, t, "meta",
                                        profile.splits.adapt_frac, profile.horizon, rng,
                                        boundary=boundary)
                    for t in evals]
            records.append({"suite": "context-window", "seed": seed, "window": c,
                            "mse": float(np.mean(mses)), "per_system": mses})
    summary = {}
    for c in windows:
        vals = [r["mse"] for r in records if r["window"] == c]
        summary[c] = {"mean": float(np.mean(vals)), "std": float(np.std(vals, ddof=1))}
    return {"records": records, "summary": summary, "windows": list(windows)}


def meta_attention_suite(seeds=(0, 1, 2, 3, 4), profile: MeshProfile | None = None,
                         variants=("meta", "no_meta", "finetune")) -> dict:
    """Adapted-performance comparison of the three parameter regimes.

    `no_meta` and `finetune` share one monolithically trained model; they
    differ only at evaluation (none vs full-parameter test-time tuning).
    """
    profile = profile or MeshProfile()
    records = []
    for seed in seeds:
        encoder = train_mesh_encoder(profile, seed)
        evals = _eval_systems(profile, seed)
        bundles = {"meta": train_mesh_decoder(profile, encoder, seed, variant="meta")}
        mono = train_mesh_decoder(profile, encoder, seed, variant="no_meta")
        bundles["no_meta"] = mono
        bundles["finetune"] = {**mono, "variant": "finetune"}
        for variant in variants:
            b = bundles[variant]
            vid = {"meta": 0, "no_meta": 1, "finetune": 2}[variant]
            rng = np.random.default_rng(np.random.SeedSequence([seed, vid, 0xE2]))
            mses = [fewshot_rollout_mse(encoder, b["decoder"], b["global_zeta"], t,
                                        variant, profile.splits.adapt_frac,
                                        profile.horizon, rng,
                                        finetune_lr=profile.finetune_lr)
                    for t in evals]
            records.append({"suite": "meta-attention", "seed": seed, "variant": variant,
                            "mse": float(np.mean(mses)), "per_system": mses})
    summary = {}
    for variant in variants:
        vals = [r["mse"] for r in records if r["variant"] == variant]
        summary[variant] = {"mean": float(np.mean(vals)), "std": float(np.std(vals, ddof=1))}
    return {"records": records, "summary": summary}


def conservative_suite(seeds=(0, 1, 2, 3, 4), n_conservative: int = 5,
                       profile: MeshProfile | None = None) -> dict:
    """Dissipative-pretrained decoder adapted to fully conservative meshes.

    Reports rollout error with adapted locals against the same systems
    evaluated with freshly initialized (unadapted) locals.
    """
    profile = profile or MeshProfile()
    records = []
    for seed in seeds:
        encoder = train_mesh_encoder(profile, seed)
        bundle = train_mesh_decoder(profile, encoder, seed, variant="meta")
        targets = mesh_corpus(profile.table, n_conservative, profile.steps, seed + 1300,
                              mesh=profile.mesh, conservative=True)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE3]))
        adapted, unadapted = [], []
        for traj in targets:
            adapted.append(fewshot_rollout_mse(encoder, bundle["decoder"], None, traj,
                                               "meta", profile.splits.adapt_frac,
                                               profile.horizon, rng))
            unadapted.append(fewshot_rollout_mse(encoder, bundle["decoder"], None, traj,
                                                 "meta", profile.splits.adapt_frac,
                                                 profile.horizon, rng, adapt_steps=0))
        records.append({"suite": "conservative", "seed": seed,
                        "adapted_mse": float(np.mean(adapted)),
                        "unadapted_mse": float(np.mean(unadapted)),
                        "per_system_adapted": adapted,
                        "per_system_unadapted": unadapted})
    adapted_all = [r["adapted_mse"] for r in records]
    unadapted_all = [r["unadapted_mse"] for r in records]
    summary = {
        "adapted": {"mean": float(np.mean(adapted_all)), "std": float(np.std(adapted_all, ddof=1))},
        "unadapted": {"mean": float(np.mean(unadapted_all)), "std": float(np.std(unadapted_all, ddof=1))},
    }
    return {"records": records, "summary": summary}


def run_ablation(suite: str, seeds=(0, 1, 2, 3, 4), profile: MeshProfile | None = None) -> dict:
    canon = resolve_suite(suite)
    if canon == "context-window":
        return context_window_sweep(seeds=seeds, profile=profile)
    if canon == "meta-attention":
        return meta_attention_suite(seeds=seeds, profile=profile)
    return conservative_suite(seeds=seeds, profile=profile)
