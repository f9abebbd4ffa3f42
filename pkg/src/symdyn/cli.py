"""Command-line entry points.

Subcommands: generate, train-encoder, train-decoder, adapt, rollout,
verify, ablate. Every run embeds its config fingerprint in the artifacts
it writes; errors print one machine-readable JSON record to stderr and
exit nonzero. Verbosity comes from the SYMDYN_LOG environment variable
(quiet|info|debug).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen
from .ablate import SUITES, run_ablation
from .config import PRESET_NAMES, RunConfig, preset
from .datagen import sample_system_params, system_to_dict
from .decoder import AdaptiveDecoder, SystemBatch, inner_adapt_decoder, train_decoder
from .encoder import SymplecticEncoder, count_parameters, train_encoder
from .errors import ConfigError, SymdynError
from .io import TelemetryWriter, read_trajectory, write_manifest, write_trajectory
from .pipeline import MeshProfile, finetune_all_params, mesh_corpus, train_mesh_decoder, train_mesh_encoder
from .rollout import evaluate_rollout, rollout
from .sympnet import symplectic_form
from .trajectory import Trajectory
from .verify import (
    energy_drift,
    perturbation_bound_estimate,
    scale_decoder_output,
    shoelace_area,
    symplectic_defect,
)

log = logging.getLogger("symdyn")


def _setup_logging() -> None:
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("SYMDYN_LOG", "info").lower(), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return RunConfig.from_json(args.config)
    if getattr(args, "preset", None):
        return preset(args.preset, seed=getattr(args, "seed", 0) or 0)
    return RunConfig().validate()


def _read_corpus(data_dir: str) -> list[Trajectory]:
    paths = sorted(Path(data_dir).glob("*.traj.jsonl"))
    if not paths:
        raise ConfigError(f"no *.traj.jsonl files found under {data_dir}")
    return [read_trajectory(p) for p in paths]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind_for_table = {"2a": "spring", "2b": "spring", "3a": "quantum", "3b": "quantum",
                      "8in": "oscillator", "8out": "oscillator"}
    if args.table not in kind_for_table:
        raise ConfigError(f"unknown table {args.table!r}")
    if kind_for_table[args.table] != args.system:
        raise ConfigError(f"table {args.table} belongs to system "
                          f"{kind_for_table[args.table]!r}, not {args.system!r}")
    mesh = tuple(int(v) for v in args.mesh.split("x")) if args.mesh else (3, 3)
    systems = sample_system_params(args.table, args.count, args.seed,
                                   mesh_size=mesh, steps=args.steps)
    manifest = []
    for i, sys_spec in enumerate(systems):
        if args.system == "quantum" and args.substeps:
            sys_spec = dataclasses.replace(sys_spec, substeps=args.substeps)
        sid = f"{args.system}-{args.table}-{i:03d}"
        seed_i = args.seed * 1000 + i
        if args.system == "spring":
            traj = datagen.gen_spring_mesh(sys_spec, seed=seed_i, system_id=sid)
        elif args.system == "oscillator":
            traj = datagen.gen_oscillator(sys_spec, system_id=sid)
        else:
            traj = datagen.gen_quantum_sme(sys_spec, seed=seed_i, system_id=sid)
        fname = f"{sid}.traj.jsonl"
        write_trajectory(out / fname, traj)
        manifest.append({"file": fname, "system_id": sid, "seed": seed_i,
                         "params": system_to_dict(sys_spec)})
        log.info("wrote %s (T=%d d=%d)", fname, traj.T, traj.d)
    write_manifest(out / "manifest.jsonl", manifest)
    return 0


def cmd_train_encoder(args) -> int:
    cfg = _load_config(args)
    corpus = _read_corpus(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with TelemetryWriter(out / "encoder_telemetry.jsonl") as tel:
        tel.emit(event="config", fingerprint=cfg.fingerprint(), config=cfg.to_dict())
        encoder, hist = train_encoder(corpus, cfg.encoder, cfg.splits, seed=cfg.seed,
                                      telemetry=tel)
    encoder.save(out / "encoder.ckpt", fingerprint=cfg.fingerprint())
    log.info("encoder: %d params, stopped at epoch %d, best val %.4g",
             count_parameters(encoder.parameters()), hist["stopped_at"], hist["best_val"])
    return 0


def cmd_train_decoder(args) -> int:
    cfg = _load_config(args)
    if args.no_meta_attention:
        cfg.decoder.meta_attention = False
    corpus = _read_corpus(args.data)
    encoder = SymplecticEncoder.load(args.encoder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with TelemetryWriter(out / "decoder_telemetry.jsonl") as tel:
        tel.emit(event="config", fingerprint=cfg.fingerprint(), config=cfg.to_dict())
        decoder, global_zeta, hist = train_decoder(corpus, encoder, cfg.decoder,
                                                   cfg.splits, seed=cfg.seed, telemetry=tel)
    decoder.save(out / "decoder.ckpt", zeta=global_zeta, fingerprint=cfg.fingerprint())
    n = count_parameters(decoder.theta.parameters())
    if global_zeta is not None:
        n += count_parameters(global_zeta.parameters())
    log.info("decoder: %d params (reported total model size), stopped at %d, best val %.4g",
             n, hist["stopped_at"], hist["best_val"])
    return 0


def cmd_adapt(args) -> int:
    cfg = _load_config(args)
    encoder = SymplecticEncoder.load(args.encoder)
    decoder, global_zeta = AdaptiveDecoder.load(args.checkpoint, cfg.decoder)
    traj = read_trajectory(args.system_file)
    batch = SystemBatch(traj, encoder, decoder.settings.context_window, cfg.splits.adapt_frac)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xAD0]))
    steps = args.steps or decoder.settings.inner_steps
    if args.finetune_only:
        if global_zeta is None:
            raise ConfigError("--finetune-only needs a checkpoint with folded-in locals")
        decoder, zeta = finetune_all_params(decoder, global_zeta, batch, steps,
                                            decoder.settings.inner_lr)
    else:
        zeta = decoder.new_zeta(rng)
        zeta, hist = inner_adapt_decoder(decoder, batch, zeta, steps=steps)
        if hist:
            log.info("inner loss %.4g -> %.4g over %d steps", hist[0], hist[-1], len(hist))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    decoder.save(out / "adapted.ckpt", zeta=zeta, fingerprint=cfg.fingerprint())
    return 0


def cmd_rollout(args) -> int:
    cfg = _load_config(args)
    encoder = SymplecticEncoder.load(args.encoder)
    decoder, zeta = AdaptiveDecoder.load(args.checkpoint, cfg.decoder)
    if zeta is None:
        log.info("checkpoint has no local parameters; using a fresh zero-shot init")
        zeta = decoder.new_zeta(np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xF0])))
    traj = read_trajectory(args.system_file)
    c = decoder.settings.context_window
    start = args.start
    if traj.T < start + c:
        raise ConfigError(f"trajectory too short: T={traj.T} < start+c={start + c}")
    seed_win = traj.slice(start, start + c)
    horizon = args.horizon
    controls = traj.us[start + c:start + c + horizon] if traj.m else None
    if traj.m and len(controls) < horizon:
        raise ConfigError("not enough recorded controls for the requested horizon")
    pred, info = rollout(encoder, decoder, zeta, seed_win, controls, horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(out / "rollout.traj.jsonl", pred)
    record = {"horizon": horizon, "steps": info["steps"], "halted": info["halted"],
              "fingerprint": cfg.fingerprint()}
    avail = traj.T - (start + c)
    if avail >= pred.T > 0:
        truth = traj.slice(start + c, start + c + pred.T)
        metrics = evaluate_rollout(pred, truth)
        record["mse"] = metrics["mse"]
        record["per_step_tail"] = list(map(float, metrics["per_step"][-5:]))
    write_manifest(out / "rollout_metrics.jsonl", [record])
    log.info("rollout: %s", json.dumps(record))
    return 0


def cmd_verify(args) -> int:
    results = []
    ok = True
    if args.suite == "symplectic":
        encoder = (SymplecticEncoder.load(args.encoder) if args.encoder
                   else SymplecticEncoder.create(d=4, blocks=3, seed=args.seed))
        rng = np.random.default_rng(args.seed)
        pts = rng.normal(size=(args.points, 2 * encoder.d))
        rep = symplectic_defect(encoder.stack, pts, dt=0.05, mode="analytic")
        ok = rep.defect <= 1e-8 and rep.det_dev <= 1e-8
        results.append({"suite": "symplectic", "defect": rep.defect,
                        "det_dev": rep.det_dev, "points": rep.n_points, "pass": ok})
    elif args.suite == "area":
        sq = shoelace_area(np.array([0, 1, 1, 0]), np.array([0, 0, 1, 1]))
        th = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
        circ = shoelace_area(np.cos(th), np.sin(th))
        ok = abs(sq - 1.0) < 1e-12 and abs(circ - np.pi) < 1e-6
        results.append({"suite": "area", "unit_square": sq, "circle": circ, "pass": ok})
    elif args.suite == "energy":
        osc = datagen.OscillatorSystem(m=1.0, k=2.0, x0=1.0, v0=0.0, dt=0.01, steps=4000)
        tr = datagen.gen_oscillator(osc)
        e = datagen.oscillator_energy(tr.qs, tr.ps, osc.m, osc.k)
        drift_osc = energy_drift(e)
        mesh_sys = sample_system_params("2a", 1, args.seed, mesh_size=(3, 3), steps=1500)[0]
        mesh_sys = dataclasses.replace(mesh_sys, gamma=0.0)
        tr2 = datagen.gen_spring_mesh(mesh_sys, seed=args.seed)
        e2 = np.asarray(tr2.extras["energy"])
        drift_mesh = float(np.max(np.abs(e2 - e2[0])) / abs(e2[0]))
        ok = drift_osc["max_rel"] <= 1e-12 and drift_mesh <= 0.01
        results.append({"suite": "energy", "oscillator_max_rel": drift_osc["max_rel"],
                        "mesh_gamma0_max_rel": drift_mesh, "pass": ok})
    elif args.suite == "bound":
        profile = MeshProfile()
        profile.enc.max_epochs = 10
        profile.dec.max_epochs = 8
        encoder = train_mesh_encoder(profile, args.seed)
        bundle = train_mesh_decoder(profile, encoder, args.seed, variant="meta",
                                    gamma=2.0)
        traj = bundle["corpus"][0]
        c = bundle["decoder"].settings.context_window
        wins = [traj.slice(s, s + c) for s in (0, 10, 20)]
        rng = np.random.default_rng(args.seed)
        from .rollout import adapt_to_system
        zeta, _ = adapt_to_system(bundle["decoder"], encoder, traj, 0.5, rng)
        est = perturbation_bound_estimate(encoder, bundle["decoder"], zeta, wins)
        ok = est["defect_max"] < 1.0
        results.append({"suite": "bound", "rho_hat": est["rho_hat"],
                        "defect_max": est["defect_max"], "c_hat": est["c_hat"], "pass": ok})
    else:
        raise ConfigError(f"unknown verify suite {args.suite!r}")
    for rec in results:
        print(json.dumps(rec))
    return 0 if ok else 1


def cmd_ablate(args) -> int:
    profile = MeshProfile()
    if args.quick:
        profile.n_train = 4
        profile.n_eval = 2
        profile.steps = 90
        profile.enc.max_epochs = 8
        profile.dec.max_epochs = 6
    seeds = tuple(range(args.seeds))
    out = run_ablation(args.suite, seeds=seeds, profile=profile)
    print(json.dumps({"suite": args.suite, "summary": out["summary"]}, default=str))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_manifest(args.out, out["records"])
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="symdyn",
        description="Structure-preserving dynamics learning: data generation, "
                    "training, rollout, and geometric verification.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample systems from a parameter table and simulate")
    g.add_argument("--system", required=True, choices=["spring", "oscillator", "quantum"])
    g.add_argument("--table", required=True, help="2a|2b|3a|3b|8in|8out")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--steps", type=int, default=None, help="override trajectory length")
    g.add_argument("--mesh", default=None, help="grid size for spring meshes, e.g. 3x3")
    g.add_argument("--substeps", type=int, default=None, help="quantum integrator substeps")
    g.set_defaults(fn=cmd_generate)

    te = sub.add_parser("train-encoder", help="train the symplectic encoder")
    te.add_argument("--config", default=None)
    te.add_argument("--preset", default=None, choices=list(PRESET_NAMES))
    te.add_argument("--data", required=True)
    te.add_argument("--out", required=True)
    te.set_defaults(fn=cmd_train_encoder)

    td = sub.add_parser("train-decoder", help="train the attention decoder against a frozen encoder")
    td.add_argument("--config", default=None)
    td.add_argument("--preset", default=None, choices=list(PRESET_NAMES))
    td.add_argument("--data", required=True)
    td.add_argument("--encoder", required=True)
    td.add_argument("--out", required=True)
    td.add_argument("--no-meta-attention", action="store_true",
                    help="fold the local projections into the global set (ablation)")
    td.set_defaults(fn=cmd_train_decoder)

    ad_ = sub.add_parser("adapt", help="few-shot adapt local parameters to one system")
    ad_.add_argument("--config", default=None)
    ad_.add_argument("--preset", default=None, choices=list(PRESET_NAMES))
    ad_.add_argument("--checkpoint", required=True, help="decoder checkpoint")
    ad_.add_argument("--encoder", required=True)
    ad_.add_argument("--system-file", required=True)
    ad_.add_argument("--steps", type=int, default=None)
    ad_.add_argument("--finetune-only", action="store_true",
                     help="tune all decoder parameters instead of the locals (ablation)")
    ad_.add_argument("--out", required=True)
    ad_.set_defaults(fn=cmd_adapt)

    ro = sub.add_parser("rollout", help="autoregressive prediction from a seed window")
    ro.add_argument("--config", default=None)
    ro.add_argument("--preset", default=None, choices=list(PRESET_NAMES))
    ro.add_argument("--checkpoint", required=True, help="decoder checkpoint (with locals if adapted)")
    ro.add_argument("--encoder", required=True)
    ro.add_argument("--system-file", required=True)
    ro.add_argument("--horizon", type=int, required=True)
    ro.add_argument("--start", type=int, default=0, help="index where the seed window begins")
    ro.add_argument("--out", required=True)
    ro.set_defaults(fn=cmd_rollout)

    ve = sub.add_parser("verify", help="geometric verification suites")
    ve.add_argument("--suite", required=True, choices=["symplectic", "bound", "energy", "area"])
    ve.add_argument("--encoder", default=None, help="checkpoint to verify (symplectic suite)")
    ve.add_argument("--points", type=int, default=100)
    ve.add_argument("--seed", type=int, default=0)
    ve.set_defaults(fn=cmd_verify)

    ab = sub.add_parser("ablate", help="ablation suites over multiple seeds")
    aliases = sorted({a for al in SUITES.values() for a in al} | set(SUITES))
    ab.add_argument("--suite", required=True, choices=aliases)
    ab.add_argument("--seeds", type=int, default=5, help="number of seeds")
    ab.add_argument("--quick", action="store_true", help="small sizes for a fast look")
    ab.add_argument("--out", default=None, help="write per-record results here")
    ab.set_defaults(fn=cmd_ablate)

    return ap


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except SymdynError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "file-not-found", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
