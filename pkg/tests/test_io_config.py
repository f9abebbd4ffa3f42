"""Round-trip fidelity of persistence formats; config validation and fingerprints."""

import json

import numpy as np
import pytest

from symdyn.config import DecoderSettings, EncoderSettings, RunConfig, preset, PRESET_NAMES
from symdyn.errors import ConfigError
from symdyn.io import (
    TelemetryWriter,
    load_checkpoint,
    read_manifest,
    read_trajectory,
    save_checkpoint,
    write_manifest,
    write_trajectory,
)
from symdyn.trajectory import Trajectory


def random_traj(rng, T=17, d=3, m=2):
    return Trajectory(
        qs=rng.normal(size=(T, d)), ps=rng.normal(size=(T, d)),
        us=rng.normal(size=(T, m)), dt=float(rng.uniform(0.001, 0.3)),
        system_id="sys-x", generator="test", params={"k": 1.25, "nested": {"a": [1, 2]}},
        seed=7, extras={"energy": [0.1, 0.2]},
    )


class TestTrajectoryFile:
    def test_bitwise_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        traj = random_traj(rng)
        path = tmp_path / "t.traj.jsonl"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        assert np.array_equal(back.qs, traj.qs)
        assert np.array_equal(back.ps, traj.ps)
        assert np.array_equal(back.us, traj.us)
        assert back.dt == traj.dt
        assert back.params == traj.params
        assert back.extras == traj.extras

    def test_header_consistency_check(self, tmp_path):
        rng = np.random.default_rng(1)
        traj = random_traj(rng, T=5)
        path = tmp_path / "t.traj.jsonl"
        write_trajectory(path, traj)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop one step record
        with pytest.raises(Exception):
            read_trajectory(path)

    def test_zero_control_dims(self, tmp_path):
        rng = np.random.default_rng(2)
        traj = random_traj(rng, m=0)
        path = tmp_path / "t.traj.jsonl"
        write_trajectory(path, traj)
        assert read_trajectory(path).m == 0


class TestCheckpoint:
    def test_bitwise_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        tensors = {
            "w": rng.normal(size=(4, 7)),
            "b": rng.normal(size=7),
            "scalar": np.asarray(np.pi),
        }
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, tensors, kind="encoder", fingerprint="abc123")
        back, kind, fp = load_checkpoint(path)
        assert kind == "encoder" and fp == "abc123"
        assert set(back) == set(tensors)
        for name in tensors:
            assert np.array_equal(back[name], tensors[name])
            assert back[name].dtype == np.float64

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(Exception):
            load_checkpoint(path)


class TestTelemetryManifest:
    def test_telemetry_records(self, tmp_path):
        path = tmp_path / "tele.jsonl"
        with TelemetryWriter(path) as tel:
            tel.emit(event="epoch", epoch=0, loss=0.5)
            tel.emit(event="done", best=0.25)
        recs = [json.loads(line) for line in path.read_text().splitlines()]
        assert recs[0]["event"] == "epoch" and recs[1]["best"] == 0.25

    def test_null_telemetry_is_silent(self):
        with TelemetryWriter(None) as tel:
            tel.emit(event="epoch")  # no-op, no error

    def test_manifest_roundtrip(self, tmp_path):
        path = tmp_path / "m.jsonl"
        records = [{"a": 1.5, "b": "x"}, {"a": 2.0, "b": "y"}]
        write_manifest(path, records)
        assert read_manifest(path) == records


class TestRunConfig:
    def test_defaults_validate(self):
        RunConfig().validate()

    def test_unknown_top_key_rejected(self):
        with pytest.raises(ConfigError, match="bogus"):
            RunConfig.from_dict({"bogus": 1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="warp"):
            RunConfig.from_dict({"decoder": {"warp": 9}})

    def test_out_of_range_rejected(self):
        with pytest.raises(ConfigError, match="dropout"):
            RunConfig.from_dict({"decoder": {"dropout": 0.95}})
        with pytest.raises(ConfigError, match="hidden"):
            RunConfig.from_dict({"decoder": {"hidden": 10, "heads": 4}})

    def test_json_roundtrip_and_fingerprint(self, tmp_path):
        cfg = RunConfig.from_dict({"seed": 11, "encoder": {"blocks": 2}})
        path = tmp_path / "cfg.json"
        cfg.to_json(path)
        back = RunConfig.from_json(path)
        assert back == cfg
        assert back.fingerprint() == cfg.fingerprint()
        other = RunConfig.from_dict({"seed": 12, "encoder": {"blocks": 2}})
        assert other.fingerprint() != cfg.fingerprint()

    def test_presets(self):
        for name in PRESET_NAMES:
            cfg = preset(name)
            cfg.validate()
        spring = preset("spring_mesh")
        assert spring.decoder.context_window == 30
        assert spring.decoder.inner_steps == 10
        assert spring.decoder.outer_lr == 7e-3
        assert spring.encoder.inner_steps == 3
        assert spring.encoder.dropconnect == 0.1
        quantum = preset("quantum")
        assert quantum.decoder.inner_lr == 3e-2
        assert quantum.decoder.heads == 4
        quad = preset("quadrotor")
        assert quad.decoder.context_window == 10

    def test_split_defaults(self):
        cfg = RunConfig()
        assert cfg.splits.train_frac == 0.8
        assert cfg.splits.adapt_frac == 0.3
