"""Persistence formats: trajectory files, checkpoints, telemetry, manifests.

Trajectory files and telemetry are line-delimited JSON (one self-describing
record per line): human-inspectable, streamable, language-neutral. Floats
serialize via ``repr``, which round-trips doubles exactly, so read-after-
write equality is bitwise.

Checkpoints are binary: a tagged table of named float64 tensors with
explicit little-endian encoding, again bitwise round-trippable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .trajectory import Trajectory

__all__ = [
    "write_trajectory",
    "read_trajectory",
    "save_checkpoint",
    "load_checkpoint",
    "TelemetryWriter",
    "write_manifest",
    "read_manifest",
]

_SCHEMA_VERSION = 1
_CKPT_MAGIC = b"SYDN"
_CKPT_VERSION = 1


# ---------------------------------------------------------------------------
# trajectory files (JSON lines)
# ---------------------------------------------------------------------------

def write_trajectory(path: str | Path, traj: Trajectory) -> None:
    path = Path(path)
    header = {
        "kind": "header",
        "schema": _SCHEMA_VERSION,
        "system_id": traj.system_id,
        "generator": traj.generator,
        "d": traj.d,
        "m": traj.m,
        "dt": traj.dt,
        "T": traj.T,
        "seed": traj.seed,
        "params": traj.params,
        "extras": traj.extras,
    }
    with path.open("w") as fh:
        fh.write(json.dumps(header) + "\n")
        for t in range(traj.T):
            rec = {
                "kind": "step",
                "t": t,
                "q": traj.qs[t].tolist(),
                "p": traj.ps[t].tolist(),
                "u": traj.us[t].tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_trajectory(path: str | Path) -> Trajectory:
    path = Path(path)
    with path.open() as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "header":
            raise ShapeError(f"{path}: first record must be a header")
        T, d, m = header["T"], header["d"], header["m"]
        qs = np.empty((T, d))
        ps = np.empty((T, d))
        us = np.empty((T, m))
        count = 0
        for line in fh:
            rec = json.loads(line)
            if rec.get("kind") != "step":
                continue
            t = rec["t"]
            qs[t] = rec["q"]
            ps[t] = rec["p"]
            us[t] = rec["u"]
            count += 1
    if count != T:
        raise ShapeError(f"{path}: header says T={T} but found {count} step records")
    return Trajectory(qs, ps, us, header["dt"], header["system_id"], header["generator"],
                      header.get("params", {}), header.get("seed", 0), header.get("extras", {}))


# ---------------------------------------------------------------------------
# checkpoints (binary, little-endian doubles)
# ---------------------------------------------------------------------------

def _write_str(fh, s: str) -> None:
    b = s.encode("utf-8")
    fh.write(struct.pack("<I", len(b)))
    fh.write(b)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray],
                    kind: str, fingerprint: str = "") -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        _write_str(fh, kind)
        _write_str(fh, fingerprint)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            _write_str(fh, name)
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.astype("<f8").tobytes(order="C"))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], str, str]:
    """Returns (tensors, kind, fingerprint); bitwise inverse of save_checkpoint."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise ShapeError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CKPT_VERSION:
            raise ShapeError(f"{path}: unsupported checkpoint version {version}")
        kind = _read_str(fh)
        fingerprint = _read_str(fh)
        (count,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            name = _read_str(fh)
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
            n_items = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n_items), dtype="<f8").reshape(shape)
            tensors[name] = data.astype(np.float64)
    return tensors, kind, fingerprint


# ---------------------------------------------------------------------------
# telemetry and manifests (JSON lines)
# ---------------------------------------------------------------------------

class TelemetryWriter:
    """Appends one JSON record per event; no timestamps, so reruns are bit-identical."""

    def __init__(self, path: str | Path | None):
        self._fh = Path(path).open("w") if path is not None else None

    def emit(self, **record) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_manifest(path: str | Path, records: list[dict]) -> None:
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]
