"""Run configuration, persistence and artifact emission.

All artifacts are written atomically (temp file in the target directory,
then rename), floats are serialized with full precision, and JSON keys are
sorted, so identical configurations produce byte-identical outputs.
Checkpoints are little-endian binary records with the magic tag WWDAMP01
and a CRC over the payload.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ACC_KEYS, ROW_KEYS, SurfaceState, Trajectory
from .errors import CheckpointError, ConfigError
from .grid import Grid
from .params import ControlParams, PhysicalParams

CHECKPOINT_MAGIC = b"WWDAMP01"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<IdQddd")   # version, t, N, L, h, lambda-reserved

ALL_VERIFIERS = ("C6bis", "C4", "d11", "CL8", "t49", "C14", "d7", "d8", "d20")


@dataclass
class RunConfig:
    """Validated run description with defaults filled in."""

    g: float
    kappa: float
    h: float
    L: float
    delta: float
    N: int
    T: float
    lam: float = 1.0
    M: int | None = None
    dt: float | None = None
    damping: bool = True
    initial: dict = field(default_factory=lambda: {"mode": 2, "amplitude_ratio": 0.01})
    output_cadence: float | None = None
    verifiers: tuple = ALL_VERIFIERS
    outdir: str = "wwdamp_run"
    seed: int = 0
    solver_rtol: float | None = None
    snapshots: bool = True

    def physical(self) -> PhysicalParams:
        return PhysicalParams(g=self.g, kappa=self.kappa, h=self.h, L=self.L)

    def control(self) -> ControlParams:
        return ControlParams(delta=self.delta, lam=self.lam)


_SCHEMA = {
    "g": float, "kappa": float, "h": float, "L": float, "delta": float,
    "N": int, "T": float, "lambda": float, "M": int, "dt": float,
    "damping": bool, "initial": dict, "output_cadence": float,
    "verifiers": (list, str), "outdir": str, "seed": int,
    "solver_rtol": float, "snapshots": bool,
}
_REQUIRED = ("g", "kappa", "h", "L", "delta", "N", "T")


def parse_config(doc: dict) -> RunConfig:
    """Validate a configuration document; unknown keys are rejected and
    every error names the offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top-level document must be an object")
    for key in doc:
        if key not in _SCHEMA:
            raise ConfigError(f"config: unknown key '{key}'")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(f"config.{key}: required key missing")
    clean = {}
    for key, value in doc.items():
        want = _SCHEMA[key]
        if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            clean[key] = float(value)
        elif want is int and isinstance(value, int) and not isinstance(value, bool):
            clean[key] = value
        elif want is bool and isinstance(value, bool):
            clean[key] = value
        elif want is dict and isinstance(value, dict):
            clean[key] = value
        elif want is str and isinstance(value, str):
            clean[key] = value
        elif isinstance(want, tuple) and isinstance(value, want):
            clean[key] = value
        else:
            raise ConfigError(f"config.{key}: expected {want}, got {type(value).__name__}")

    N = clean["N"]
    if N < 64 or (N & (N - 1)) != 0:
        raise ConfigError(f"config.N: must be a power of two >= 64, got {N}")
    for key in ("g", "h", "L", "T"):
        if clean[key] <= 0:
            raise ConfigError(f"config.{key}: must be positive")
    if clean["kappa"] < 0:
        raise ConfigError("config.kappa: must be nonnegative")
    if not 0 < clean["delta"] < clean["L"]:
        raise ConfigError("config.delta: must satisfy 0 < delta < L")
    if "lambda" in clean and clean["lambda"] <= 0:
        raise ConfigError("config.lambda: must be positive")
    if "dt" in clean and clean["dt"] is not None and clean["dt"] <= 0:
        raise ConfigError("config.dt: must be positive")
    if "M" in clean and clean["M"] < 8:
        raise ConfigError("config.M: must be at least 8")
    if "output_cadence" in clean and clean["output_cadence"] <= 0:
        raise ConfigError("config.output_cadence: must be positive")

    verifiers = clean.get("verifiers", "all")
    if verifiers == "all":
        verifiers = ALL_VERIFIERS
    elif verifiers == "none":
        verifiers = ()
    elif isinstance(verifiers, list):
        for tag in verifiers:
            if tag not in ALL_VERIFIERS:
                raise ConfigError(f"config.verifiers: unknown tag '{tag}'")
        verifiers = tuple(verifiers)
    else:
        raise ConfigError("config.verifiers: expected 'all', 'none' or a list of tags")

    initial = clean.get("initial", {"mode": 2, "amplitude_ratio": 0.01})
    if "state_file" in initial:
        extra = set(initial) - {"state_file"}
        if extra:
            raise ConfigError(f"config.initial: unexpected keys {sorted(extra)}")
        if not os.path.exists(initial["state_file"]):
            raise ConfigError(
                f"config.initial.state_file: no such file '{initial['state_file']}'")
    else:
        extra = set(initial) - {"mode", "amplitude_ratio"}
        if extra:
            raise ConfigError(f"config.initial: unexpected keys {sorted(extra)}")
        mode = initial.get("mode", 2)
        ratio = initial.get("amplitude_ratio", 0.01)
        if not isinstance(mode, int) or mode < 1:
            raise ConfigError("config.initial.mode: must be a positive integer")
        if not isinstance(ratio, (int, float)) or isinstance(ratio, bool):
            raise ConfigError("config.initial.amplitude_ratio: must be a number")
        if abs(ratio) >= 0.5:
            raise ConfigError(
                "config.initial.amplitude_ratio: |ratio| >= 0.5 puts the trough "
                "below -h/2")
        initial = {"mode": mode, "amplitude_ratio": float(ratio)}

    return RunConfig(
        g=clean["g"], kappa=clean["kappa"], h=clean["h"], L=clean["L"],
        delta=clean["delta"], N=N, T=clean["T"],
        lam=clean.get("lambda", 1.0), M=clean.get("M"),
        dt=clean.get("dt"), damping=clean.get("damping", True),
        initial=initial, output_cadence=clean.get("output_cadence"),
        verifiers=verifiers, outdir=clean.get("outdir", "wwdamp_run"),
        seed=clean.get("seed", 0), solver_rtol=clean.get("solver_rtol"),
        snapshots=clean.get("snapshots", True),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"config: cannot read '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in '{path}': {exc}") from exc
    return parse_config(doc)


# -- atomic writes -----------------------------------------------------------------


def atomic_write_bytes(path, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, doc: dict) -> None:
    atomic_write_text(
        path,
        json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n",
    )


# -- checkpoints ------------------------------------------------------------------


def checkpoint_bytes(state: SurfaceState, grid: Grid, h: float) -> bytes:
    header = _HEADER.pack(CHECKPOINT_VERSION, state.t, grid.N, grid.L, h, 0.0)
    payload = (np.ascontiguousarray(state.eta, dtype="<f8").tobytes()
               + np.ascontiguousarray(state.psi, dtype="<f8").tobytes())
    crc = struct.pack("<I", zlib.crc32(header + payload))
    return CHECKPOINT_MAGIC + header + payload + crc


def write_checkpoint(path, state: SurfaceState, grid: Grid, h: float) -> None:
    atomic_write_bytes(path, checkpoint_bytes(state, grid, h))


def read_checkpoint_record(buf: io.BufferedIOBase):
    """Read one checkpoint record; returns (t, N, L, h, eta, psi) or None at
    a clean end of stream."""
    magic = buf.read(len(CHECKPOINT_MAGIC))
    if len(magic) == 0:
        return None
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
    raw = buf.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    version, t, N, L, h, _ = _HEADER.unpack(raw)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if N == 0 or N > 1 << 24:
        raise CheckpointError(f"implausible grid size {N}")
    payload = buf.read(16 * N)
    if len(payload) != 16 * N:
        raise CheckpointError("truncated checkpoint payload")
    crc_raw = buf.read(4)
    if len(crc_raw) != 4:
        raise CheckpointError("missing checkpoint checksum")
    if struct.unpack("<I", crc_raw)[0] != zlib.crc32(raw + payload):
        raise CheckpointError("checkpoint checksum mismatch")
    data = np.frombuffer(payload, dtype="<f8")
    return t, int(N), L, h, data[:N].copy(), data[N:].copy()


def read_checkpoint(path):
    with open(path, "rb") as f:
        rec = read_checkpoint_record(f)
    if rec is None:
        raise CheckpointError("empty checkpoint file")
    return rec


def checkpoint_roundtrip(state: SurfaceState, grid: Grid, h: float, path):
    """Write then read back; the returned state is bit-identical."""
    write_checkpoint(path, state, grid, h)
    t, N, L, hh, eta, psi = read_checkpoint(path)
    if N != grid.N or L != grid.L or hh != h:
        raise CheckpointError("checkpoint geometry mismatch on readback")
    return SurfaceState(t, eta, psi)


def write_states(path, traj: Trajectory, h: float) -> None:
    """Concatenated checkpoint records for every stored sample."""
    chunks = [checkpoint_bytes(traj.state(i), traj.grid, h)
              for i in range(len(traj))]
    atomic_write_bytes(path, b"".join(chunks))


def read_states(path):
    out = []
    with open(path, "rb") as f:
        while True:
            rec = read_checkpoint_record(f)
            if rec is None:
                return out
            out.append(rec)


# -- trajectory CSV ------------------------------------------------------------------


def trajectory_csv_text(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_KEYS)
    for row in traj.rows:
        out = []
        for key in ROW_KEYS:
            val = row[key]
            if isinstance(val, bool):
                out.append("1" if val else "0")
            elif isinstance(val, (int, np.integer)):
                out.append(str(int(val)))
            else:
                out.append("%.17e" % val)
        writer.writerow(out)
    return buf.getvalue()


def write_trajectory_csv(path, traj: Trajectory) -> None:
    atomic_write_text(path, trajectory_csv_text(traj))
