"""Single-file checkpoints and full training-state capture.

Layout, all little-endian::

    b"DIPO" | uint32 version | uint64 n | n bytes of UTF-8 JSON | float64 payload

The JSON lists every array's name, shape and element offset into the payload,
the payload's byte length and CRC-32, plus free-form ``config`` and ``state``
objects.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..mathcore import MlpModel

MAGIC = b"DIPO"
VERSION = 1
_HEADER = struct.Struct("<4sIQ")
_F64 = np.dtype("<f8")


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class CorruptError(CheckpointError):
    """Metadata is unreadable or inconsistent, or the payload checksum fails."""


@dataclass
class Checkpoint:
    config: dict[str, Any] = field(default_factory=dict)
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    state: dict[str, Any] = field(default_factory=dict)
    version: int = VERSION


def save_checkpoint(path: str | Path, ck: Checkpoint) -> None:
    entries, chunks, offset = [], [], 0
    for name, arr in ck.arrays.items():
        a = np.asarray(arr, dtype=_F64)
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    payload = b"".join(chunks)
    meta = {
        "arrays": entries,
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
        "config": ck.config,
        "state": ck.state,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, ck.version, len(blob)))
        f.write(blob)
        f.write(payload)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path} is not a checkpoint (bad magic)")
    if len(data) < _HEADER.size:
        raise TruncatedError(f"{path} ends inside the header")
    _, version, n_meta = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"{path} has format version {version}, expected {VERSION}")
    start = _HEADER.size + n_meta
    if len(data) < start:
        raise TruncatedError(f"{path} ends inside the metadata")
    try:
        meta = json.loads(data[_HEADER.size:start].decode("utf-8"))
        entries = meta["arrays"]
        n_bytes = int(meta["payload_bytes"])
        crc = int(meta["payload_crc32"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise CorruptError(f"{path} has unreadable metadata: {e}") from None
    payload = data[start:]
    if len(payload) < n_bytes:
        raise TruncatedError(f"{path} payload has {len(payload)} bytes, expected {n_bytes}")
    if len(payload) > n_bytes:
        raise CorruptError(f"{path} has {len(payload) - n_bytes} trailing bytes")
    if zlib.crc32(payload) != crc:
        raise CorruptError(f"{path} payload checksum mismatch")
    flat = np.frombuffer(payload, dtype=_F64)
    arrays, expect = {}, 0
    for e in entries:
        shape = tuple(int(d) for d in e["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        if int(e["offset"]) != expect or expect + size > flat.size:
            raise CorruptError(f"{path} array {e['name']!r} has an inconsistent offset")
        arrays[e["name"]] = flat[expect:expect + size].reshape(shape).astype(np.float64)
        expect += size
    if expect != flat.size:
        raise CorruptError(f"{path} array table does not cover the payload")
    return Checkpoint(meta.get("config", {}), arrays, meta.get("state", {}), version)


# ------------------------------------------------------------ training state

def model_arrays(prefix: str, model: MlpModel) -> dict[str, np.ndarray]:
    out = {}
    for i, (p, m, v) in enumerate(zip(model.params, model.adam_m, model.adam_v)):
        out[f"{prefix}/param{i}"] = p
        out[f"{prefix}/adam_m{i}"] = m
        out[f"{prefix}/adam_v{i}"] = v
    return out


def load_model_arrays(prefix: str, model: MlpModel, arrays: dict[str, np.ndarray]) -> None:
    for i in range(len(model.params)):
        for store, key in ((model.params, "param"), (model.adam_m, "adam_m"), (model.adam_v, "adam_v")):
            src = arrays.get(f"{prefix}/{key}{i}")
            if src is None or src.shape != store[i].shape:
                raise CorruptError(f"checkpoint entry {prefix}/{key}{i} is missing or has the wrong shape")
            store[i][...] = src


def capture(agent, venv, buf, config: dict[str, Any], round_no: int) -> Checkpoint:
    """Everything needed to continue a run bit-for-bit."""
    arrays = {}
    models = agent.models()
    for name, model in models.items():
        arrays.update(model_arrays(name, model))
    for name, arr in buf.arrays().items():
        arrays[f"buffer/{name}"] = arr
    arrays["agent/recent"] = agent.recent.astype(np.float64)
    state = {
        "round": int(round_no),
        "adam_t": {name: m.adam_t for name, m in models.items()},
        "rng": agent.rng.get_state(),
        "stats": dict(agent.stats),
        "buffer": {"size": buf.size, "cursor": buf.cursor, "capacity": buf.capacity},
        "venv": venv.get_state(),
    }
    return Checkpoint(config, arrays, state)


def restore(ck: Checkpoint, agent, venv, buf) -> int:
    """Overwrite freshly built objects with a captured state; returns the round counter."""
    models = agent.models()
    try:
        for name, model in models.items():
            load_model_arrays(name, model, ck.arrays)
            model.adam_t = int(ck.state["adam_t"][name])
        if ck.state["buffer"]["capacity"] != buf.capacity:
            raise CorruptError("buffer capacity differs from the checkpoint")
        buf.load_arrays({f: ck.arrays[f"buffer/{f}"] for f in buf.FIELDS}, ck.state["buffer"]["cursor"])
        agent.recent = ck.arrays["agent/recent"].astype(np.int64)
        agent.rng.set_state(ck.state["rng"])
        agent.stats = dict(ck.state["stats"])
        venv.set_state(ck.state["venv"])
        return int(ck.state["round"])
    except KeyError as e:
        raise CorruptError(f"checkpoint is missing {e}") from None
