"""Named parameter storage, initialisation and checkpoint I/O."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LATMOSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


class ParamSet:
    """Ordered name -> array map with a gradient buffer of identical shape.

    Names registered with ``frozen=True`` hold fixed feature maps: they are
    saved with the model but never handed to the optimizer.
    """

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, value: np.ndarray, frozen: bool = False) -> np.ndarray:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.ascontiguousarray(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        if frozen:
            self.frozen.add(name)
        return value

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def trainable(self) -> list[str]:
        return [k for k in self.values if k not in self.frozen]

    def count(self, prefix: str = "", include_frozen: bool = False) -> int:
        return sum(v.size for k, v in self.values.items()
                   if k.startswith(prefix) and (include_frozen or k not in self.frozen))

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.values.items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]):
        for k, v in snap.items():
            self.values[k][...] = v


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_out, fan_in))


# checkpoint layout: MAGIC | u32 version | u32 header_len | header JSON | raw float64 blobs

def save_params(params: ParamSet, path, meta: dict | None = None) -> None:
    entries = [{"name": k, "shape": list(v.shape), "frozen": k in params.frozen}
               for k, v in params.values.items()]
    header = json.dumps({"params": entries, "meta": meta or {}}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for k in params.values:
            fh.write(params.values[k].astype("<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray], set]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(raw) < 16:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[16:16 + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    offset = 16 + hlen
    values, frozen = {}, set()
    for e in header["params"]:
        n = int(np.prod(e["shape"], dtype=np.int64)) * 8
        if offset + n > len(raw):
            raise CheckpointError(f"truncated tensor {e['name']!r} at byte {offset}")
        values[e["name"]] = np.frombuffer(raw, dtype="<f8", count=n // 8, offset=offset).reshape(e["shape"]).copy()
        if e.get("frozen"):
            frozen.add(e["name"])
        offset += n
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes after last tensor")
    return header.get("meta", {}), values, frozen


def load_params_into(params: ParamSet, values: dict[str, np.ndarray]) -> None:
    if set(values) != set(params.values):
        missing = set(params.values) - set(values)
        extra = set(values) - set(params.values)
        raise CheckpointError(f"parameter names differ (missing={sorted(missing)}, extra={sorted(extra)})")
    for k, v in values.items():
        if v.shape != params.values[k].shape:
            raise CheckpointError(f"shape mismatch for {k!r}: {v.shape} vs {params.values[k].shape}")
        params.values[k][...] = v
