"""Parameter storage, deterministic initialization and the binary checkpoint format."""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor, get_dtype

MAGIC = b"SWR1"


class CheckpointError(Exception):
    pass


def init_array(seed: int, path: str, shape: tuple, scheme: str, dtype=None) -> np.ndarray:
    """Initial values as a pure function of (seed, path, shape, scheme)."""
    dtype = dtype or get_dtype()
    shape = tuple(int(s) for s in shape)
    rng = np.random.default_rng(np.random.SeedSequence(
        [seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(path.encode("utf-8")), *shape]))
    if scheme == "zeros":
        out = np.zeros(shape)
    elif scheme == "ones":
        out = np.ones(shape)
    elif scheme == "dense":
        bound = 1.0 / np.sqrt(shape[0])
        out = rng.uniform(-bound, bound, size=shape)
    elif scheme == "embedding":
        out = rng.normal(0.0, 0.01, size=shape)
    elif scheme == "unit_rows":
        out = rng.normal(size=shape)
        out /= np.linalg.norm(out, axis=-1, keepdims=True)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return out.astype(dtype)


class ParameterStore:
    """Ordered mapping from parameter path to tensor.

    Non-trainable entries (buffers such as cluster centroids) live in the same
    store so they are checkpointed, but are skipped by the optimizer and by
    ``count()``.
    """

    def __init__(self, seed: int = 0):
        self.rng_seed = int(seed)
        self.entries: dict[str, Tensor] = {}
        self.trainable: dict[str, bool] = {}

    def create(self, path: str, shape, scheme: str = "dense", trainable: bool = True) -> Tensor:
        if path in self.entries:
            raise KeyError(f"duplicate parameter path {path!r}")
        if any(int(s) <= 0 for s in shape):
            raise ValueError(f"parameter {path!r}: non-positive dimension in {tuple(shape)}")
        t = Tensor(init_array(self.rng_seed, path, shape, scheme), requires_grad=trainable, op=path)
        self.entries[path] = t
        self.trainable[path] = trainable
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self.entries[path]

    def __contains__(self, path: str) -> bool:
        return path in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    def trainable_items(self):
        return [(p, t) for p, t in self.entries.items() if self.trainable[p]]

    def count(self) -> int:
        return int(sum(t.data.size for p, t in self.entries.items() if self.trainable[p]))

    def zero_grad(self) -> None:
        for t in self.entries.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {p: t.data.copy() for p, t in self.entries.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if list(state) != list(self.entries):
            raise CheckpointError("checkpoint parameter paths do not match the model")
        for p, arr in state.items():
            t = self.entries[p]
            if arr.shape != t.data.shape:
                raise CheckpointError(f"parameter {p!r}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.astype(t.data.dtype, copy=True)


def save_checkpoint(store: ParameterStore, path) -> None:
    """Write ``SWR1`` | u32 manifest length | UTF-8 JSON manifest | raw little-endian arrays."""
    manifest = []
    blobs = []
    for p, t in store.items():
        code = {np.dtype(np.float32): "f4", np.dtype(np.float64): "f8"}[t.data.dtype]
        manifest.append({"path": p, "dtype": code, "shape": list(t.data.shape),
                         "trainable": store.trainable[p]})
        blobs.append(np.ascontiguousarray(t.data, dtype="<" + code).tobytes())
    head = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not an SWR1 checkpoint")
    if len(raw) < 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    try:
        manifest = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest ({exc})") from None
    offset = 8 + hlen
    out = {}
    for entry in manifest:
        dt = np.dtype("<" + entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated data for {entry['path']!r}")
        out[entry["path"]] = np.frombuffer(raw, dtype=dt, count=nbytes // dt.itemsize,
                                           offset=offset).reshape(shape).astype(dt.newbyteorder("="))
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return out
