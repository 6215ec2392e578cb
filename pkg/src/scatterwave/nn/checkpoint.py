"""Binary checkpoints (``SWNN``) and CSV training logs."""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from ..errors import InputError

MAGIC = b"SWNN"
VERSION = 1


def state_to_bytes(state: dict[str, np.ndarray]) -> bytes:
    """Serialize named arrays as little-endian float32 records.

    Layout: magic, u32 version, then per tensor ``u32 name_len, name (utf-8),
    u32 ndim, u32 dims..., float32 data``; records run to end of file.
    """
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def state_from_bytes(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise InputError("not a SWNN checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise InputError(f"unsupported checkpoint version {version}")
    pos = 8
    state: dict[str, np.ndarray] = {}
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<I", data, pos)
            name = data[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (ndim,) = struct.unpack_from("<I", data, pos)
            dims = struct.unpack_from(f"<{ndim}I", data, pos + 4)
            pos += 4 + 4 * ndim
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * count > len(data):
                raise InputError(f"checkpoint truncated inside tensor {name!r}")
            state[name] = np.frombuffer(data, "<f4", count, pos).reshape(dims).astype(np.float32)
            pos += 4 * count
    except struct.error as exc:
        raise InputError(f"checkpoint truncated: {exc}") from None
    return state


def save_checkpoint(model, path) -> None:
    Path(path).write_bytes(state_to_bytes(model.store.state()))


def load_checkpoint(model, path):
    model.store.load_state(state_from_bytes(Path(path).read_bytes()))
    return model


LOG_FIELDS = ("epoch", "train_loss", "val_acc", "lr")


def write_training_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_acc), repr(r.lr)])


def read_training_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]),
             "val_acc": float(r["val_acc"]), "lr": float(r["lr"])} for r in rows]
