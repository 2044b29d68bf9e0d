"""Parameter checkpoints.

Layout (little-endian)::

    magic       5 bytes  b"SWNM1"
    version     u16
    config_len  u32, config JSON (run config + K_c, K_s)
    n_entries   u32
    entries     n_entries x (name_len u16, name, ndim u8, shape u32[ndim], frozen u8)
    payload     float32 values of every entry, in table order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, from_dict, to_dict
from .model import SwanModel

MAGIC = b"SWNM1"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def checkpoint_bytes(model: SwanModel, cfg: RunConfig) -> bytes:
    snap = to_dict(cfg)
    snap["model"] = to_dict(model.cfg)
    snap["counts"] = {"K_c": model.K_c, "K_s": model.K_s}
    conf = json.dumps(snap, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<HI", VERSION, len(conf)), conf]
    params = list(model.named_parameters())
    out.append(struct.pack("<I", len(params)))
    for name, p in params:
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", p.dim()))
        out.append(struct.pack(f"<{p.dim()}I", *p.shape))
        out.append(struct.pack("<B", int(not p.requires_grad)))
    for _, p in params:
        out.append(p.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes())
    return b"".join(out)


def save_checkpoint(path: str | Path, model: SwanModel, cfg: RunConfig) -> int:
    blob = checkpoint_bytes(model, cfg)
    Path(path).write_bytes(blob)
    return len(blob)


def load_checkpoint(path: str | Path) -> tuple[SwanModel, RunConfig]:
    buf = Path(path).read_bytes()
    try:
        return _parse(buf)
    except struct.error as exc:
        raise CheckpointFormatError(f"truncated checkpoint: {exc}") from exc
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
        raise CheckpointFormatError(f"corrupt config snapshot: {exc}") from exc


def _parse(buf: bytes):
    if buf[:5] != MAGIC:
        raise CheckpointFormatError(f"bad magic {buf[:5]!r}")
    version, clen = struct.unpack_from("<HI", buf, 5)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}")
    off = 11
    snap = json.loads(buf[off:off + clen].decode())
    off += clen
    counts = snap.pop("counts")
    cfg = from_dict(snap)
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    table = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + ln].decode()
        off += ln
        (nd,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{nd}I", buf, off)
        off += 4 * nd
        (frozen,) = struct.unpack_from("<B", buf, off)
        off += 1
        table.append((name, shape, bool(frozen)))
    model = SwanModel(cfg.model, cfg.geometry, cfg.power, counts["K_c"], counts["K_s"])
    params = dict(model.named_parameters())
    if [t[0] for t in table] != list(params):
        raise CheckpointFormatError("parameter table does not match the configured model")
    for name, shape, frozen in table:
        size = int(np.prod(shape)) if shape else 1
        if off + 4 * size > len(buf):
            raise CheckpointFormatError(f"truncated payload at {name}")
        arr = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        p = params[name]
        if tuple(p.shape) != tuple(shape):
            raise CheckpointFormatError(f"shape mismatch for {name}")
        with torch.no_grad():
            p.copy_(torch.from_numpy(arr.copy()))
        p.requires_grad_(not frozen)
    if off != len(buf):
        raise CheckpointFormatError(f"{len(buf) - off} trailing bytes")
    return model, cfg
