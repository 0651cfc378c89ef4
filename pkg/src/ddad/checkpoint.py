"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic      8 bytes   b"DDADCKPT"
    version    uint32
    header     uint32 length + UTF-8 JSON (network spec and metadata)
    count      uint32
    entries    count x [uint16 name length, name, uint8 ndim, ndim x uint32 dims,
                         prod(dims) x float64]
    checksum   32 bytes  SHA-256 of everything above

Arrays are stored as raw float64 so a round trip is bit-exact.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .models import Network, NetworkSpec

MAGIC = b"DDADCKPT"
VERSION = 1


class CheckpointVersionError(CheckpointError):
    pass


def _encode(net: Network, metadata: dict | None) -> bytes:
    header = json.dumps({"spec": net.spec.to_dict(), "metadata": metadata or {}},
                        sort_keys=True).encode()
    state = net.state_dict()
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(header)), header,
             struct.pack("<I", len(state))]
    for name, arr in state.items():
        raw = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(net: Network, path, metadata: dict | None = None) -> Path:
    atomic_write_bytes(path, _encode(net, metadata))
    return Path(path)


def read_checkpoint(path) -> tuple[Network, dict]:
    """Load a network and the metadata dict stored next to it."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 44 or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", body, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {VERSION}")
    (hlen,) = struct.unpack_from("<I", body, pos)
    pos += 4
    header = json.loads(body[pos:pos + hlen].decode())
    pos += hlen
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", body, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        state[name] = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
        pos += 8 * n
    if pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes after the last entry")
    net = Network(NetworkSpec.from_dict(header["spec"]))
    net.load_state_dict(state)
    return net, header.get("metadata", {})


def load_checkpoint(path) -> Network:
    return read_checkpoint(path)[0]
