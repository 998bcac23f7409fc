"""Binary checkpoint format.

Layout (little-endian)::

    b"IPPO"  u32 version
    repeated: u32 name_len, name (utf-8), u32 rank, rank x u32 dims, float32 values
    u32 crc32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .nets import NetConfig, NetworkParameters

MAGIC = b"IPPO"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(params: NetworkParameters) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, t in params.items():
        raw = name.encode("utf-8")
        data = np.ascontiguousarray(t.data, dtype="<f4")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 12:
        raise CheckpointError("truncated checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError("bad magic bytes")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("CRC mismatch")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    out = {}
    pos = 8
    try:
        while pos < len(body):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if pos + 4 * count > len(body):
                raise CheckpointError(f"truncated tensor {name!r}")
            data = np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(dims)
            pos += 4 * count
            out[name] = data.astype(np.float64)
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    return out


def save_checkpoint(params: NetworkParameters, path) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(params))
    return path


def load_checkpoint(path, config: NetConfig) -> NetworkParameters:
    """Read a checkpoint; ``config`` supplies the depth-map geometry."""
    arrays = decode_checkpoint(Path(path).read_bytes())
    params = NetworkParameters(((n, Tensor(a, requires_grad=True)) for n, a in arrays.items()), config)
    expected = {n: t.shape for n, t in _reference_shapes(config).items()}
    got = {n: a.shape for n, a in arrays.items()}
    if expected != got:
        raise CheckpointError("checkpoint tensors do not match the configured network")
    return params


def _reference_shapes(config: NetConfig):
    from .nets import init_params

    return init_params(config, zero=True)
