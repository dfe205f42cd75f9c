"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"PRLB"                         magic
    u16  version                    FORMAT_VERSION
    u32  n, n bytes                 JSON architecture header (input_shape, seed, layers)
    u32  tensor count
    per tensor:
        u16 len, utf-8 name
        u8  ndim, u32 * ndim dims
        f64 * prod(dims)            row-major values
        u8  has_mask
        ceil(prod(dims) / 8) bytes  mask bitset (LSB-first), only if has_mask
    u32  crc32 of everything above
"""

import json
import struct
import zlib

import numpy as np

from ..errors import FormatError
from .layers import LayerSpec
from .network import Network

MAGIC = b"PRLB"
FORMAT_VERSION = 1


def save_checkpoint(net: Network) -> bytes:
    header = json.dumps(
        {"input_shape": list(net.input_shape), "seed": net.seed, "layers": [s.to_dict() for s in net.specs]},
        sort_keys=True, separators=(",", ":"),
    ).encode()
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<I", len(header)), header]
    params = net.params()
    parts.append(struct.pack("<I", len(params)))
    for name, t in params.items():
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", t.values.ndim) + struct.pack(f"<{t.values.ndim}I", *t.shape))
        parts.append(t.values.astype("<f8").tobytes())
        mask = net.masks.get(name)
        if mask is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01" + np.packbits(mask.ravel(), bitorder="little").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"checkpoint truncated at offset {self.pos} while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(payload: bytes) -> Network:
    if len(payload) < 10 or payload[:4] != MAGIC:
        raise FormatError("not a PRLB checkpoint (bad magic at offset 0)")
    body, (crc,) = payload[:-4], struct.unpack("<I", payload[-4:])
    r = _Reader(body)
    r.take(4, "magic")
    (version,) = r.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at offset 4 (expected {FORMAT_VERSION})")
    if zlib.crc32(body) != crc:
        raise FormatError(f"checkpoint checksum mismatch at offset {len(body)}")
    (hlen,) = r.unpack("<I", "header length")
    try:
        header = json.loads(r.take(hlen, "header").decode())
        specs = [LayerSpec(**d) for d in header["layers"]]
        net = Network(specs, header["input_shape"], header["seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"invalid architecture header at offset 10: {exc}") from exc
    params = net.params()
    (count,) = r.unpack("<I", "tensor count")
    if count != len(params):
        raise FormatError(f"tensor count {count} does not match architecture ({len(params)})")
    for _ in range(count):
        (nlen,) = r.unpack("<H", "name length")
        name = r.take(nlen, "name").decode()
        if name not in params:
            raise FormatError(f"unknown tensor {name!r} at offset {r.pos}")
        t = params[name]
        (ndim,) = r.unpack("<B", "ndim")
        shape = r.unpack(f"<{ndim}I", "dims")
        if tuple(shape) != t.shape:
            raise FormatError(f"tensor {name!r} has shape {shape}, architecture expects {t.shape}")
        t.values[...] = np.frombuffer(r.take(8 * t.size, f"{name} values"), dtype="<f8").reshape(shape)
        (has_mask,) = r.unpack("<B", "mask flag")
        if has_mask not in (0, 1):
            raise FormatError(f"bad mask flag {has_mask} at offset {r.pos - 1}")
        if has_mask:
            bits = np.frombuffer(r.take((t.size + 7) // 8, f"{name} mask"), dtype=np.uint8)
            net.masks[name] = np.unpackbits(bits, count=t.size, bitorder="little").astype(bool).reshape(shape)
    if r.pos != len(body):
        raise FormatError(f"{len(body) - r.pos} trailing bytes at offset {r.pos}")
    return net
