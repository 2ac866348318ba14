"""The VTCT attention-trace container.

Layout, all integers little-endian::

    b"VTCT" | u32 version (=1) | u64 header length | UTF-8 JSON header | f32 payload

The payload is row-major float32.  Encoder traces are ordered
``(layer, head, visual)`` and hold the CLS token's attention at every visual
position; decoder traces are ordered ``(layer, head, output, visual)`` and hold
each output token's attention at the visual positions.  Values are
post-softmax probabilities.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import (
    CorruptPayload,
    FormatError,
    InvalidTrace,
    IoError,
    RangeError,
    RoleError,
    UnsupportedVersion,
)

MAGIC = b"VTCT"
VERSION = 1
VALUE_TOL = 1e-6
SLICE_SUM_TOL = 1e-5

_PREAMBLE = struct.Struct("<4sIQ")
_HEADER_KEYS = (
    "role",
    "num_layers",
    "num_heads",
    "num_visual_tokens",
    "num_output_tokens",
    "dtype",
    "array_order",
)


class Role(str, Enum):
    ENCODER = "encoder"
    DECODER = "decoder"


ARRAY_ORDER = {
    Role.ENCODER: "layer,head,visual",
    Role.DECODER: "layer,head,output,visual",
}


@dataclass(frozen=True, eq=False)
class AttentionTrace:
    """Attention rows restricted to the visual-token positions.

    ``attention`` is float32 with shape ``(L, H, N_v)`` for encoder traces and
    ``(L, H, O, N_v)`` for decoder traces.  Construction validates the array;
    use :meth:`encoder` / :meth:`decoder` for the common cases.
    """

    role: Role
    attention: np.ndarray

    def __post_init__(self):
        role = Role(self.role)
        object.__setattr__(self, "role", role)
        arr = np.ascontiguousarray(self.attention, dtype=np.float32)
        arr.setflags(write=False)
        object.__setattr__(self, "attention", arr)
        want = 3 if role is Role.ENCODER else 4
        if arr.ndim != want:
            raise InvalidTrace(f"{role.value} trace needs a {want}-d array, got shape {arr.shape}")
        if any(s < 1 for s in arr.shape):
            raise InvalidTrace(f"all trace dimensions must be positive, got {arr.shape}")
        check_values(arr)

    @classmethod
    def encoder(cls, attention) -> "AttentionTrace":
        return cls(Role.ENCODER, attention)

    @classmethod
    def decoder(cls, attention) -> "AttentionTrace":
        return cls(Role.DECODER, attention)

    @property
    def num_layers(self) -> int:
        return self.attention.shape[0]

    @property
    def num_heads(self) -> int:
        return self.attention.shape[1]

    @property
    def num_visual_tokens(self) -> int:
        return self.attention.shape[-1]

    @property
    def num_output_tokens(self) -> int:
        return self.attention.shape[2] if self.role is Role.DECODER else 0

    def header(self) -> dict:
        return {
            "role": self.role.value,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "num_visual_tokens": self.num_visual_tokens,
            "num_output_tokens": self.num_output_tokens,
            "dtype": "f32",
            "array_order": ARRAY_ORDER[self.role],
        }

    def require(self, role: Role) -> "AttentionTrace":
        if self.role is not role:
            raise RoleError(f"expected {role.value} trace, got {self.role.value}")
        return self

    def __eq__(self, other):
        if not isinstance(other, AttentionTrace):
            return NotImplemented
        return (
            self.role is other.role
            and self.attention.shape == other.attention.shape
            and self.attention.tobytes() == other.attention.tobytes()
        )

    __hash__ = None


def check_values(arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise RangeError("attention contains NaN or Inf")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -VALUE_TOL or hi > 1.0 + VALUE_TOL:
        raise RangeError(f"attention values must lie in [0, 1], found range [{lo}, {hi}]")
    worst = float(arr.sum(axis=-1, dtype=np.float64).max())
    if worst > 1.0 + SLICE_SUM_TOL:
        raise RangeError(f"a visual-position slice sums to {worst}, more than a full softmax row")


def _payload_shape(header: dict) -> tuple[int, ...]:
    try:
        role = Role(header["role"])
        dims = [int(header[k]) for k in ("num_layers", "num_heads", "num_visual_tokens")]
        n_out = int(header["num_output_tokens"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed header: {exc}") from None
    if header.get("dtype") != "f32":
        raise FormatError(f"unsupported dtype {header.get('dtype')!r}")
    if header.get("array_order") != ARRAY_ORDER[role]:
        raise FormatError(f"unexpected array_order {header.get('array_order')!r}")
    if any(d < 1 for d in dims):
        raise FormatError(f"non-positive dimension in header: {dims}")
    L, H, N = dims
    if role is Role.ENCODER:
        if n_out != 0:
            raise FormatError("encoder header must have num_output_tokens = 0")
        return (L, H, N)
    if n_out < 1:
        raise FormatError("decoder header needs num_output_tokens >= 1")
    return (L, H, n_out, N)


def encode_trace(trace: AttentionTrace) -> bytes:
    header = json.dumps({k: trace.header()[k] for k in _HEADER_KEYS}, separators=(",", ":"))
    hb = header.encode("utf-8")
    payload = trace.attention.astype("<f4", copy=False).tobytes(order="C")
    return _PREAMBLE.pack(MAGIC, VERSION, len(hb)) + hb + payload


def decode_trace(data: bytes) -> AttentionTrace:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}")
    if len(data) < _PREAMBLE.size:
        raise CorruptPayload("file too short for a VTCT preamble")
    _, version, header_len = _PREAMBLE.unpack_from(data, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"VTCT version {version} is not supported (expected {VERSION})")
    start = _PREAMBLE.size
    if start + header_len > len(data):
        raise CorruptPayload("header length runs past end of file")
    try:
        header = json.loads(data[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid UTF-8 JSON: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object")
    shape = _payload_shape(header)
    expected = int(np.prod(shape)) * 4
    body = memoryview(data)[start + header_len :]
    if len(body) < expected:
        raise CorruptPayload(f"payload has {len(body)} bytes, header implies {expected}")
    if len(body) > expected:
        raise FormatError(f"{len(body) - expected} trailing bytes after payload")
    arr = np.frombuffer(body, dtype="<f4", count=int(np.prod(shape))).reshape(shape)
    return AttentionTrace(Role(header["role"]), arr.astype(np.float32))


def write_trace(trace: AttentionTrace, destination: str | os.PathLike | BinaryIO) -> int:
    """Serialise ``trace`` to a path or writable binary stream; returns bytes written."""
    blob = encode_trace(trace)
    try:
        if isinstance(destination, (str, os.PathLike)):
            Path(destination).write_bytes(blob)
        else:
            destination.write(blob)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return len(blob)


def read_trace(source: str | os.PathLike | BinaryIO | bytes) -> AttentionTrace:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return decode_trace(bytes(source))
    try:
        if isinstance(source, (str, os.PathLike)):
            data = Path(source).read_bytes()
        else:
            data = source.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return decode_trace(data)

