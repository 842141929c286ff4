"""WOPM parameter checkpoint format.

Little-endian layout: magic "WOPM" (4 bytes), version u16, model kind u8,
parameter count u32, then per parameter: name length u16 + UTF-8 name,
shape rank u8 + dims u32 each, complex flag u8, f64 payload (interleaved
real/imaginary pairs for complex tensors). Round trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .autodiff import ParameterStore
from .errors import FormatError

WOPM_MAGIC = b"WOPM"
WOPM_VERSION = 1

MODEL_KINDS = {"fno": 1, "deeponet": 2}
_KIND_NAMES = {v: k for k, v in MODEL_KINDS.items()}

_HEADER = struct.Struct("<4sHBI")


def save_checkpoint(path, model_kind: str, params: ParameterStore) -> None:
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    chunks = [_HEADER.pack(WOPM_MAGIC, WOPM_VERSION, MODEL_KINDS[model_kind], len(params))]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        arr = tensor.data
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(struct.pack("<B", 1 if tensor.is_complex else 0))
        payload = np.ascontiguousarray(arr).view(np.float64) if tensor.is_complex else arr
        chunks.append(np.ascontiguousarray(payload, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def load_checkpoint(path) -> tuple[str, ParameterStore]:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise FormatError("file too short for WOPM header", offset=len(blob))
    magic, version, kind_byte, count = _HEADER.unpack_from(blob, 0)
    if magic != WOPM_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != WOPM_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if kind_byte not in _KIND_NAMES:
        raise FormatError(f"unknown model kind byte {kind_byte}", offset=6)
    params = ParameterStore()
    offset = _HEADER.size
    for i in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            if len(blob[offset : offset + name_len]) != name_len:
                raise struct.error("short name")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            (complex_flag,) = struct.unpack_from("<B", blob, offset)
            offset += 1
        except struct.error as exc:
            raise FormatError(
                f"truncated parameter record {i} of {count}: {exc}", offset=offset
            ) from None
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        n_floats = n_values * (2 if complex_flag else 1)
        end = offset + 8 * n_floats
        if end > len(blob):
            raise FormatError(
                f"truncated payload for parameter {name!r}", offset=offset
            )
        flat = np.frombuffer(blob, "<f8", n_floats, offset).copy()
        arr = flat.view(np.complex128) if complex_flag else flat
        params.add(name, arr.reshape(dims))
        offset = end
    if offset != len(blob):
        raise FormatError("trailing bytes after final parameter", offset=offset)
    return _KIND_NAMES[kind_byte], params
