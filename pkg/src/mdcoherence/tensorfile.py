"""MDT1 tensor files and model checkpoints.

Layout (all little-endian)::

    magic   4 bytes  b"MDT1"
    version u16      1
    dtype   u8       0=f32, 1=f64, 2=complex f32 pairs, 3=complex f64 pairs
    ndim    u8
    dims    ndim x u32
    payload row-major
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from mdcoherence.errors import IoError, TensorFormatError
from mdcoherence.model import ArchSpec, ModelParams, param_layout

MAGIC = b"MDT1"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8"), 3: np.dtype("<c16")}
_CODES = {np.dtype(v).newbyteorder("="): k for k, v in DTYPES.items()}

CHECKPOINT_FORMAT = "mdl-checkpoint"
CHECKPOINT_VERSION = 1


def dtype_code(dtype) -> int:
    dt = np.dtype(dtype).newbyteorder("=")
    if dt not in _CODES:
        raise TensorFormatError(f"unsupported dtype {dtype}; use float32/float64/complex64/complex128")
    return _CODES[dt]


def encode_tensor(x: np.ndarray) -> bytes:
    x = np.asarray(x)
    code = dtype_code(x.dtype)
    if x.ndim > 255:
        raise TensorFormatError("at most 255 dimensions")
    if any(d >= 2**32 for d in x.shape):
        raise TensorFormatError("dimension does not fit in u32")
    header = MAGIC + struct.pack("<HBB", VERSION, code, x.ndim) + struct.pack(f"<{x.ndim}I", *x.shape)
    return header + np.ascontiguousarray(x, dtype=DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise TensorFormatError("not an MDT1 tensor (bad magic)")
    version, code, ndim = struct.unpack_from("<HBB", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported tensor version {version}")
    if code not in DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    off = 8 + 4 * ndim
    if len(buf) < off:
        raise TensorFormatError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", buf, 8)
    dt = DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(buf) - off != expected:
        raise TensorFormatError(f"payload is {len(buf) - off} bytes, header implies {expected}")
    return np.frombuffer(buf, dtype=dt, offset=off).reshape(dims).astype(dt.newbyteorder("="))


def write_tensor(path, x: np.ndarray) -> None:
    path = Path(path)
    try:
        path.write_bytes(encode_tensor(x))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}") from e


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}") from e
    return decode_tensor(buf)


def save_checkpoint(path, params: ModelParams, arch: ArchSpec, extra: dict | None = None) -> None:
    """Write ``path`` (flat f64 theta) plus ``path`` with a ``.json`` suffix describing it."""
    path = Path(path)
    write_tensor(path, params.theta)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": arch.to_dict(),
        "layout": [[n, list(s)] for n, s in params.layout],
    }
    if extra:
        meta["extra"] = extra
    try:
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path.with_suffix('.json')}: {e.strerror or e}") from e


def load_checkpoint(path) -> tuple[ModelParams, ArchSpec]:
    path = Path(path)
    try:
        meta = json.loads(path.with_suffix(".json").read_text())
    except OSError as e:
        raise IoError(f"cannot read {path.with_suffix('.json')}: {e.strerror or e}") from e
    if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
        raise TensorFormatError(f"{path}: unsupported checkpoint format {meta.get('format')} v{meta.get('version')}")
    arch = ArchSpec.from_dict(meta["arch"])
    layout = param_layout(arch)
    stored = [(n, tuple(s)) for n, s in meta["layout"]]
    if stored != layout:
        raise TensorFormatError(f"{path}: stored layout does not match its architecture")
    theta = read_tensor(path)
    if theta.dtype != np.float64 or theta.ndim != 1:
        raise TensorFormatError(f"{path}: checkpoint payload must be a 1-D float64 tensor")
    return ModelParams(layout, theta.copy()), arch
