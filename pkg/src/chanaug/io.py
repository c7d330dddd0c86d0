"""File formats: WAV audio and the MCTF tensor container.

MCTF layout (all integers little-endian)::

    offset  size      field
    0       4         magic  b"MCTF"
    4       2         version (u16) = 1
    6       1         dtype code (u8): 0=f32, 1=f64, 2=c64, 3=c128
    7       1         ndim (u8)
    8       8*ndim    dims (u64 each)
    ...               payload, row-major (C order), little-endian

Writes are atomic: data goes to a temporary file in the target directory
which is then renamed over the destination.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .spectral import Waveform

__all__ = [
    "TensorFileError",
    "MAGIC",
    "VERSION",
    "DTYPES",
    "write_tensor",
    "read_tensor",
    "tensor_to_bytes",
    "tensor_from_bytes",
    "read_wav",
    "write_wav",
    "write_json",
    "write_text",
    "atomic_open",
    "save_sf_weights",
    "load_sf_weights",
]

MAGIC = b"MCTF"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8"), 3: np.dtype("<c16")}
_CODES = {v: k for k, v in DTYPES.items()}
_DEFAULT_CODE = {"f": 1, "c": 3, "b": 0, "i": 1, "u": 1}


class TensorFileError(ValueError):
    pass


@contextmanager
def atomic_open(path, mode="wb"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def tensor_to_bytes(array, dtype=None) -> bytes:
    a = np.asarray(array)
    if dtype is None:
        dt = np.dtype(a.dtype).newbyteorder("<")
        code = _CODES.get(dt, _DEFAULT_CODE.get(a.dtype.kind))
        if code is None:
            raise TensorFileError(f"cannot store dtype {a.dtype} in a tensor file")
    else:
        code = _CODES.get(np.dtype(dtype).newbyteorder("<"))
        if code is None:
            raise TensorFileError(f"unsupported tensor dtype {dtype}")
    if a.ndim > 255:
        raise TensorFileError("too many dimensions")
    payload = np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes(order="C")
    header = MAGIC + struct.pack("<HBB", VERSION, code, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + payload


def tensor_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 8 or data[:4] != MAGIC:
        raise TensorFileError("bad magic: not an MCTF tensor file")
    version, code, ndim = struct.unpack_from("<HBB", data, 4)
    if version != VERSION:
        raise TensorFileError(f"unsupported MCTF version {version}")
    if code not in DTYPES:
        raise TensorFileError(f"unknown dtype code {code}")
    off = 8 + 8 * ndim
    if len(data) < off:
        raise TensorFileError("truncated header")
    dims = struct.unpack_from(f"<{ndim}Q", data, 8)
    dt = DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(data) - off != expected:
        raise TensorFileError(f"payload is {len(data) - off} bytes, header implies {expected}")
    return np.frombuffer(data, dtype=dt, offset=off).reshape(dims).copy()


def write_tensor(path, array, dtype=None):
    """Write ``array`` as MCTF. Without ``dtype``, real data is stored as f64
    (f32 stays f32) and complex as c128 (c64 stays c64)."""
    blob = tensor_to_bytes(array, dtype)
    with atomic_open(path) as fh:
        fh.write(blob)


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def read_wav(path) -> Waveform:
    """PCM16 (scaled to [-1, 1)) or float32 WAV -> Waveform (C, N)."""
    try:
        fs, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise ValueError(f"cannot read WAV {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype} in {path}")
    x = x[:, None] if x.ndim == 1 else x
    return Waveform(x.T, int(fs))


def write_wav(path, wave: Waveform, fmt: str = "float32"):
    x = wave.samples.T
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    with atomic_open(path) as fh:
        wavfile.write(fh, int(wave.sample_rate), data)


def write_text(path, text: str):
    with atomic_open(path, "w") as fh:
        fh.write(text)


def write_json(path, obj):
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_sf_weights(path, weights):
    """SF weights as one c128 tensor (F, D, C + 1); the last column is the bias."""
    write_tensor(path, np.concatenate([weights.w, weights.b[:, :, None]], axis=-1), np.complex128)


def load_sf_weights(path):
    from .sf import SfWeights

    t = read_tensor(path)
    if t.ndim != 3 or t.shape[-1] < 2:
        raise TensorFileError(f"SF weight tensor must be (F, D, C + 1), got {t.shape}")
    return SfWeights(t[:, :, :-1], t[:, :, -1])
