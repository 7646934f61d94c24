"""
Tensor Store

TNSR binary tensor files and named-tensor checkpoint directories.

TNSR layout: magic b'TNSR', u8 version=1, u8 dtype=0 (f32), u8 ndim, u8 pad,
ndim x u32 LE dims, then the row-major f32 LE payload.

A checkpoint is a directory with manifest.txt (one `name<TAB>dims<TAB>file` line per
tensor, `# key=value` header lines for metadata) and one TNSR file per tensor.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from shared import AVSEError, CHECKPOINT_MANIFEST

logger = logging.getLogger('avse')

MAGIC = b'TNSR'
VERSION = 1
DTYPE_F32 = 0

PathLike = Union[str, Path]


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim == 0:
        array = array.reshape(1)
    if array.ndim > 255:
        raise TensorFormatError(f"Too many dimensions: {array.ndim}")
    header = MAGIC + struct.pack('<BBBB', VERSION, DTYPE_F32, array.ndim, 0)
    dims = struct.pack(f'<{array.ndim}I', *array.shape)
    payload = np.ascontiguousarray(array, dtype='<f4').tobytes()
    return header + dims + payload


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise TensorFormatError("Bad magic, not a TNSR file")
    version, dtype, ndim, _ = struct.unpack_from('<BBBB', blob, 4)
    if version != VERSION:
        raise TensorFormatError(f"Unsupported TNSR version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"Unsupported TNSR dtype code {dtype}")
    offset = 8 + 4 * ndim
    if len(blob) < offset:
        raise TensorFormatError("Truncated TNSR header")
    dims = struct.unpack_from(f'<{ndim}I', blob, 8)
    count = int(np.prod(dims)) if ndim else 0
    if len(blob) - offset != 4 * count:
        raise TensorFormatError(f"Payload holds {(len(blob) - offset) // 4} values, dims {dims} need {count}")
    return np.frombuffer(blob, dtype='<f4', count=count, offset=offset).reshape(dims).astype(np.float32)


def write_tensor(path: PathLike, array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))
    return path


def read_tensor(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise TensorFormatError(f"Tensor file not found: {path}")
    return decode_tensor(path.read_bytes())


# ============================================================================
# CHECKPOINTS
# ============================================================================

def _dims_str(shape: Tuple[int, ...]) -> str:
    return "x".join(str(d) for d in shape) if shape else "1"


def save_checkpoint(directory: PathLike, tensors: Dict[str, np.ndarray], meta: Dict[str, str]) -> Path:
    """Write tensors in insertion order plus `# key=value` metadata lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"# {k}={v}" for k, v in meta.items()]
    for name, array in tensors.items():
        filename = name.replace('/', '_') + ".tnsr"
        write_tensor(directory / filename, array)
        lines.append(f"{name}\t{_dims_str(np.shape(array))}\t{filename}")
    (directory / CHECKPOINT_MANIFEST).write_text("\n".join(lines) + "\n", encoding='utf-8')
    logger.debug(f"CKPT | saved {len(tensors)} tensors to {directory}")
    return directory


def load_checkpoint(directory: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    directory = Path(directory)
    manifest = directory / CHECKPOINT_MANIFEST
    if not manifest.exists():
        raise TensorFormatError(f"No {CHECKPOINT_MANIFEST} in {directory}")

    tensors: Dict[str, np.ndarray] = {}
    meta: Dict[str, str] = {}
    for lineno, line in enumerate(manifest.read_text(encoding='utf-8').splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith('#'):
            key, sep, value = line[1:].strip().partition('=')
            if sep:
                meta[key.strip()] = value.strip()
            continue
        parts = line.split('\t')
        if len(parts) != 3:
            raise TensorFormatError(f"{manifest}:{lineno}: expected name, dims, file")
        name, dims, filename = parts
        array = read_tensor(directory / filename)
        if _dims_str(array.shape) != dims:
            raise TensorFormatError(f"{manifest}:{lineno}: {name} has dims {_dims_str(array.shape)}, manifest says {dims}")
        tensors[name] = array
    return tensors, meta


class TensorFormatError(AVSEError):
    """Raised for malformed TNSR files or checkpoint manifests."""
    pass
