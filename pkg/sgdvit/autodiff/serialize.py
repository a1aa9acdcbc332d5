"""
Raw tensor files and checkpoints.

Raw tensor: b"SGDT", u8 version, u8 dtype (0=f32, 1=f64), u8 rank, one padding byte,
rank x u64 little-endian dims, then little-endian scalars.

Checkpoint: b"SGDCKPT1", u64 little-endian manifest length, the YAML manifest
(name -> offset/shape/dtype plus free-form metadata), then the raw tensors back to
back. Offsets count from the first byte after the manifest.
"""

from __future__ import annotations

import io
import struct
import logging

from typing import IO, Any, Dict, Tuple, Mapping

import numpy as np

from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

log = logging.getLogger(__name__)

MAGIC = b"SGDT"
VERSION = 1

CHECKPOINT_MAGIC = b"SGDCKPT1"

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}
_DTYPE_NAMES = {0: "f32", 1: "f64"}


class SerializationError(Exception):
    pass


def _yaml() -> YAML:
    yaml = YAML(typ="safe")
    yaml.default_flow_style = None

    return yaml


def write_tensor(f: IO[bytes], array: np.ndarray) -> int:
    array = np.asarray(array)
    if array.dtype not in _DTYPE_CODES:
        array = array.astype(np.float32)

    if array.ndim == 0:
        array = array.reshape(1)

    code = _DTYPE_CODES[array.dtype]
    header = MAGIC + struct.pack("<BBBx", VERSION, code, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)

    payload = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes(order="C")

    f.write(header)
    f.write(payload)

    return len(header) + len(payload)


def read_tensor(f: IO[bytes]) -> np.ndarray:
    head = f.read(8)
    if len(head) != 8 or head[:4] != MAGIC:
        raise SerializationError("not a raw tensor: bad magic")

    version, code, rank = struct.unpack("<BBBx", head[4:])
    if version != VERSION:
        raise SerializationError(f"unsupported raw tensor version {version}")

    if code not in _CODE_DTYPES:
        raise SerializationError(f"unknown dtype code {code}")

    shape = f.read(8 * rank)
    if len(shape) != 8 * rank:
        raise SerializationError("truncated raw tensor header")

    dims = struct.unpack(f"<{rank}Q", shape)
    dtype = _CODE_DTYPES[code].newbyteorder("<")

    count = int(np.prod(dims, dtype=np.int64))
    payload = f.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise SerializationError("truncated raw tensor payload")

    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(_CODE_DTYPES[code])


def save_tensor(path: str, array: np.ndarray) -> None:
    with open(path, "wb") as f:
        write_tensor(f, array)


def load_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor(f)


def save_checkpoint(
    path: str, tensors: Mapping[str, np.ndarray], metadata: Mapping[str, Any] = {}
) -> None:
    blob = io.BytesIO()
    entries: Dict[str, Any] = {}

    for name, array in tensors.items():
        offset = blob.tell()
        write_tensor(blob, array)

        entries[name] = {
            "offset": offset,
            "shape": [int(d) for d in np.shape(array)] or [1],
            "dtype": _DTYPE_NAMES[_DTYPE_CODES.get(np.asarray(array).dtype, 0)],
        }

    manifest_stream = io.StringIO()
    _yaml().dump({"format": VERSION, "metadata": dict(metadata), "tensors": entries}, manifest_stream)
    manifest = manifest_stream.getvalue().encode()

    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        f.write(blob.getvalue())

    log.debug(f"saved {len(entries)} tensors to {path}")


def read_manifest(path: str) -> Dict[str, Any]:
    with open(path, "rb") as f:
        manifest, _ = _read_manifest(f)

    return manifest


def _read_manifest(f: IO[bytes]) -> Tuple[Dict[str, Any], int]:
    if f.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise SerializationError("not a checkpoint: bad magic")

    head = f.read(8)
    if len(head) != 8:
        raise SerializationError("truncated checkpoint: no manifest length")

    (length,) = struct.unpack("<Q", head)
    raw = f.read(length)
    if len(raw) != length:
        raise SerializationError(f"truncated checkpoint: manifest has {len(raw)} of {length} bytes")

    try:
        manifest = _yaml().load(raw.decode())
    except (UnicodeDecodeError, YAMLError) as e:
        raise SerializationError(f"unreadable checkpoint manifest: {e}")

    if not isinstance(manifest, dict) or not isinstance(manifest.get("tensors"), dict):
        raise SerializationError("checkpoint manifest has no tensor table")

    for name, entry in manifest["tensors"].items():
        if not isinstance(entry, dict) or not {"offset", "shape"} <= entry.keys():
            raise SerializationError(f"{name}: manifest entry needs offset and shape")

    return manifest, len(CHECKPOINT_MAGIC) + 8 + length


def load_checkpoint(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    with open(path, "rb") as f:
        manifest, data_start = _read_manifest(f)

        tensors = {}
        for name, entry in manifest["tensors"].items():
            f.seek(data_start + entry["offset"])
            array = read_tensor(f)

            if list(array.shape) != list(entry["shape"]):
                raise SerializationError(
                    f"{name}: manifest shape {entry['shape']} != stored {list(array.shape)}"
                )

            tensors[name] = array

    return tensors, manifest.get("metadata") or {}
