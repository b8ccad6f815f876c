"""Portable checkpoint container.

Layout::

    b"MIGTF1\\n"
    uint64 little-endian header length
    header: UTF-8 JSON (sorted keys, compact separators)
    tensor payloads: little-endian float32, in header order

Every tensor entry in the header carries ``name``, ``shape`` and ``offset``
(bytes from the start of the payload section).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointFormatError, CheckpointIntegrityError

MAGIC = b"MIGTF1\n"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    header: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def model_kind(self) -> str:
        return self.header["model_kind"]

    def tensor_bytes(self, prefix: str = "") -> bytes:
        """Concatenated payload bytes of tensors whose name starts with ``prefix``."""
        return b"".join(np.ascontiguousarray(v, dtype=_DTYPE).tobytes()
                        for k, v in self.tensors.items() if k.startswith(prefix))


def _encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _layout(tensors):
    entries, offset = [], 0
    for name, arr in tensors.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += int(np.prod(arr.shape, dtype=np.int64)) * _DTYPE.itemsize
    return entries, offset


# dims expected per tensor name; None means "take from the header field"
_EXPECTED = {
    "tucker.E": ("n_entities", "d_e"),
    "tucker.R": ("n_relations", "d_r"),
    "tucker.core": ("d_e", "d_e", "d_r"),
    "tptf.E": ("n_entities", "d_h"),
    "tptf.T": ("n_relations", "d_h"),
}


def _check_dims(header, name, shape):
    spec = _EXPECTED.get(name)
    if spec is None:
        if name.startswith("tucker.bn"):
            spec = ("d_e",)
        else:
            return
    dims = dict(header.get("dims", {}))
    dims["n_entities"] = header.get("n_entities")
    dims["n_relations"] = header.get("n_relations")
    expected = [dims.get(k) for k in spec]
    if list(shape) != expected:
        raise CheckpointIntegrityError(
            f"tensor {name} has shape {list(shape)} but header dims imply {expected}")


def to_bytes(ckpt: Checkpoint) -> bytes:
    header = {k: v for k, v in ckpt.header.items() if k != "tensors"}
    header["format_version"] = FORMAT_VERSION
    entries, _ = _layout(ckpt.tensors)
    header["tensors"] = entries
    for entry in entries:
        _check_dims(header, entry["name"], entry["shape"])
    raw = _encode_header(header)
    return MAGIC + struct.pack("<Q", len(raw)) + raw + ckpt.tensor_bytes()


def from_bytes(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise CheckpointFormatError("bad magic bytes: not a MIGTF1 checkpoint")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise CheckpointFormatError("truncated checkpoint header")
    (n,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    if len(blob) < pos + n:
        raise CheckpointFormatError("truncated checkpoint header")
    try:
        header = json.loads(blob[pos:pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint header: {exc}") from exc
    pos += n
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported format version {header.get('format_version')}")
    payload = memoryview(blob)[pos:]
    tensors = {}
    expected_offset = 0
    for entry in header.get("tensors", []):
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if offset != expected_offset:
            raise CheckpointIntegrityError(f"tensor {name} has offset {offset}, expected {expected_offset}")
        _check_dims(header, name, shape)
        size = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if offset + size > len(payload):
            raise CheckpointFormatError(f"truncated payload while reading tensor {name}")
        arr = np.frombuffer(payload[offset:offset + size], dtype=_DTYPE).reshape(shape)
        tensors[name] = arr.astype(np.float32)
        expected_offset = offset + size
    if expected_offset != len(payload):
        raise CheckpointIntegrityError(
            f"payload has {len(payload)} bytes, header describes {expected_offset}")
    return Checkpoint(header, tensors)


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    blob = to_bytes(ckpt)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise CheckpointFormatError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
