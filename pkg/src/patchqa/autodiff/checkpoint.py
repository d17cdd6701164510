"""Binary container of named fp64 arrays.

Layout (all integers little-endian)::

    magic      4 bytes   b"PQCK"
    version    uint32    currently 1
    meta_len   uint32    length of the UTF-8 JSON metadata that follows
    meta       bytes
    count      uint32    number of arrays
    count times:
        name_len  uint32
        name      UTF-8 bytes
        rank      uint32
        dims      rank x uint64
        payload   prod(dims) x float64 (little-endian, row-major)

Arrays are written in sorted name order and the metadata with sorted keys,
so equal contents produce byte-identical files.
"""

import json
import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"PQCK"
VERSION = 1


def dumps(arrays, meta=None):
    parts = [MAGIC, struct.pack("<I", VERSION)]
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(meta_bytes)), meta_bytes, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(blob):
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        n = int(np.prod(dims, dtype=np.int64))
        arrays[name] = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(dims)
    if pos != len(view):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return arrays, meta


def save(path, arrays, meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(arrays, meta))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
