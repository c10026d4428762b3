"""Binary tensor container: magic "DRSL", version, then named array records.

Record layout (all integers little-endian):
    u32 path length | path bytes (utf-8) | u8 dtype tag | u32 rank |
    u64 dims[rank] | raw little-endian payload

Used for model checkpoints (EMA shadow under "ema/"), dataset blobs, and
cached slot sets.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from slotmvd.errors import ContractViolation

MAGIC = b"DRSL"
VERSION = 1

_DTYPE_TAGS: dict[int, np.dtype] = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i4"),
    4: np.dtype("<i8"),
    5: np.dtype("u1"),
}
_TAG_FOR_KIND = {np.dtype(k).str.lstrip("<>|="): tag for tag, k in _DTYPE_TAGS.items()}


def _tag_for(arr: np.ndarray) -> int:
    key = np.dtype(arr.dtype).str.lstrip("<>|=")
    if key not in _TAG_FOR_KIND:
        raise ContractViolation(f"unsupported dtype {arr.dtype} for container")
    return _TAG_FOR_KIND[key]


def write_container(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        tag = _tag_for(arr)
        le = arr.astype(_DTYPE_TAGS[tag], copy=False)
        pb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(pb)))
        buf.write(pb)
        buf.write(struct.pack("<BI", tag, arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<Q", d))
        buf.write(le.tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_container(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ContractViolation(f"{path}: bad magic, not a container file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise ContractViolation(f"{path}: unsupported container version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    n = len(raw)
    while pos < n:
        (plen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos : pos + plen].decode("utf-8")
        pos += plen
        tag, rank = struct.unpack_from("<BI", raw, pos)
        pos += 5
        dims = struct.unpack_from(f"<{rank}Q", raw, pos) if rank else ()
        pos += 8 * rank
        dtype = _DTYPE_TAGS.get(tag)
        if dtype is None:
            raise ContractViolation(f"{path}: unknown dtype tag {tag} in record '{name}'")
        count = int(np.prod(dims)) if rank else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).reshape(dims)
        pos += nbytes
        out[name] = arr.copy()
    return out


def encode_json(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode("utf-8"), dtype=np.uint8).copy()


def decode_json(arr: np.ndarray):
    return json.loads(bytes(arr.astype(np.uint8)).decode("utf-8"))
