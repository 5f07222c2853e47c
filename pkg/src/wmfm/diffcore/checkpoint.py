"""Binary checkpoint format.

Layout: the 8-byte magic ``WMFMCKPT``, a little-endian uint64 header length,
a UTF-8 JSON header, then the raw little-endian array bytes. The header
holds ``entries`` (name -> offset/shape/dtype, offsets relative to the start
of the data block) and a free-form ``meta`` object.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"WMFMCKPT"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays, meta=None):
    entries = {}
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        entries[name] = {"offset": offset, "shape": list(arr.shape), "dtype": le.dtype.str}
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "order": list(arrays.keys()),
        "entries": entries,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for raw in blobs:
            fh.write(raw)
    return path


def load_checkpoint(path):
    """Return ``(arrays, meta)`` with arrays in their saved order."""
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    data = memoryview(blob)[16 + hlen :]
    arrays = {}
    for name in header["order"]:
        e = header["entries"][name]
        dt = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(data, dtype=dt, count=count, offset=e["offset"]).reshape(e["shape"])
        arrays[name] = arr.astype(dt.newbyteorder("="), copy=True)
    return arrays, header["meta"]


def checksum(arrays) -> str:
    """SHA-256 over names and raw bytes, in iteration order."""
    h = hashlib.sha256()
    for name, arr in arrays.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
