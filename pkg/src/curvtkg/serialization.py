"""Versioned binary container for named float/int arrays plus a JSON header.

Layout: magic (4 bytes) | format version (u32 LE) | header length (u64 LE) |
header (UTF-8 JSON, sorted keys) | raw little-endian array bytes | SHA-256 of
everything before it. The output depends only on the inputs, so saving the
same content twice gives identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"CVTK"
FORMAT_VERSION = 1
_DIGEST = 32


class ContainerError(ValueError):
    """Corrupt, truncated or incompatible container file."""


def dumps(kind: str, meta: Mapping, arrays: Mapping[str, np.ndarray]) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        if a.dtype.kind == "f":
            a = a.astype("<f8")
        elif a.dtype.kind in "iub":
            a = a.astype("<i8")
        else:
            raise TypeError(f"array {name}: unsupported dtype {a.dtype}")
        raw = np.ascontiguousarray(a).tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a container; returns (meta, arrays)."""
    fixed = len(MAGIC) + 12
    if len(blob) < fixed + _DIGEST:
        raise ContainerError("file is truncated")
    if blob[:4] != MAGIC:
        raise ContainerError("not a curvtkg container (bad magic)")
    version, hlen = struct.unpack("<IQ", blob[4:fixed])
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version} (expected {FORMAT_VERSION})")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if fixed + hlen > len(body):
        raise ContainerError("file is truncated")
    if hashlib.sha256(body).digest() != digest:
        raise ContainerError("checksum mismatch (file is corrupt or truncated)")
    try:
        header = json.loads(body[fixed:fixed + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"unreadable header: {exc}") from None
    if kind is not None and header.get("kind") != kind:
        raise ContainerError(f"expected a {kind!r} container, found {header.get('kind')!r}")
    data = body[fixed + hlen:]
    arrays = {}
    for e in header["arrays"]:
        raw = data[e["offset"]:e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise ContainerError(f"array {e['name']} is truncated")
        arrays[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header["meta"], arrays


def save(path, kind: str, meta: Mapping, arrays: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(kind, meta, arrays))


def load(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}") from None
    return loads(blob, kind)
