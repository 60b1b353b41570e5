"""Binary file formats (little-endian throughout).

Field ("FLD1"):   magic, u32 rows, u32 cols, rows*cols f64 row-major.
Snapshot set:     consecutive FLD1 records (one per saved step) plus a JSON
                  sidecar with the solver parameters and step indices.
Tensor container: 4-byte magic, u32 version, u32 header length n, n u32
                  header words, then f64 tensors back to back.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .shallow_water import SnapshotSet, SweParams

FIELD_MAGIC = b"FLD1"
CONTAINER_VERSION = 1


class FormatError(ValueError):
    pass


def field_bytes(field: np.ndarray) -> bytes:
    field = np.asarray(field, dtype="<f8")
    if field.ndim != 2:
        raise ValueError("field must be 2-D")
    rows, cols = field.shape
    return FIELD_MAGIC + struct.pack("<II", rows, cols) + np.ascontiguousarray(field).tobytes()


def write_field(path: str | Path, field: np.ndarray) -> None:
    Path(path).write_bytes(field_bytes(field))


def _parse_fields(buf: bytes) -> list[np.ndarray]:
    out, pos = [], 0
    while pos < len(buf):
        if buf[pos : pos + 4] != FIELD_MAGIC:
            raise FormatError(f"bad field magic at byte {pos}")
        rows, cols = struct.unpack_from("<II", buf, pos + 4)
        start = pos + 12
        end = start + 8 * rows * cols
        if end > len(buf):
            raise FormatError("truncated field record")
        out.append(np.frombuffer(buf[start:end], dtype="<f8").reshape(rows, cols).astype(float))
        pos = end
    return out


def read_field(path: str | Path) -> np.ndarray:
    fields = _parse_fields(Path(path).read_bytes())
    if len(fields) != 1:
        raise FormatError(f"expected one field record, found {len(fields)}")
    return fields[0]


def read_fields(path: str | Path) -> list[np.ndarray]:
    return _parse_fields(Path(path).read_bytes())


def write_snapshots(path: str | Path, snaps: SnapshotSet) -> None:
    path = Path(path)
    path.write_bytes(b"".join(field_bytes(f) for f in snaps.fields))
    meta = {"params": asdict(snaps.params), "times": [int(t) for t in snaps.times]}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_snapshots(path: str | Path) -> SnapshotSet:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    p = meta["params"]
    p["grid"] = tuple(p["grid"])
    if p.get("cylinder_center") is not None:
        p["cylinder_center"] = tuple(p["cylinder_center"])
    fields = read_fields(path)
    stack = np.stack(fields) if fields else np.empty((0, *p["grid"]))
    return SnapshotSet(SweParams(**p), np.array(meta["times"]), stack)


def write_container(path: str | Path, magic: bytes, header: list[int], tensors: list[np.ndarray]) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    parts = [magic, struct.pack("<II", CONTAINER_VERSION, len(header)), struct.pack(f"<{len(header)}I", *header)]
    parts += [np.ascontiguousarray(t, dtype="<f8").tobytes() for t in tensors]
    Path(path).write_bytes(b"".join(parts))


def read_container(path: str | Path, magic: bytes) -> tuple[list[int], np.ndarray]:
    """Header words and the flat f64 payload; callers slice tensors by shape."""
    buf = Path(path).read_bytes()
    if buf[:4] != magic:
        raise FormatError(f"expected magic {magic!r}, found {buf[:4]!r}")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported version {version}")
    header = list(struct.unpack_from(f"<{n}I", buf, 12))
    payload = np.frombuffer(buf[12 + 4 * n :], dtype="<f8").astype(float)
    return header, payload


def save_pod(path: str | Path, basis) -> None:
    dim, q = basis.modes.shape
    header = [dim, q, basis.singular_values.size, basis.n_state]
    write_container(path, b"PODB", header, [basis.modes, basis.singular_values])


def load_pod(path: str | Path):
    from .rom import PodBasis

    (dim, q, n_sv, n_state), payload = read_container(path, b"PODB")
    if payload.size != dim * q + n_sv:
        raise FormatError("POD payload size does not match header")
    return PodBasis(payload[: dim * q].reshape(dim, q).copy(), payload[dim * q :].copy(), n_state)
