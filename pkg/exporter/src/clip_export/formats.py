"""Writers for the TCLP embedding-store and TCPM prompt-matrix formats.

Both formats are little-endian:
    TCLP: "TCLP", version u32=1, dimension u32, count u32,
          records of { id_len u16, id (UTF-8, no NUL), d x f32 }.
    TCPM: "TCPM", version u32=1, M u32, d_tau u32, count u32,
          records of { id_len u16, id, M*d_tau x f32 row-major }.
A sidecar JSON (same stem, ".json") records the model used for the export.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np


class ExportFormatError(ValueError):
    """The records cannot be represented in the target format."""


def _encode_id(record_id: str, label: str) -> bytes:
    raw = record_id.encode("utf-8")
    if not raw:
        raise ExportFormatError(f"{label}: record id must be non-empty")
    if b"\x00" in raw:
        raise ExportFormatError(f"{label}: record id must not contain NUL")
    if len(raw) > 0xFFFF:
        raise ExportFormatError(f"{label}: record id longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def _check_unique(ids: Sequence[str], label: str) -> None:
    seen = set()
    for record_id in ids:
        if record_id in seen:
            raise ExportFormatError(f"{label}: duplicate id {record_id!r}")
        seen.add(record_id)


def write_tclp(path, ids: Sequence[str], vectors: np.ndarray) -> None:
    """Write one f32 vector per id."""
    path = Path(path)
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ExportFormatError(f"{path}: need one vector per id, got {vectors.shape}")
    if vectors.shape[1] == 0:
        raise ExportFormatError(f"{path}: embedding dimension must be nonzero")
    if not np.all(np.isfinite(vectors)):
        raise ExportFormatError(f"{path}: vectors contain non-finite values")
    _check_unique(ids, str(path))
    blob = bytearray(b"TCLP")
    blob += struct.pack("<III", 1, vectors.shape[1], len(ids))
    for record_id, vector in zip(ids, vectors):
        blob += _encode_id(record_id, str(path))
        blob += vector.astype("<f4").tobytes()
    path.write_bytes(bytes(blob))


def write_tcpm(path, ids: Sequence[str], matrices: np.ndarray) -> None:
    """Write one f32 [M, d_tau] matrix per id."""
    path = Path(path)
    matrices = np.asarray(matrices, dtype=np.float64)
    if matrices.ndim != 3 or matrices.shape[0] != len(ids):
        raise ExportFormatError(f"{path}: need one [M, d_tau] matrix per id, got {matrices.shape}")
    _, m_rows, d_tau = matrices.shape
    if m_rows == 0 or d_tau == 0:
        raise ExportFormatError(f"{path}: matrix dimensions must be nonzero")
    if not np.all(np.isfinite(matrices)):
        raise ExportFormatError(f"{path}: matrices contain non-finite values")
    _check_unique(ids, str(path))
    blob = bytearray(b"TCPM")
    blob += struct.pack("<IIII", 1, m_rows, d_tau, len(ids))
    for record_id, matrix in zip(ids, matrices):
        blob += _encode_id(record_id, str(path))
        blob += np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    path.write_bytes(bytes(blob))


def write_sidecar(path, model: str, notes: str) -> None:
    Path(path).with_suffix(".json").write_text(
        json.dumps({"model": model, "notes": notes}, sort_keys=True, indent=2) + "\n"
    )
