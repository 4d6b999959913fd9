"""
Binary field dumps (HNY1), CSV tables and JSON sidecars written by the CLI
"""
import csv
import json
import logging
import os
import struct
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from errors import ConfigError

logger = logging.getLogger(__name__)

MAGIC = b"HNY1"
VERSION = 1
HEADER = struct.Struct("<4sIBIIB")
DUMP_KINDS = {"maxwell": 0, "spinor": 1, "scalar": 2}
KIND_COMPONENTS = {0: 3, 1: 2, 2: 1}
SAMPLE_DTYPE = np.dtype("<c16")


@dataclass(frozen=True, eq=False)
class FieldDump:
    """A decoded dump; `data` keeps the stored (ncomp, ny, nx) layout"""
    kind: int
    data: NDArray

    @property
    def kind_name(self) -> str:
        return {v: k for k, v in DUMP_KINDS.items()}[self.kind]

    @property
    def fields(self) -> NDArray:
        """Components indexed [component, ix, iy] like the solvers' arrays."""
        return np.transpose(self.data, (0, 2, 1))


def _kind_code(kind) -> int:
    code = DUMP_KINDS.get(kind, kind) if isinstance(kind, str) else int(kind)
    if code not in KIND_COMPONENTS:
        raise ConfigError(f"Unknown dump kind '{kind}', expected one of {list(DUMP_KINDS)}")
    return code


def encode_dump(fields: NDArray, kind) -> bytes:
    """
    Header plus little-endian complex128 payload of shape (ncomp, ny, nx).

    Args:
        fields: (ncomp, nx, ny) solver array, or (nx, ny) for a scalar
        kind: maxwell, spinor or scalar (or the numeric code)
    """
    code = _kind_code(kind)
    fields = np.asarray(fields)
    if fields.ndim == 2:
        fields = fields[None]
    ncomp, nx, ny = fields.shape
    if ncomp != KIND_COMPONENTS[code]:
        raise ConfigError(f"Dump kind {code} needs {KIND_COMPONENTS[code]} components, got {ncomp}")
    payload = np.ascontiguousarray(np.transpose(fields, (0, 2, 1)), dtype=SAMPLE_DTYPE)
    return HEADER.pack(MAGIC, VERSION, code, nx, ny, ncomp) + payload.tobytes()


def decode_dump(raw: bytes) -> FieldDump:
    if len(raw) < HEADER.size:
        raise ConfigError(f"Dump truncated: {len(raw)} bytes is shorter than the header")
    magic, version, code, nx, ny, ncomp = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError(f"Not an HNY1 dump (magic {magic!r})")
    if version != VERSION:
        raise ConfigError(f"Unsupported dump version {version}")
    if KIND_COMPONENTS.get(code) != ncomp:
        raise ConfigError(f"Dump kind {code} inconsistent with {ncomp} components")
    expected = nx * ny * ncomp * SAMPLE_DTYPE.itemsize
    if len(raw) - HEADER.size != expected:
        raise ConfigError(f"Dump payload has {len(raw) - HEADER.size} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=SAMPLE_DTYPE, offset=HEADER.size).reshape(ncomp, ny, nx)
    return FieldDump(kind=code, data=data.astype(complex))


def write_dump(path: str, fields: NDArray, kind) -> str:
    raw = encode_dump(fields, kind)
    with open(path, "wb") as f:
        f.write(raw)
    logger.info(f"Wrote dump {path} ({len(raw)} bytes)")
    return path


def read_dump(path: str) -> FieldDump:
    if not os.path.exists(path):
        raise ConfigError(f"Dump not found: {path}")
    with open(path, "rb") as f:
        return decode_dump(f.read())


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _to_json(value: Any) -> Any:
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, np.ndarray):
        return _to_json(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.complexfloating):
        return [float(value.real), float(value.imag)]
    if isinstance(value, dict):
        return {str(k): _to_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_json(v) for v in value]
    return value


def write_json(path: str, payload: Any) -> str:
    with open(path, "w") as f:
        json.dump(_to_json(payload), f, indent=2)
    return path
