"""
Persistent outputs: diagnostics CSV, HVBK1 snapshots, JSON reports and the frozen-constant fixture
"""
import csv
import json
import logging
import os
import struct
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.core.config import get_settings
from app.core.errors import ConsistencyError, ResolutionError
from app.models.schemas import DIAGNOSTICS_COLUMNS, DiagnosticsRecord
from app.services.dynamics import FluidState
from app.services.spectral import SpectralField

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"HVBK1"
SNAPSHOT_FIELDS = ("u_s", "u_n", "omega_s", "omega_n")


@dataclass
class Snapshot:
    """Fields restored from an HVBK1 file"""
    N: int
    M: int
    fields: Dict[str, SpectralField]


def get_output_dir(output_dir: Optional[str] = None) -> str:
    """
    Resolve and create the output directory

    Returns:
        str: Directory path
    """
    path = output_dir or get_settings().OUTPUT_DIRECTORY
    os.makedirs(path, exist_ok=True)
    return path


def snapshot_fields(state: FluidState) -> Dict[str, SpectralField]:
    u_s, u_n = state.velocities()
    return dict(zip(SNAPSHOT_FIELDS, (u_s, u_n, state.omega_s, state.omega_n)))


def write_snapshot(path: str, fields: Dict[str, SpectralField], M: Optional[int] = None) -> None:
    """
    Write an HVBK1 snapshot

    Layout: magic b"HVBK1", little-endian uint32 N, M and field count, then per
    field a uint16 name length and the utf-8 name, then per field the complex128
    cube ordered (k1, k2, k3, component).
    """
    if not fields:
        raise ConsistencyError("Snapshot needs at least one field")
    N = next(iter(fields.values())).N
    for name, f in fields.items():
        if f.N != N:
            raise ResolutionError(f"Snapshot field {name} has N={f.N}, expected {N}")
    M = M or 2 * N + 1

    with open(path, "wb") as handle:
        handle.write(SNAPSHOT_MAGIC)
        handle.write(struct.pack("<III", N, M, len(fields)))
        for name in fields:
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
        for f in fields.values():
            cube = np.ascontiguousarray(np.transpose(f.coeffs, (1, 2, 3, 0)), dtype="<c16")
            handle.write(cube.tobytes())
    logger.debug(f"Snapshot written: {path} (N={N}, fields={list(fields)})")


def read_snapshot(path: str) -> Snapshot:
    """
    Read an HVBK1 snapshot back into bit-identical fields

    Raises:
        ConsistencyError: On a wrong magic or a truncated file
    """
    with open(path, "rb") as handle:
        data = handle.read()

    if not data.startswith(SNAPSHOT_MAGIC):
        raise ConsistencyError(f"{path} is not an HVBK1 snapshot")
    offset = len(SNAPSHOT_MAGIC)
    try:
        N, M, count = struct.unpack_from("<III", data, offset)
        offset += struct.calcsize("<III")
        names = []
        for _ in range(count):
            (length,) = struct.unpack_from("<H", data, offset)
            offset += 2
            names.append(data[offset:offset + length].decode("utf-8"))
            offset += length
    except struct.error as e:
        raise ConsistencyError(f"Truncated snapshot header in {path}: {e}")

    n = 2 * N + 1
    size = 3 * n ** 3 * 16
    if len(data) != offset + count * size:
        raise ConsistencyError(f"Snapshot {path} has {len(data)} bytes, expected {offset + count * size}")

    fields = {}
    for name in names:
        cube = np.frombuffer(data, dtype="<c16", count=3 * n ** 3, offset=offset).reshape(n, n, n, 3)
        fields[name] = SpectralField(np.transpose(cube, (3, 0, 1, 2)).astype(np.complex128), N)
        offset += size
    return Snapshot(N=N, M=M, fields=fields)


def write_diagnostics_csv(path: str, records: Sequence[DiagnosticsRecord]) -> None:
    """Fixed-header CSV, one row per record, floats in repr form"""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=DIAGNOSTICS_COLUMNS)
        writer.writeheader()
        for record in records:
            writer.writerow({k: repr(float(v)) for k, v in record.to_row().items()})
    logger.info(f"Diagnostics written: {path} ({len(records)} rows)")


def read_diagnostics_csv(path: str) -> List[DiagnosticsRecord]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != DIAGNOSTICS_COLUMNS:
            raise ConsistencyError(f"Unexpected diagnostics header in {path}: {reader.fieldnames}")
        return [DiagnosticsRecord.from_row(row) for row in reader]


def write_report(path: str, report: Dict[str, Any]) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
    logger.info(f"Report written: {path}")


def load_frozen_constants(path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """
    Load the frozen-constant fixture

    Returns:
        Dict mapping keys such as "K2_p2.5" to {"value": ..., "source": ...};
        an empty dict when the file is missing
    """
    path = path or get_settings().FROZEN_CONSTANTS_PATH
    if not os.path.exists(path):
        logger.warning(f"Frozen constants not found at {path}")
        return {}
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    return payload.get("constants", {})


def save_frozen_constants(constants: Dict[str, Dict[str, Any]], path: Optional[str] = None) -> None:
    path = path or get_settings().FROZEN_CONSTANTS_PATH
    write_report(path, {"version": 1, "constants": constants})


__all__ = [
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_FIELDS",
    "Snapshot",
    "get_output_dir",
    "snapshot_fields",
    "write_snapshot",
    "read_snapshot",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
    "write_report",
    "load_frozen_constants",
    "save_frozen_constants",
]
