#!/usr/bin/env python3
"""
Plot-ready output files.

Every run writes CSV tables (header row, fixed column order, floats in
repr form) and schema-versioned JSON summaries. Each file carries the hash
of the run configuration so identical configurations produce identical
artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from logging_config import getLogger

logger = getLogger(__name__)

SCHEMA_VERSION = 1


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON values."""
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, complex):
        return {"re": _jsonable(value.real), "im": _jsonable(value.imag)}
    if isinstance(value, float) and not math.isfinite(value):
        # JSON has no NaN/Infinity literals
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def canonical_json(data: Any) -> str:
    return json.dumps(_jsonable(data), sort_keys=True, separators=(",", ":"))


def config_hash(config: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a configuration mapping."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def run_timestamp() -> str:
    """UTC timestamp of the run; SOURCE_DATE_EPOCH pins it when set."""
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    moment = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch
        else datetime.now(tz=timezone.utc)
    )
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    digest: str,
) -> Path:
    """Write a CSV table preceded by a ``# config_hash=`` comment line.

    Raises:
        ValueError: If a row does not match the header width
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={digest}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(
                    f"row {count} has {len(row)} values, header has {len(header)}"
                )
            writer.writerow([_cell(v) for v in row])
            count += 1
    logger.debug(
        "CSV artifact written",
        extra={"artifacts.written.path": str(path), "artifacts.written.rows": count},
    )
    return path


def write_json(
    path: Path, kind: str, payload: Mapping[str, Any], digest: str
) -> Path:
    """Write a JSON summary with schema version, kind and config hash."""
    document = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config_hash": digest,
        **_jsonable(payload),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    logger.debug(
        "JSON artifact written",
        extra={"artifacts.written.path": str(path), "artifacts.written.rows": 1},
    )
    return path


def map_rows(
    x: Sequence[float], y: Sequence[float], values: np.ndarray
) -> list[tuple[float, float, float]]:
    """Flatten a (len y, len x) map into (x, y, value) rows, x fastest."""
    return [
        (float(xv), float(yv), float(values[j, i]))
        for j, yv in enumerate(y)
        for i, xv in enumerate(x)
    ]


def calibration_record(
    kind: str,
    parameters: Mapping[str, float],
    trace: Sequence[tuple[Sequence[float], float]],
    report: Mapping[str, Any],
) -> dict[str, Any]:
    """Payload of a calibration record: parameters, trace, fidelity report."""
    return {
        "gate": kind,
        "parameters": dict(parameters),
        "objective_trace": [
            {"point": list(point), "value": value} for point, value in trace
        ],
        "report": dict(report),
        "timestamp": run_timestamp(),
    }
