"""Report serialization: canonical JSON, config hashing, atomic writes.

Reports are fully determined by (config, seed): no timestamps, no absolute
paths, sorted keys.  Two runs with the same inputs produce byte-identical
files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(payload) -> str:
    return json.dumps(jsonable(payload), sort_keys=True, indent=2) + "\n"


def config_digest(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(jsonable(config), sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def report_envelope(kind: str, config: dict, seed: int, params: dict) -> dict:
    """Common report skeleton embedding the provenance every report carries."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config_hash": config_digest(config),
        "seed": seed,
        "parameters": jsonable(params),
    }


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload) -> None:
    _atomic_write(Path(path), canonical_json(payload))


def write_csv(path, header, rows) -> None:
    lines = [",".join(str(v) for v in header)]
    lines.extend(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) for row in rows)
    _atomic_write(Path(path), "\n".join(lines) + "\n")
