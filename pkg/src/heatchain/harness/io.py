"""CSV and JSON writers with a deterministic byte layout.

Floats are written with ``repr`` (shortest round-trip form), so equal
numbers always give equal bytes.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from .. import __version__

METADATA_KEYS = (
    "command",
    "package_version",
    "python",
    "numpy",
    "scipy",
    "config_sha256",
    "seed",
    "threads",
    "truncation",
    "outputs",
    "status",
    "message",
    "runtime_s",
)


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])
    return path


def read_csv(path):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, data):
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x)!r}")


def metadata(command, cfg_hash, seed, threads, truncation, outputs, status="ok", message="", runtime_s=0.0):
    data = {
        "command": command,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config_sha256": cfg_hash,
        "seed": seed,
        "threads": threads,
        "truncation": truncation,
        "outputs": list(outputs),
        "status": status,
        "message": message,
        "runtime_s": round(float(runtime_s), 3),
    }
    assert tuple(data) == METADATA_KEYS
    return data
