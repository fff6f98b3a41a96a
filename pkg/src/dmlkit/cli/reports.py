"""Report serialization.

Reports are plain dicts rendered to canonical JSON: keys sorted, numpy
scalars and arrays converted to built-in types, floats written by their
shortest round-trip representation. Two runs that compute the same
numbers therefore produce byte-identical files.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .. import __version__


def sanitize(obj):
    """Recursively convert report content to JSON-serializable types."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def provenance(config) -> dict:
    return {
        "config_sha256": config.digest(),
        "seed": config.seed,
        "version": __version__,
    }


def render_report(report: dict) -> str:
    return json.dumps(sanitize(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(render_report(report))


def write_table(rows: list[dict], path) -> None:
    """Write a list of flat records as CSV with a stable column order."""
    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    columns = list(rows[0])
    for row in rows[1:]:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(sanitize(row.get(c)))
                             if isinstance(row.get(c), float)
                             else sanitize(row.get(c)) for c in columns])
