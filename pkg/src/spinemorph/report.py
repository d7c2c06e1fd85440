"""Serialization of measurement results to JSON and CSV."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .fileio import atomic_write_bytes
from .morphometry import DIMENSION_NAMES, VertebraResult

REPORT_VERSION = 1


def _floats(p) -> list:
    return [float(c) for c in p]


def report_dict(results: dict[str, VertebraResult], spine_id: str) -> dict:
    """Measurement report without wall-clock data, so reruns are byte-identical."""
    verts = {}
    for label, r in results.items():
        if r.ok:
            verts[label] = {
                "landmarks": {k: _floats(v) for k, v in r.landmarks.as_dict().items()},
                "dimensions_mm": r.measurements.as_dict(),
                "diagnostics": r.diagnostics,
            }
        else:
            verts[label] = {"error": r.error, "diagnostics": dict(r.diagnostics)}
    return {
        "format_version": REPORT_VERSION,
        "spine_id": spine_id,
        "coordinate_system": "LPS",
        "units": "mm",
        "vertebrae": verts,
    }


def timings_dict(results: dict[str, VertebraResult], spine_id: str) -> dict:
    return {"spine_id": spine_id, "timings_s": {k: r.timings for k, r in results.items()}}


def dumps(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def report_csv(results: dict[str, VertebraResult], spine_id: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["spine_id", "label", *DIMENSION_NAMES, "error"])
    for label, r in results.items():
        if r.ok:
            vals = r.measurements.as_dict()
            w.writerow([spine_id, label, *(repr(vals[d]) for d in DIMENSION_NAMES), ""])
        else:
            w.writerow([spine_id, label, *([""] * len(DIMENSION_NAMES)), r.error["type"]])
    return buf.getvalue()


def write_report(results, out_dir, spine_id: str, with_csv: bool = False):
    """
    Write ``<spine_id>.json``, a ``<spine_id>.timings.json`` sidecar and,
    optionally, ``<spine_id>.csv``.
    """
    out_dir = Path(out_dir)
    path = out_dir / f"{spine_id}.json"
    atomic_write_bytes(path, dumps(report_dict(results, spine_id)))
    atomic_write_bytes(out_dir / f"{spine_id}.timings.json", dumps(timings_dict(results, spine_id)))
    if with_csv:
        atomic_write_bytes(out_dir / f"{spine_id}.csv", report_csv(results, spine_id).encode("utf-8"))
    return path
