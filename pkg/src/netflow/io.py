"""Network and trajectory serialisation.

Networks travel as human-editable JSON (schema below); trajectories as
CSV (one node row per curve point plus a diagnostics sidecar) or JSONL
(one snapshot object per line).  Floats are written with ``repr`` so every
round trip is bit-exact.

Network JSON schema (version 1)::

    {
      "version": 1,
      "kind": "triod" | "open-curve" | "closed-curve",
      "dimension": n,
      "n_cells": N,
      "endpoints": [[...] * 3],          # triod only
      "curves": [[[x, y, ...]] * (N+1)], # 3 arrays for a triod, 1 otherwise
      "metadata": { ... }                # optional, free-form
    }

Trajectory CSV header: ``time,curve,node,x0..x{n-1}``; the diagnostics
sidecar (same stem, ``.diagnostics`` inserted) has header
``time,L1,L2,L3,total_length,l2_curvature,angle_residual,min_speed,picard_iters``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoError, ParseError, ValidationError
from .geometry import CurveState, Grid, SingleCurveState, TriodState
from .solver import RunResult, StepReport, diagnostics_report

SCHEMA_VERSION = 1

DIAGNOSTIC_FIELDS = (
    "time", "L1", "L2", "L3", "total_length", "l2_curvature",
    "angle_residual", "min_speed", "picard_iters",
)


@dataclass(frozen=True)
class TrajectoryRecord:
    """One snapshot of a run: time, node positions, step diagnostics."""

    time: float
    curves: tuple[np.ndarray, ...]
    report: StepReport


def _float_list(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def save_network(state, path, metadata: dict | None = None) -> None:
    """Write a network state as schema-version-1 JSON."""
    if isinstance(state, SingleCurveState):
        state = state.curve
    if isinstance(state, TriodState):
        doc = {
            "version": SCHEMA_VERSION,
            "kind": "triod",
            "dimension": state.n_dim,
            "n_cells": state.grid.n_cells,
            "endpoints": _float_list(state.endpoints),
            "curves": [_float_list(c.points) for c in state.curves],
        }
    elif isinstance(state, CurveState):
        doc = {
            "version": SCHEMA_VERSION,
            "kind": "closed-curve" if state.closed else "open-curve",
            "dimension": state.n_dim,
            "n_cells": state.grid.n_cells,
            "curves": [_float_list(state.points)],
        }
    else:
        raise TypeError(f"cannot serialise {type(state).__name__}")
    if metadata:
        doc["metadata"] = metadata
    try:
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write network file {path}: {exc}") from exc


def _require(doc: dict, key: str, kind, path: str):
    if key not in doc:
        raise ValidationError(f"missing required field", path=f"{path}.{key}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ValidationError(
            f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
            path=f"{path}.{key}",
        )
    return value


def load_network(path):
    """Load a network file; returns a TriodState or a CurveState.

    Malformed files raise ParseError; files that parse but violate the
    schema or the state invariants raise ValidationError naming the field.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read network file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")

    version = _require(doc, "version", int, "$")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported version {version}", path="$.version")
    kind = doc.get("kind", "triod")
    if kind not in ("triod", "open-curve", "closed-curve"):
        raise ValidationError(f"unknown kind {kind!r}", path="$.kind")
    n_dim = _require(doc, "dimension", int, "$")
    n_cells = _require(doc, "n_cells", int, "$")
    if n_cells < 8:
        raise ValidationError(f"grid too coarse: n_cells={n_cells}, need >= 8",
                              path="$.n_cells")
    if n_dim < 2:
        raise ValidationError(f"dimension must be >= 2, got {n_dim}", path="$.dimension")
    curves_doc = _require(doc, "curves", list, "$")
    expected_curves = 3 if kind == "triod" else 1
    if len(curves_doc) != expected_curves:
        raise ValidationError(
            f"kind {kind!r} needs {expected_curves} curve arrays, got {len(curves_doc)}",
            path="$.curves",
        )
    grid = Grid(n_cells)
    arrays = []
    for i, c in enumerate(curves_doc):
        arr = np.asarray(c, dtype=float)
        if arr.shape != (n_cells + 1, n_dim):
            raise ValidationError(
                f"expected shape {(n_cells + 1, n_dim)}, got {arr.shape}",
                path=f"$.curves[{i}]",
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("non-finite coordinates", path=f"$.curves[{i}]")
        arrays.append(arr)

    if kind == "triod":
        endpoints = np.asarray(_require(doc, "endpoints", list, "$"), dtype=float)
        if endpoints.shape != (3, n_dim):
            raise ValidationError(
                f"expected shape {(3, n_dim)}, got {endpoints.shape}", path="$.endpoints"
            )
        for i in (1, 2):
            if not np.array_equal(arrays[i][0], arrays[0][0]):
                raise ValidationError(
                    "junction rows differ between curves (concurrency violated)",
                    path=f"$.curves[{i}][0]",
                )
        for i in range(3):
            if not np.array_equal(arrays[i][-1], endpoints[i]):
                raise ValidationError(
                    "last node differs from declared endpoint",
                    path=f"$.curves[{i}][{n_cells}]",
                )
        try:
            curves = tuple(CurveState(a, grid) for a in arrays)
            return TriodState(curves, endpoints, time=0.0)
        except Exception as exc:
            raise ValidationError(str(exc), path="$.curves") from exc
    try:
        return CurveState(arrays[0], grid, closed=(kind == "closed-curve"))
    except Exception as exc:
        raise ValidationError(str(exc), path="$.curves[0]") from exc


def build_records(result: RunResult) -> list[TrajectoryRecord]:
    """Pair run snapshots with the step reports at the same times."""
    by_time = {report.time: report for report in result.reports}
    records = []
    for state in result.snapshots:
        time = state.time
        report = by_time.get(time)
        if report is None:
            report = diagnostics_report(state)
        curves = (
            tuple(np.asarray(c.points) for c in state.curves)
            if isinstance(state, TriodState)
            else (np.asarray(state.curve.points),)
        )
        records.append(TrajectoryRecord(time=time, curves=curves, report=report))
    return records


def _diag_row(report: StepReport) -> list[str]:
    lengths = list(report.lengths) + [math.nan] * (3 - len(report.lengths))
    values = [report.time, *lengths, report.total_length, report.l2_curvature,
              report.angle_residual, report.min_speed]
    return [repr(float(v)) for v in values] + [str(report.picard_iters)]


def diagnostics_sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".diagnostics" + (p.suffix or ".csv"))


def save_trajectory(records, path, format: str = "csv") -> None:
    """Write trajectory records as CSV (+ diagnostics sidecar) or JSONL."""
    if format == "csv":
        _save_csv(records, Path(path))
    elif format == "jsonl":
        _save_jsonl(records, Path(path))
    else:
        raise ValueError(f"unknown trajectory format {format!r}")


def _save_csv(records, path: Path) -> None:
    records = list(records)
    n_dim = records[0].curves[0].shape[1] if records else 2
    header = ["time", "curve", "node"] + [f"x{k}" for k in range(n_dim)]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rec in records:
                t = repr(float(rec.time))
                for ci, pts in enumerate(rec.curves):
                    for node, row in enumerate(pts):
                        writer.writerow([t, ci, node] + [repr(float(v)) for v in row])
        with open(diagnostics_sidecar_path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DIAGNOSTIC_FIELDS)
            for rec in records:
                writer.writerow(_diag_row(rec.report))
    except OSError as exc:
        raise IoError(f"cannot write trajectory {path}: {exc}") from exc


def _save_jsonl(records, path: Path) -> None:
    try:
        with open(path, "w") as fh:
            for rec in records:
                lengths = list(rec.report.lengths)
                doc = {
                    "time": rec.time,
                    "curves": [c.tolist() for c in rec.curves],
                    "diagnostics": {
                        "lengths": lengths,
                        "total_length": rec.report.total_length,
                        "l2_curvature": rec.report.l2_curvature,
                        "angle_residual": rec.report.angle_residual,
                        "min_speed": rec.report.min_speed,
                        "picard_iters": rec.report.picard_iters,
                        "picard_final_residual": rec.report.picard_final_residual,
                    },
                }
                fh.write(json.dumps(doc) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write trajectory {path}: {exc}") from exc


def load_diagnostics(path) -> list[dict]:
    """Read a diagnostics sidecar CSV back into dictionaries (exact floats)."""
    out = []
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                parsed = {}
                for key, value in row.items():
                    parsed[key] = int(value) if key == "picard_iters" else float(value)
                out.append(parsed)
    except OSError as exc:
        raise IoError(f"cannot read diagnostics {path}: {exc}") from exc
    return out


def load_trajectory_jsonl(path) -> list[dict]:
    try:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise IoError(f"cannot read trajectory {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: bad JSONL: {exc}") from exc
