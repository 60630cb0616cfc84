"""Deterministic writers for trajectories, event logs and JSON reports."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .simulate import Trajectory

FLOAT_FMT = "%.17g"


def _block_labels(prefix: str, dims) -> list[str]:
    return [f"{prefix}[{a + 1}.{c + 1}]" for a, size in enumerate(dims) for c in range(size)]


def trajectory_header(traj: Trajectory) -> list[str]:
    """Column names ``t, x[a.c], ..., u[a.c], qz[e.c]`` with 1-based indices.

    ``qz`` holds the broadcast values ``q(z)`` (raw ``z`` for unquantized runs).
    """
    dims = traj.meta.get("block_dims", {})
    cols = ["t"]
    for name, sl in traj.layout.items():
        width = sl.stop - sl.start
        if width == 0:
            continue
        per = dims.get(name)
        cols += _block_labels(name, per) if per else [f"{name}[{k + 1}]" for k in range(width)]
    N, p = traj.graph.num_nodes, traj.p
    cols += _block_labels("u", [p] * N)
    cols += _block_labels("qz", [p] * traj.graph.num_edges)
    return cols


def trajectory_table(traj: Trajectory) -> np.ndarray:
    parts = [traj.times[:, None]]
    for sl in traj.layout.values():
        if sl.stop > sl.start:
            parts.append(traj.states[:, sl])
    parts += [traj.controls, traj.levels]
    return np.hstack(parts)


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    table = trajectory_table(traj)
    header = ",".join(trajectory_header(traj))
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, table, fmt=FLOAT_FMT, delimiter=",")
    return path


def event_dicts(traj: Trajectory) -> list[dict]:
    return [{"t": e.time, "edge": e.edge + 1, "comp": e.component + 1, "old": e.old_level,
             "new": e.new_level, "deferred": e.deferred} for e in traj.events]


def write_events_jsonl(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        for rec in event_dicts(traj):
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    return path


def jsonable(obj):
    """Convert numpy scalars and arrays; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(data, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        json.dump(jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
