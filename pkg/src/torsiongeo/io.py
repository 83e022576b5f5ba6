"""CSV and JSON writers/readers with fixed schemas.

Schemas (column order is part of the contract):

* trajectory CSV: ``t,q1..qD,qdot1..qdotD``
* variation CSV:  ``t,dq1..dqD,db1..dbD``
* contour CSV:    ``q1,q2`` closed vertex list
* amplitude CSV:  first row ``tau,<grid values...>``, then one row per grid
  point: ``q_b,<kernel row>``

JSON payloads are written with sorted keys and a fixed float notation so a
given result is byte-stable across runs.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .defects import Contour
from .dynamics import Trajectory, VariationRecord


def jsonable(obj):
    """Recursively convert numpy scalars/arrays for deterministic JSON."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    d = traj.q.shape[1]
    header = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"qdot{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, q, v in zip(traj.t, traj.q, traj.v):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in q] + [repr(float(x)) for x in v])


def read_trajectory_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    d = (len(header) - 1) // 2
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    return data[:, 0], data[:, 1 : 1 + d], data[:, 1 + d :]


def write_variation_csv(record: VariationRecord, path) -> None:
    d = record.dq.shape[1]
    header = ["t"] + [f"dq{i + 1}" for i in range(d)] + [f"db{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, dq, db in zip(record.t, record.dq, record.db):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in dq] + [repr(float(x)) for x in db])


def read_contour_csv(path) -> Contour:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and rows[0][0].strip().lower() == "q1":
        rows = rows[1:]
    pts = np.array([[float(a), float(b)] for a, b in rows])
    return Contour(pts)


def write_contour_csv(contour: Contour, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q1", "q2"])
        for q in contour.points:
            writer.writerow([repr(float(q[0])), repr(float(q[1]))])


def write_amplitude_csv(grid: np.ndarray, matrix: np.ndarray, tau: float, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([repr(float(tau))] + [repr(float(x)) for x in grid])
        for qb, row in zip(grid, matrix):
            writer.writerow([repr(float(qb))] + [repr(float(x)) for x in row])
