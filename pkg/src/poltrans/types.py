"""Shared domain types for keypoint-conditioned policy transportation.

Conventions used across the package:

* points are float64 row vectors, point sets are (N, dim) arrays,
* matrices are row-major when serialized,
* every container is immutable after construction (its arrays are marked
  read-only), so instances are safe to share across threads.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

# Tolerance admitting double-precision polar-decomposition output.
ORIENTATION_TOL = 1e-9
SPD_TOL = 1e-9


def _freeze(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def rotation_residual(matrix) -> tuple[float, float]:
    """Return (orthogonality residual, determinant residual) of a square matrix.

    The first entry is ``max |R^T R - I|``, the second ``|det R - 1|``. Both
    are ~0 for a proper rotation.
    """
    m = np.asarray(matrix, dtype=float)
    ortho = float(np.max(np.abs(m.T @ m - np.eye(m.shape[0]))))
    det = float(abs(np.linalg.det(m) - 1.0))
    return ortho, det


def is_rotation(matrix, tol: float = ORIENTATION_TOL) -> bool:
    ortho, det = rotation_residual(matrix)
    return ortho <= tol and det <= tol


@dataclass(frozen=True, eq=False)
class PointSet:
    """Ordered set of N points in R^dim (dim 2 or 3), coordinates in meters."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2:
            raise ValueError("points must form an (N, dim) array")
        n, dim = pts.shape
        if n < 1:
            raise ValueError("point set needs at least one point")
        if dim not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {dim}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or Inf")
        object.__setattr__(self, "points", _freeze(pts))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def diameter(self) -> float:
        """Largest pairwise distance; 0.0 for a single point."""
        if self.n < 2:
            return 0.0
        return float(pdist(self.points).max())

    def to_dict(self) -> dict:
        return {"dim": self.dim, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PointSet":
        ps = cls(points=np.asarray(data["points"], dtype=float))
        if "dim" in data and int(data["dim"]) != ps.dim:
            raise ValueError("declared dim does not match point width")
        return ps


@dataclass(frozen=True, eq=False)
class PairedKeypoints:
    """Index-paired source/target keypoint sets defining the task change.

    Element i of ``source`` corresponds to element i of ``target``.
    """

    source: PointSet
    target: PointSet

    def __post_init__(self):
        if self.source.n != self.target.n:
            raise ValueError(
                f"source has {self.source.n} points, target {self.target.n}"
            )
        if self.source.dim != self.target.dim:
            raise ValueError("source and target dimensions differ")

    @property
    def dim(self) -> int:
        return self.source.dim

    @property
    def n(self) -> int:
        return self.source.n

    def to_dict(self) -> dict:
        return {"source": self.source.to_dict(), "target": self.target.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "PairedKeypoints":
        return cls(
            source=PointSet.from_dict(data["source"]),
            target=PointSet.from_dict(data["target"]),
        )


@dataclass(frozen=True, eq=False)
class PolicyLabels:
    """Demonstration labels: positions plus optional velocity/orientation/
    stiffness/damping sets, all of a common length M.

    Shapes: positions and velocities (M, dim); orientations, stiffness and
    damping (M, dim, dim). Only shape consistency is enforced here; numeric
    invariants (orientations in SO(dim), stiffness/damping symmetric PSD)
    are checked by :func:`validate_labels`, which reports rather than raises.
    """

    positions: np.ndarray
    velocities: np.ndarray | None = None
    orientations: np.ndarray | None = None
    stiffness: np.ndarray | None = None
    damping: np.ndarray | None = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError("positions must form a nonempty (M, dim) array")
        m, dim = pos.shape
        object.__setattr__(self, "positions", _freeze(pos))

        for name in ("velocities",):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.atleast_2d(np.asarray(val, dtype=float))
            if arr.shape != (m, dim):
                raise ValueError(f"{name} must have shape ({m}, {dim})")
            object.__setattr__(self, name, _freeze(arr))

        for name in ("orientations", "stiffness", "damping"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.asarray(val, dtype=float)
            if arr.shape != (m, dim, dim):
                raise ValueError(f"{name} must have shape ({m}, {dim}, {dim})")
            object.__setattr__(self, name, _freeze(arr))

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def to_dict(self) -> dict:
        def opt(arr):
            return None if arr is None else arr.tolist()

        return {
            "positions": self.positions.tolist(),
            "velocities": opt(self.velocities),
            "orientations": opt(self.orientations),
            "stiffness": opt(self.stiffness),
            "damping": opt(self.damping),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyLabels":
        def opt(key):
            val = data.get(key)
            return None if val is None else np.asarray(val, dtype=float)

        return cls(
            positions=np.asarray(data["positions"], dtype=float),
            velocities=opt("velocities"),
            orientations=opt("orientations"),
            stiffness=opt("stiffness"),
            damping=opt("damping"),
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered view of positions; timestamps optional but strictly
    increasing when present."""

    positions: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError("positions must form a nonempty (M, dim) array")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions contain NaN or Inf")
        object.__setattr__(self, "positions", _freeze(pos))
        if self.times is not None:
            t = np.asarray(self.times, dtype=float).ravel()
            if t.shape[0] != pos.shape[0]:
                raise ValueError("times length must match positions")
            if t.shape[0] > 1 and not np.all(np.diff(t) > 0):
                raise ValueError("times must be strictly increasing")
            object.__setattr__(self, "times", _freeze(t))

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def to_dict(self) -> dict:
        return {
            "times": None if self.times is None else self.times.tolist(),
            "positions": self.positions.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        times = data.get("times")
        return cls(
            positions=np.asarray(data["positions"], dtype=float),
            times=None if times is None else np.asarray(times, dtype=float),
        )


@dataclass(frozen=True)
class Violation:
    """One invariant violation: which field, which element, how badly."""

    field: str
    index: int
    kind: str
    residual: float

    def __str__(self):
        return f"{self.field}[{self.index}]: {self.kind} residual {self.residual:.3e}"


def validate_labels(labels: PolicyLabels, tol: float = ORIENTATION_TOL) -> list[Violation]:
    """Check numeric label invariants; return a (possibly empty) report.

    Reported violations: non-finite entries anywhere, orientations failing
    R^T R = I or det R = +1 within ``tol``, stiffness/damping failing
    symmetry within ``tol`` or having eigenvalues below ``-tol``.

    Pure reporting: never raises, never mutates, idempotent.
    """
    report: list[Violation] = []

    for name in ("positions", "velocities"):
        arr = getattr(labels, name)
        if arr is None:
            continue
        for i, row in enumerate(arr):
            if not np.all(np.isfinite(row)):
                report.append(Violation(name, i, "non-finite", float("nan")))

    if labels.orientations is not None:
        for i, rot in enumerate(labels.orientations):
            if not np.all(np.isfinite(rot)):
                report.append(Violation("orientations", i, "non-finite", float("nan")))
                continue
            ortho, det = rotation_residual(rot)
            if ortho > tol:
                report.append(Violation("orientations", i, "orthogonality", ortho))
            if det > tol:
                report.append(Violation("orientations", i, "determinant", det))

    for name in ("stiffness", "damping"):
        arr = getattr(labels, name)
        if arr is None:
            continue
        for i, mat in enumerate(arr):
            if not np.all(np.isfinite(mat)):
                report.append(Violation(name, i, "non-finite", float("nan")))
                continue
            asym = float(np.max(np.abs(mat - mat.T)))
            if asym > tol:
                report.append(Violation(name, i, "symmetry", asym))
            min_eig = float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min())
            if min_eig < -SPD_TOL:
                report.append(Violation(name, i, "negative eigenvalue", -min_eig))

    return report


def finite_difference_velocities(traj: Trajectory) -> np.ndarray:
    """Estimate velocities from positions: central differences at interior
    samples, one-sided at the two endpoints.

    Requires timestamps and at least two samples.
    """
    if traj.times is None:
        raise ValueError("timestamps required for finite differences")
    if traj.m < 2:
        raise ValueError("insufficient samples")
    t = traj.times
    x = traj.positions
    vel = np.empty_like(x)
    vel[0] = (x[1] - x[0]) / (t[1] - t[0])
    vel[-1] = (x[-1] - x[-2]) / (t[-1] - t[-2])
    if traj.m > 2:
        vel[1:-1] = (x[2:] - x[:-2]) / (t[2:] - t[:-2])[:, None]
    return vel


def save_json(obj, path) -> None:
    """Write any object exposing ``to_dict`` (or a plain dict) as JSON."""
    data = obj.to_dict() if hasattr(obj, "to_dict") else obj
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_pointset_csv(path) -> PointSet:
    """Read a point set from CSV, one point per row."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or all(not cell.strip() for cell in row):
                continue
            rows.append([float(cell) for cell in row])
    if not rows:
        raise ValueError(f"no points in {path}")
    return PointSet(points=np.asarray(rows))
