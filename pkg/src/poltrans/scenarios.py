"""Synthetic 2D benchmark scenario generators.

Two families:

* Surface scenarios — a flat baseline segment deforms into a target profile
  (tilted, sinusoidal, stepped, or a rotated sinusoid). Keypoints sample the
  baseline and its image; the demonstration is a periodic
  approach-traverse-retreat loop over the baseline. Every scenario carries
  an analytic reference rollout (the demonstration pushed through the exact
  profile map) to score transported trajectories against.

* Frame scenarios — a reaching motion between a start frame and a goal
  frame, each carrying rigidly attached keypoints. The demonstration is
  generated for one fixed canonical frame pair; new scenarios perturb the
  frames, and the reference rollout regenerates the reaching curve at the
  perturbed frames.

Also provides a grid-organizer for raw 3D point clouds (bilinear xy lattice
from four corners, z aggregated from the cloud and smoothed), mirroring how
scanned surfaces are turned into ordered keypoint grids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.spatial.distance import cdist

from .types import PairedKeypoints, PointSet, Trajectory, _freeze, load_json, save_json

SURFACE_PROFILES = ("flat", "tilt", "sine", "step", "composite")

_PROFILE_DEFAULTS = {
    "flat": {},
    "tilt": {"angle": 0.35},
    "sine": {"amplitude": 0.08, "frequency": 1.0},
    "step": {"height": 0.12, "position": 0.55, "width": 0.04},
    "composite": {"angle": 0.25, "amplitude": 0.1, "frequency": 1.5},
}

# Demonstration loop over the unit baseline: hover in, traverse, retreat,
# return. Piecewise-linear waypoints with phase breakpoints.
_LOOP_WAYPOINTS = np.array([[0.0, 0.3], [0.0, 0.0], [1.0, 0.0], [1.0, 0.3], [0.0, 0.3]])
_LOOP_BREAKS = np.array([0.0, 0.15, 0.6, 0.75, 1.0])
_LOOP_SAMPLES = 200


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def surface_map(profile: str, params: dict):
    """The analytic ambient map sending the flat baseline onto the profile.

    Graph profiles shift points vertically by the profile height at their
    abscissa; tilt rotates about the baseline start; composite applies the
    sinusoid then rotates.
    """
    if profile == "flat":
        return lambda pts: np.array(pts, dtype=float)
    if profile == "tilt":
        rot = _rotation(params["angle"])
        return lambda pts: np.asarray(pts, dtype=float) @ rot.T
    if profile == "sine":
        a, f = params["amplitude"], params["frequency"]

        def bump(pts):
            pts = np.array(pts, dtype=float)
            pts[:, 1] += a * np.sin(2.0 * np.pi * f * pts[:, 0])
            return pts

        return bump
    if profile == "step":
        h, pos, w = params["height"], params["position"], params["width"]

        def step(pts):
            pts = np.array(pts, dtype=float)
            pts[:, 1] += 0.5 * h * (1.0 + np.tanh((pts[:, 0] - pos) / w))
            return pts

        return step
    if profile == "composite":
        inner = surface_map("sine", params)
        rot = _rotation(params["angle"])
        return lambda pts: inner(pts) @ rot.T
    raise ValueError(f"unknown profile {profile!r}; choose from {SURFACE_PROFILES}")


@dataclass(frozen=True, eq=False)
class SurfaceScenario:
    """A surface-deformation transport instance with analytic ground truth."""

    profile: str
    params: dict
    keypoints: PairedKeypoints
    demonstration: Trajectory
    reference: Trajectory
    seed: int

    @property
    def name(self) -> str:
        return f"surface-{self.profile}-{self.seed}"

    def to_dict(self) -> dict:
        return {
            "kind": "surface",
            "profile": self.profile,
            "params": dict(self.params),
            "keypoints": self.keypoints.to_dict(),
            "demonstration": self.demonstration.to_dict(),
            "reference": self.reference.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurfaceScenario":
        return cls(
            profile=data["profile"],
            params={k: float(v) for k, v in data["params"].items()},
            keypoints=PairedKeypoints.from_dict(data["keypoints"]),
            demonstration=Trajectory.from_dict(data["demonstration"]),
            reference=Trajectory.from_dict(data["reference"]),
            seed=int(data["seed"]),
        )


def _loop_demonstration() -> Trajectory:
    t = np.arange(_LOOP_SAMPLES) / _LOOP_SAMPLES
    positions = np.empty((_LOOP_SAMPLES, 2))
    for axis in range(2):
        positions[:, axis] = np.interp(t, _LOOP_BREAKS, _LOOP_WAYPOINTS[:, axis])
    return Trajectory(positions=positions, times=t)


def make_surface_scenario(
    profile: str,
    n_keypoints: int = 12,
    seed: int = 0,
    params: dict | None = None,
) -> SurfaceScenario:
    """Build one surface instance, deterministic given the seed.

    Source keypoints sit on the flat baseline y = 0, x in [0, 1], evenly
    spaced with a small seeded jitter (order preserving); target keypoints
    are their images under the profile map at the same abscissae.
    """
    if n_keypoints < 2:
        raise ValueError("need at least two keypoints")
    merged = dict(_PROFILE_DEFAULTS.get(profile, {}))
    if profile not in SURFACE_PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {SURFACE_PROFILES}")
    if params:
        merged.update({k: float(v) for k, v in params.items()})

    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, 1.0, n_keypoints)
    spacing = 1.0 / (n_keypoints - 1)
    xs = np.clip(xs + rng.uniform(-0.3, 0.3, n_keypoints) * spacing, 0.0, 1.0)
    xs.sort()
    source = np.stack([xs, np.zeros_like(xs)], axis=1)

    mapping = surface_map(profile, merged)
    target = mapping(source)
    demo = _loop_demonstration()
    reference = Trajectory(positions=mapping(demo.positions), times=demo.times)

    return SurfaceScenario(
        profile=profile,
        params=merged,
        keypoints=PairedKeypoints(source=PointSet(source), target=PointSet(target)),
        demonstration=demo,
        reference=reference,
        seed=seed,
    )


@dataclass(frozen=True)
class Pose:
    """A planar frame: position plus heading angle (radians)."""

    xy: tuple[float, float]
    heading: float

    def __post_init__(self):
        xy = (float(self.xy[0]), float(self.xy[1]))
        if not all(np.isfinite(v) for v in (*xy, self.heading)):
            raise ValueError("pose entries must be finite")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "heading", float(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array(self.xy)

    @property
    def direction(self) -> np.ndarray:
        return np.array([np.cos(self.heading), np.sin(self.heading)])

    def rotation(self) -> np.ndarray:
        return _rotation(self.heading)

    def to_world(self, local: np.ndarray) -> np.ndarray:
        return np.atleast_2d(local) @ self.rotation().T + self.position

    def to_dict(self) -> dict:
        return {"xy": list(self.xy), "heading": self.heading}

    @classmethod
    def from_dict(cls, data: dict) -> "Pose":
        return cls(xy=tuple(data["xy"]), heading=float(data["heading"]))


CANONICAL_START = Pose(xy=(0.0, 0.0), heading=0.0)
CANONICAL_GOAL = Pose(xy=(1.0, 0.55), heading=1.1)

_FRAME_KP_RADIUS = 0.12
_DOCK_LENGTH = 0.22
# The motion stops this far short of the goal origin (contact clearance).
_CONTACT_OFFSET = 0.06
_CURVE_SAMPLES = 200
_DOCK_SAMPLES = 30


def _frame_offsets(count: int) -> np.ndarray:
    """Fixed local keypoint offsets: the frame origin plus points on a
    circle around it."""
    if count < 1:
        raise ValueError("need at least one keypoint per frame")
    offsets = [np.zeros(2)]
    for j in range(count - 1):
        angle = 2.0 * np.pi * j / max(count - 1, 1)
        offsets.append(_FRAME_KP_RADIUS * np.array([np.cos(angle), np.sin(angle)]))
    return np.stack(offsets)


def _frame_keypoints(start: Pose, goal: Pose, count: int) -> PointSet:
    local = _frame_offsets(count)
    return PointSet(np.vstack([start.to_world(local), goal.to_world(local)]))


def _frame_curve(start: Pose, goal: Pose) -> Trajectory:
    """Reaching curve: a cubic Hermite arc from the start frame to a dock
    point behind the goal, then a straight docking segment along the goal
    heading, stopping a contact clearance short of the goal origin."""
    dock = goal.position - _DOCK_LENGTH * goal.direction
    contact = goal.position - _CONTACT_OFFSET * goal.direction
    scale = float(np.linalg.norm(dock - start.position))
    scale = max(scale, 1e-6)
    m0 = scale * start.direction
    m1 = scale * goal.direction

    u = np.linspace(0.0, 1.0, _CURVE_SAMPLES - _DOCK_SAMPLES)
    h00 = 2 * u**3 - 3 * u**2 + 1
    h10 = u**3 - 2 * u**2 + u
    h01 = -2 * u**3 + 3 * u**2
    h11 = u**3 - u**2
    arc = (
        h00[:, None] * start.position
        + h10[:, None] * m0
        + h01[:, None] * dock
        + h11[:, None] * m1
    )

    v = np.linspace(0.0, 1.0, _DOCK_SAMPLES + 1)[1:]
    docking = dock + v[:, None] * (contact - dock)

    positions = np.vstack([arc, docking])
    times = np.linspace(0.0, 1.0, positions.shape[0])
    return Trajectory(positions=positions, times=times)


@dataclass(frozen=True, eq=False)
class FrameScenario:
    """A two-frame reaching instance: canonical demonstration, perturbed
    frames, and the regenerated reference curve at those frames."""

    start_pose: Pose
    goal_pose: Pose
    keypoints_per_frame: int
    keypoints: PairedKeypoints
    demonstration: Trajectory
    reference: Trajectory
    seed: int

    @property
    def name(self) -> str:
        return f"frame-{self.seed}"

    def to_dict(self) -> dict:
        return {
            "kind": "frame",
            "start_pose": self.start_pose.to_dict(),
            "goal_pose": self.goal_pose.to_dict(),
            "keypoints_per_frame": self.keypoints_per_frame,
            "keypoints": self.keypoints.to_dict(),
            "demonstration": self.demonstration.to_dict(),
            "reference": self.reference.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FrameScenario":
        return cls(
            start_pose=Pose.from_dict(data["start_pose"]),
            goal_pose=Pose.from_dict(data["goal_pose"]),
            keypoints_per_frame=int(data["keypoints_per_frame"]),
            keypoints=PairedKeypoints.from_dict(data["keypoints"]),
            demonstration=Trajectory.from_dict(data["demonstration"]),
            reference=Trajectory.from_dict(data["reference"]),
            seed=int(data["seed"]),
        )


def make_frame_scenario(
    start_pose: Pose,
    goal_pose: Pose,
    keypoints_per_frame: int = 5,
    seed: int = 0,
) -> FrameScenario:
    """Frame instance with keypoints rigidly attached to both frames.

    Source keypoints are the canonical frames' keypoints; targets are the
    same local offsets expressed in the given frames. The demonstration is
    always the canonical reaching curve; the reference rollout is the curve
    regenerated at the given frames.
    """
    if float(np.linalg.norm(start_pose.position - goal_pose.position)) < 1e-9:
        raise ValueError("start and goal frames coincide")
    source = _frame_keypoints(CANONICAL_START, CANONICAL_GOAL, keypoints_per_frame)
    target = _frame_keypoints(start_pose, goal_pose, keypoints_per_frame)
    return FrameScenario(
        start_pose=start_pose,
        goal_pose=goal_pose,
        keypoints_per_frame=keypoints_per_frame,
        keypoints=PairedKeypoints(source=source, target=target),
        demonstration=_frame_curve(CANONICAL_START, CANONICAL_GOAL),
        reference=_frame_curve(start_pose, goal_pose),
        seed=seed,
    )


def random_frame_scenario(seed: int, keypoints_per_frame: int = 5) -> FrameScenario:
    """Perturb both canonical frames with a seeded random offset.

    The pose draws happen before keypoint construction in a fixed order, so
    one seed produces the same frames for every keypoint count.
    """
    rng = np.random.default_rng(seed)
    start = Pose(
        xy=tuple(np.asarray(CANONICAL_START.xy) + rng.uniform(-0.3, 0.3, 2)),
        heading=CANONICAL_START.heading + rng.uniform(-0.8, 0.8),
    )
    goal = Pose(
        xy=tuple(np.asarray(CANONICAL_GOAL.xy) + rng.uniform(-0.3, 0.3, 2)),
        heading=CANONICAL_GOAL.heading + rng.uniform(-0.8, 0.8),
    )
    return make_frame_scenario(start, goal, keypoints_per_frame, seed=seed)


def frame_pairing(train: FrameScenario, test: FrameScenario) -> PairedKeypoints:
    """Keypoint pairs mapping one scenario's frames onto another's.

    Pairs the training scenario's frame keypoints (sources) with the test
    scenario's (targets); both scenarios must use the same per-frame count,
    which makes index pairing valid by construction.
    """
    if train.keypoints_per_frame != test.keypoints_per_frame:
        raise ValueError("scenarios use different keypoints-per-frame counts")
    return PairedKeypoints(source=train.keypoints.target, target=test.keypoints.target)


def save_scenario(scenario, path) -> None:
    save_json(scenario.to_dict(), path)


def load_scenario(path):
    data = load_json(path)
    kind = data.get("kind")
    if kind == "surface":
        return SurfaceScenario.from_dict(data)
    if kind == "frame":
        return FrameScenario.from_dict(data)
    raise ValueError(f"unknown scenario kind {kind!r}")


def gridify_pointcloud(
    points: PointSet,
    grid: tuple[int, int],
    corners,
    smoothing_window: int = 3,
) -> PointSet:
    """Organize a raw 3D cloud into an ordered nx-by-ny surface grid.

    Node xy positions come from bilinear interpolation of the four corner
    vectors (ordered u0v0, u1v0, u1v1, u0v1); node z aggregates the input
    points assigned to their nearest node (points farther than one cell
    span are ignored), with empty nodes filled from their neighbors and the
    z field smoothed by a moving average. Output is row-major in v then u,
    exactly nx*ny points.
    """
    nx, ny = int(grid[0]), int(grid[1])
    if nx < 2 or ny < 2:
        raise ValueError("grid must be at least 2x2")
    if points.dim != 3:
        raise ValueError("gridify expects a 3D point cloud")
    if points.n < 4:
        raise ValueError("need at least four input points")
    if smoothing_window < 1:
        raise ValueError("smoothing window must be >= 1")

    quad = np.asarray(corners, dtype=float)
    if quad.shape != (4, 2):
        raise ValueError("corners must be four 2D vectors")
    area = 0.0
    for i in range(4):
        a, b = quad[i], quad[(i + 1) % 4]
        area += a[0] * b[1] - b[0] * a[1]
    if abs(area) < 1e-12:
        raise ValueError("degenerate corner quadrilateral")

    uu, vv = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, ny))
    u, v = uu.ravel(), vv.ravel()
    nodes = (
        np.outer((1 - u) * (1 - v), quad[0])
        + np.outer(u * (1 - v), quad[1])
        + np.outer(u * v, quad[2])
        + np.outer((1 - u) * v, quad[3])
    )

    node_grid = nodes.reshape(ny, nx, 2)
    spans = []
    if nx > 1:
        spans.append(np.linalg.norm(np.diff(node_grid, axis=1), axis=2).max())
    if ny > 1:
        spans.append(np.linalg.norm(np.diff(node_grid, axis=0), axis=2).max())
    cell_span = max(spans)

    dist = cdist(points.points[:, :2], nodes)
    nearest = np.argmin(dist, axis=1)
    within = dist[np.arange(points.n), nearest] <= cell_span
    z_sum = np.zeros(nx * ny)
    z_cnt = np.zeros(nx * ny)
    np.add.at(z_sum, nearest[within], points.points[within, 2])
    np.add.at(z_cnt, nearest[within], 1.0)
    if not np.any(z_cnt > 0):
        raise ValueError("no input points near any grid cell")

    z = np.full(nx * ny, np.nan)
    filled = z_cnt > 0
    z[filled] = z_sum[filled] / z_cnt[filled]

    z = z.reshape(ny, nx)
    while np.any(np.isnan(z)):
        nan_mask = np.isnan(z)
        padded = np.pad(z, 1, mode="edge")
        neighbor_stack = np.stack(
            [padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]]
        )
        counts = np.sum(~np.isnan(neighbor_stack), axis=0)
        sums = np.nansum(neighbor_stack, axis=0)
        fillable = nan_mask & (counts > 0)
        z[fillable] = sums[fillable] / counts[fillable]

    if smoothing_window > 1:
        z = uniform_filter(z, size=smoothing_window, mode="nearest")

    return PointSet(np.column_stack([nodes, z.ravel()]))
