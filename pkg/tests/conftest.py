"""Shared instance builders and independent reference implementations.

The reference implementations here ("oracles") deliberately re-derive
results by exhaustive enumeration, dense linear algebra, or grid search --
different code paths than the package itself uses -- so the tests
cross-check the implementation instead of restating it.
"""

import itertools
from functools import lru_cache

import numpy as np
from scipy.stats import rankdata

from poltrans import PairedKeypoints, PointSet


# ---------------------------------------------------------------------------
# random instance builders


def rotation_2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_rotation(rng, dim: int) -> np.ndarray:
    """Uniform-ish random rotation matrix (2D by angle, 3D via QR)."""
    if dim == 2:
        return rotation_2d(rng.uniform(-np.pi, np.pi))
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    if np.linalg.det(q) < 0:
        q[:, -1] *= -1.0
    return q


def random_rigid_pair(rng, n: int = 8, dim: int = 2):
    """Keypoints related by an exact rotation plus translation.

    Returns (pairing, rotation, shift) so tests can compare against the
    generating transform.
    """
    source = rng.uniform(-1.0, 1.0, (n, dim))
    rot = random_rotation(rng, dim)
    shift = rng.uniform(-2.0, 2.0, dim)
    target = source @ rot.T + shift
    return PairedKeypoints(PointSet(source), PointSet(target)), rot, shift


def random_smooth_pair(rng, n: int = 10, amplitude: float = 0.12) -> PairedKeypoints:
    """Keypoints under a rigid motion plus a smooth sinusoidal warp."""
    source = rng.uniform(-1.0, 1.0, (n, 2))
    rot = rotation_2d(rng.uniform(-0.7, 0.7))
    shift = rng.uniform(-1.0, 1.0, 2)
    base = source @ rot.T + shift
    warp = amplitude * np.stack(
        [np.sin(1.7 * base[:, 1]), np.cos(1.3 * base[:, 0])], axis=1
    )
    return PairedKeypoints(PointSet(source), PointSet(base + warp))


def fold_pair() -> PairedKeypoints:
    """Keypoints densely sampling a smooth map that folds the plane.

    A 13x2 grid is displaced along x by a Gaussian dip deep enough that
    x + delta(x) is non-monotone: d/dx = 1 + delta'(x) dips to about -0.74
    around x = 1.25, so the interpolated map has negative Jacobian
    determinants at several keypoints while the outer ones stay positive.
    """
    xs = np.linspace(0.0, 3.0, 13)
    gx, gy = np.meshgrid(xs, np.array([0.0, 0.6]))
    source = np.stack([gx.ravel(), gy.ravel()], axis=1)
    target = source.copy()
    target[:, 0] -= 1.1 * np.exp(-((source[:, 0] - 1.5) ** 2) / (2 * 0.35**2))
    return PairedKeypoints(PointSet(source), PointSet(target))


# ---------------------------------------------------------------------------
# brute-force / grid-search oracles


def so2_grid_rotation(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Best-fit rotation by two-stage dense grid search over the angle.

    Minimizes the centered least-squares cost directly on a grid of
    candidate angles (coarse pass over [-pi, pi], then a fine pass around
    the winner), giving roughly 1e-8 angular resolution.
    """
    s = source - source.mean(axis=0)
    t = target - target.mean(axis=0)

    def grid_cost(angles):
        rots = np.stack([rotation_2d(a) for a in angles])
        moved = np.einsum("kab,nb->kna", rots, s)
        return np.sum((moved - t[None]) ** 2, axis=(1, 2))

    coarse = np.linspace(-np.pi, np.pi, 40001)
    best = coarse[np.argmin(grid_cost(coarse))]
    step = coarse[1] - coarse[0]
    fine = np.linspace(best - 2 * step, best + 2 * step, 40001)
    best = fine[np.argmin(grid_cost(fine))]
    return rotation_2d(best)


@lru_cache(maxsize=None)
def _monotone_paths(m: int, n: int) -> tuple:
    """All index paths from (0, 0) to (m-1, n-1) with steps (1,0)/(0,1)/(1,1)."""
    paths = []

    def extend(path):
        i, j = path[-1]
        if i == m - 1 and j == n - 1:
            paths.append(tuple(path))
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < m and j + dj < n:
                path.append((i + di, j + dj))
                extend(path)
                path.pop()

    extend([(0, 0)])
    return tuple(paths)


def brute_force_frechet(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete Frechet distance by enumerating every coupling."""
    dist = np.linalg.norm(a[:, None] - b[None], axis=2)
    best = np.inf
    for path in _monotone_paths(len(a), len(b)):
        width = max(dist[i, j] for i, j in path)
        best = min(best, width)
    return float(best)


def brute_force_dtw(a: np.ndarray, b: np.ndarray) -> float:
    """DTW cost by enumerating every warping path."""
    dist = np.linalg.norm(a[:, None] - b[None], axis=2)
    best = np.inf
    for path in _monotone_paths(len(a), len(b)):
        cost = sum(dist[i, j] for i, j in path)
        best = min(best, cost)
    return float(best)


def mw_exact_enumeration(x, y) -> tuple[float, float]:
    """One-sided Mann-Whitney by full enumeration of group assignments.

    Midranks handle ties; the p-value is the exchangeable-pooling
    probability of a rank sum (hence U) at most as small as observed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    n1, n = len(x), len(pooled)
    base = n1 * (n1 + 1) / 2.0
    u_obs = ranks[:n1].sum() - base
    hits = 0
    total = 0
    for combo in itertools.combinations(range(n), n1):
        total += 1
        if ranks[list(combo)].sum() - base <= u_obs + 1e-9:
            hits += 1
    return float(u_obs), hits / total


def dense_laplacian_oracle(positions, topology, indices, targets) -> np.ndarray:
    """Graph-Laplacian edit by explicit free/constrained block elimination.

    Builds the Laplacian edge by edge, substitutes the constrained rows'
    values into the free rows' equations, and solves the free block by
    least squares -- a different construction than row substitution on the
    full square system.
    """
    x = np.asarray(positions, dtype=float)
    m = len(x)
    lap = np.zeros((m, m))
    edges = [(i, i + 1) for i in range(m - 1)]
    if topology == "ring":
        edges.append((m - 1, 0))
    for i, j in edges:
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0

    indices = np.asarray(indices, dtype=int)
    targets = np.asarray(targets, dtype=float)
    free = np.array([i for i in range(m) if i not in set(indices.tolist())])
    delta = lap @ x

    out = np.empty_like(x)
    out[indices] = targets
    if free.size:
        rhs = delta[free] - lap[np.ix_(free, indices)] @ targets
        sol, *_ = np.linalg.lstsq(lap[np.ix_(free, free)], rhs, rcond=None)
        out[free] = sol
    return out
