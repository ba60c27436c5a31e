"""Coarse global planner: region partition, start barriers, RRT search.

The workspace is tiled into axis-aligned square regions.  A tree of
vertices spaced exactly ``d_step`` apart is grown from the start toward
the goal; near the start (within 2*d_step), edges must stay inside the
wedge between two "safety barrier" segments so the first few coarse
steps remain reachable given the robot's initial heading.  The returned
vertex path is condensed into local target waypoints: from each anchor,
the farthest vertex still in the anchor's region is emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .locomotion import SafetyLimits, wrap_angle
from .planner_local import terrain_mean

__all__ = [
    "RegionPartition",
    "SafetyBarriers",
    "build_partition",
    "safety_barriers",
    "segments_intersect",
    "lda_g_rrt",
    "extract_waypoints",
]


@dataclass(frozen=True)
class RegionPartition:
    """Axis-aligned square tiling of the workspace."""

    bounds: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    region_size: float

    @property
    def shape(self) -> tuple[int, int]:
        x_min, x_max, y_min, y_max = self.bounds
        return (int(math.ceil((x_max - x_min) / self.region_size)),
                int(math.ceil((y_max - y_min) / self.region_size)))

    @property
    def n_regions(self) -> int:
        nx, ny = self.shape
        return nx * ny

    def region_of(self, point) -> tuple[int, int]:
        """Region index of a point; boundaries belong to the higher region."""
        x_min, x_max, y_min, y_max = self.bounds
        nx, ny = self.shape
        ix = int(math.floor((point[0] - x_min) / self.region_size))
        iy = int(math.floor((point[1] - y_min) / self.region_size))
        return (min(max(ix, 0), nx - 1), min(max(iy, 0), ny - 1))


@dataclass(frozen=True)
class SafetyBarriers:
    """Two segments of length 2*d_step sharing the start vertex."""

    lsb1: tuple[np.ndarray, np.ndarray]
    lsb2: tuple[np.ndarray, np.ndarray]
    v0: np.ndarray
    radius: float  # barrier constraints apply within this radius of v0


def build_partition(bounds, region_size: float) -> RegionPartition:
    if region_size <= 0:
        raise UsageError("region_size must be positive")
    return RegionPartition(bounds=tuple(float(b) for b in bounds),
                           region_size=float(region_size))


def safety_barriers(v0, theta0: float, d_step: float,
                    dtheta_safe: float) -> SafetyBarriers:
    if d_step <= 0:
        raise UsageError("d_step must be positive")
    v0 = np.asarray(v0, dtype=float)[:2]
    ends = []
    for sgn in (-1.0, +1.0):
        ang = theta0 + sgn * dtheta_safe
        ends.append(v0 + 2.0 * d_step * np.array([math.cos(ang),
                                                  math.sin(ang)]))
    return SafetyBarriers(lsb1=(v0.copy(), ends[0]), lsb2=(v0.copy(), ends[1]),
                          v0=v0.copy(), radius=2.0 * d_step)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, c) -> bool:
    """c collinear with a-b: is c within the segment's bounding box?"""
    return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))


def segments_intersect(p1, p2, q1, q2, *, exclude=None) -> bool:
    """Exact segment-segment intersection test.

    ``exclude``: a point; touching the other segment exactly at that point
    does not count (used for edges and barriers sharing the start vertex).
    """
    p1 = np.asarray(p1, float); p2 = np.asarray(p2, float)
    q1 = np.asarray(q1, float); q2 = np.asarray(q2, float)
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)

    def hit(point) -> bool:
        if exclude is not None and np.allclose(point, exclude, atol=1e-12):
            return False
        return True

    if ((d1 > 0) != (d2 > 0) and d1 != 0 and d2 != 0
            and (d3 > 0) != (d4 > 0) and d3 != 0 and d4 != 0):
        # proper crossing; locate it to apply the exclusion
        denom = (d1 - d2)
        t = d1 / denom
        point = p1 + t * (p2 - p1)
        return hit(point)
    # collinear / endpoint-touching cases
    if d1 == 0 and _on_segment(q1, q2, p1) and hit(p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2) and hit(p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1) and hit(q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2) and hit(q2):
        return True
    return False


def _in_wedge(point, v0, theta0: float, dtheta_safe: float,
              radius: float) -> bool:
    """Containment in conv{lsb1, lsb2}: within radius, heading within cone."""
    delta = np.asarray(point, float) - v0
    dist = float(np.linalg.norm(delta))
    if dist < 1e-12:
        return True
    if dist > radius + 1e-12:
        return False
    ang = math.atan2(delta[1], delta[0])
    return abs(wrap_angle(ang - theta0)) <= dtheta_safe + 1e-12


def lda_g_rrt(v0, theta0: float, goal, terrain_gp, d_step: float,
              limits: SafetyLimits, budget: int, rng: np.random.Generator, *,
              bounds=None, goal_bias: float = 0.1,
              start_slack: float = 0.0) -> np.ndarray | None:
    """Grow a coarse tree from ``v0`` to within d_step of ``goal``.

    Returns the (n, 2) vertex path v0..goal, or None when the budget is
    exhausted.  Admission rules: new vertices sit exactly d_step from
    their parent and are traversable under the terrain-GP mean; vertices
    connected directly to the root stay inside the heading wedge, and
    edges within 2*d_step of the start never cross a barrier segment.
    """
    v0 = np.asarray(v0, dtype=float)[:2]
    goal = np.asarray(goal, dtype=float)[:2]
    if float(terrain_mean(terrain_gp, v0[None, :])[0]) \
            > limits.z_safe + start_slack:
        raise UsageError("start vertex lies on untraversable terrain")
    if bounds is None:
        lo = np.minimum(v0, goal) - 2.0 * d_step
        hi = np.maximum(v0, goal) + 2.0 * d_step
        bounds = (lo[0], hi[0], lo[1], hi[1])
    x_min, x_max, y_min, y_max = bounds
    barriers = safety_barriers(v0, theta0, d_step, limits.dtheta_safe)

    verts = [v0]
    parents = [-1]

    def edge_ok(a, b) -> bool:
        near = (np.linalg.norm(a - v0) <= barriers.radius + 1e-12
                or np.linalg.norm(b - v0) <= barriers.radius + 1e-12)
        if not near:
            return True
        for seg in (barriers.lsb1, barriers.lsb2):
            if segments_intersect(a, b, seg[0], seg[1], exclude=v0):
                return False
        return True

    def geometric_ok(parent: int, cand) -> bool:
        if not (x_min <= cand[0] <= x_max and y_min <= cand[1] <= y_max):
            return False
        # vertices connected to the root must lie in the barrier wedge
        if parent == 0 and not _in_wedge(cand, v0, theta0, limits.dtheta_safe,
                                         barriers.radius):
            return False
        return True

    def path_from(idx: int) -> np.ndarray:
        chain = []
        while idx >= 0:
            chain.append(verts[idx])
            idx = parents[idx]
        return np.array(chain[::-1])

    def try_goal(idx: int) -> np.ndarray | None:
        if np.linalg.norm(goal - verts[idx]) > d_step:
            return None
        if not edge_ok(verts[idx], goal):
            return None
        if float(terrain_mean(terrain_gp, goal[None, :])[0]) > limits.z_safe:
            return None
        return np.vstack([path_from(idx), goal])

    done = try_goal(0)
    if done is not None:
        return done
    for _ in range(budget):
        if rng.uniform() < goal_bias:
            rand = goal.copy()
        else:
            rand = np.array([rng.uniform(x_min, x_max),
                             rng.uniform(y_min, y_max)])
        pos = np.asarray(verts)
        delta = rand[None, :] - pos
        dists = np.hypot(delta[:, 0], delta[:, 1])
        ok = dists >= 1e-12
        with np.errstate(invalid="ignore", divide="ignore"):
            cands = pos + d_step * delta / dists[:, None]
        order = np.argsort(dists, kind="stable")
        order = order[ok[order]]
        added = None
        # nearest-first: chunked elevation check, then geometric admission
        for s in range(0, len(order), 32):
            chunk = order[s:s + 32]
            passed = terrain_mean(terrain_gp, cands[chunk]) <= limits.z_safe
            for vi in chunk[passed]:
                cand = cands[vi]
                if geometric_ok(int(vi), cand) and edge_ok(verts[int(vi)], cand):
                    verts.append(cand)
                    parents.append(int(vi))
                    added = len(verts) - 1
                    break
            if added is not None:
                break
        if added is None:
            continue
        done = try_goal(added)
        if done is not None:
            return done
    return None


def extract_waypoints(path: np.ndarray,
                      partition: RegionPartition) -> np.ndarray:
    """Condense a vertex path into one waypoint per region transition.

    From the current anchor, emit the farthest subsequent vertex lying in
    the anchor's region, then recurse from the vertex after it; the final
    vertex is always emitted.
    """
    path = np.atleast_2d(np.asarray(path, dtype=float))
    if len(path) == 0:
        raise UsageError("path must be non-empty")
    out = []
    i = 0
    n = len(path)
    while i < n:
        q = partition.region_of(path[i])
        j = i
        while j + 1 < n and partition.region_of(path[j + 1]) == q:
            j += 1
        out.append(path[j])
        i = j + 1
    return np.array(out)
