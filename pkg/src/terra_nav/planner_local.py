"""Footstep-level planner: constrained RRT*, smoothing, and scoring.

Vertices are apex waypoints (x, y, theta).  Expansion admits a candidate
only if the heading change stays within the per-step limit and the
predicted terrain elevation at the candidate stays below the traversable
limit; when every vertex fails, a fallback candidate is spawned from the
nearest childless vertex at exactly the heading limit.

Candidate trajectories are compared by a weighted combination of the
predicted motion-deviation sum (to minimize) and the terrain-GP
information gain along the waypoints (to maximize).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gp as gpmod
from . import model_error
from .errors import UsageError
from .locomotion import HighLevelAction, SafetyLimits, wrap_angle

__all__ = [
    "LocalGraph",
    "LocalTrajectory",
    "propose_vertex",
    "lda_l_rrt",
    "smooth",
    "score_error",
    "score_info",
    "select_trajectory",
    "plan_candidates",
    "segment_elevation_ok",
]

SEGMENT_SAMPLE_SPACING = 0.05  # m, for elevation checks along segments


def terrain_mean(tm, pts) -> np.ndarray:
    """Posterior mean of a terrain model (GPModel or an object with .mean)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if isinstance(tm, gpmod.GPModel):
        return gpmod.predict_mean(tm, pts)
    return np.asarray(tm.mean(pts), dtype=float)


def terrain_var(tm, pts) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if isinstance(tm, gpmod.GPModel):
        return gpmod.predict(tm, pts)[1]
    return np.asarray(tm.var(pts), dtype=float)


def segment_elevation_ok(tm, p0, p1, z_safe: float,
                         spacing: float = SEGMENT_SAMPLE_SPACING) -> bool:
    """Check mu_z <= z_safe along the straight segment p0 -> p1."""
    p0 = np.asarray(p0, dtype=float)[:2]
    p1 = np.asarray(p1, dtype=float)[:2]
    length = float(np.linalg.norm(p1 - p0))
    n = max(2, int(math.ceil(length / spacing)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
    return bool((terrain_mean(tm, pts) <= z_safe).all())


SLACK_RADIUS = 3 * SEGMENT_SAMPLE_SPACING  # start-slack reach along edges


def _edge_clear(tm, p0, p1, z_safe: float,
                spacing: float = SEGMENT_SAMPLE_SPACING,
                slack: float = 0.0, slack_center=None) -> bool:
    """Segment elevation check excluding the source endpoint.

    Used for edge admission: the destination and interior samples must be
    traversable, while the source vertex was already admitted.  When the
    source is a start vertex admitted under slack, samples close to it
    (within SLACK_RADIUS of ``slack_center``) share the slack so the
    robot can step off the marginal patch it is standing on.
    """
    p0 = np.asarray(p0, dtype=float)[:2]
    p1 = np.asarray(p1, dtype=float)[:2]
    length = float(np.linalg.norm(p1 - p0))
    n = max(2, int(math.ceil(length / spacing)) + 1)
    ts = np.linspace(0.0, 1.0, n)[1:]
    pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
    lim = np.full(len(pts), z_safe)
    if slack > 0.0 and slack_center is not None:
        near = np.hypot(pts[:, 0] - slack_center[0],
                        pts[:, 1] - slack_center[1]) <= SLACK_RADIUS
        lim[near] += slack
    return bool((terrain_mean(tm, pts) <= lim).all())


def _wrap_array(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi] matching locomotion.wrap_angle."""
    w = a - 2 * np.pi * np.round(a / (2 * np.pi))
    w[w == -np.pi] = np.pi
    return w


class LocalGraph:
    """Search tree of apex waypoints with parent links and path costs."""

    def __init__(self, root):
        x, y, theta = root
        cap = 64
        self._pos = np.zeros((cap, 2))
        self._heading = np.zeros(cap)
        self._parent = np.full(cap, -1, dtype=int)
        self._cost = np.zeros(cap)
        self._has_child = np.zeros(cap, dtype=bool)
        self.n = 0
        self._append(np.array([x, y], dtype=float), float(theta), -1, 0.0)

    def _append(self, pos, heading, parent, cost):
        if self.n == len(self._pos):
            for name in ("_pos", "_heading", "_parent", "_cost", "_has_child"):
                old = getattr(self, name)
                new = np.zeros((2 * len(old),) + old.shape[1:], dtype=old.dtype)
                new[: len(old)] = old
                setattr(self, name, new)
        self._pos[self.n] = pos
        self._heading[self.n] = heading
        self._parent[self.n] = parent
        self._cost[self.n] = cost
        self.n += 1

    @property
    def pos(self) -> np.ndarray:
        return self._pos[: self.n]

    @property
    def heading(self) -> np.ndarray:
        return self._heading[: self.n]

    @property
    def parent(self) -> np.ndarray:
        return self._parent[: self.n]

    @property
    def cost(self) -> np.ndarray:
        return self._cost[: self.n]

    @property
    def has_child(self) -> np.ndarray:
        return self._has_child[: self.n]

    def __len__(self):
        return self.n

    def add(self, pos, heading: float, parent: int) -> int:
        pos = np.asarray(pos, dtype=float)
        cost = self._cost[parent] + float(np.linalg.norm(pos - self._pos[parent]))
        self._append(pos, float(heading), parent, cost)
        self._has_child[parent] = True
        return self.n - 1

    def chain(self, idx: int) -> list[int]:
        out = []
        while idx >= 0:
            out.append(idx)
            idx = int(self._parent[idx])
        return out[::-1]


@dataclass
class LocalTrajectory:
    """Action sequence and the apex waypoints it induces."""

    waypoints: np.ndarray              # (n, 3) rows (x, y, theta)
    actions: list[HighLevelAction]
    scores: tuple[float, float] | None = None  # (error, info)

    @property
    def length(self) -> float:
        return float(sum(a.d for a in self.actions))


def propose_vertex(graph: LocalGraph, rand_point, limits: SafetyLimits,
                   terrain_gp, bounds=None,
                   start_slack: float = 0.0) -> int | None:
    """One constrained expansion step; returns the new vertex index or None."""
    if len(graph) == 0:
        raise UsageError("graph must contain at least the root vertex")
    rp = np.asarray(rand_point, dtype=float)
    pos = graph.pos
    delta = rp[None, :] - pos
    dists = np.hypot(delta[:, 0], delta[:, 1])
    theta_new = np.arctan2(delta[:, 1], delta[:, 0])
    ok = dists >= 1e-12
    ok &= np.abs(_wrap_array(theta_new - graph.heading)) <= limits.dtheta_safe
    with np.errstate(invalid="ignore", divide="ignore"):
        cands = pos + limits.d_safe * delta / dists[:, None]
    if bounds is not None:
        x_min, x_max, y_min, y_max = bounds
        ok &= ((cands[:, 0] >= x_min) & (cands[:, 0] <= x_max)
               & (cands[:, 1] >= y_min) & (cands[:, 1] <= y_max))

    order = np.argsort(dists, kind="stable")
    order = order[ok[order]]
    # evaluate the elevation condition in nearest-first order, in chunks,
    # accepting the first admissible candidate
    for s in range(0, len(order), 32):
        chunk = order[s:s + 32]
        passed = terrain_mean(terrain_gp, cands[chunk]) <= limits.z_safe
        for vi in chunk[passed]:
            vi = int(vi)
            # edge admission: the whole parent->candidate segment must be
            # traversable, not just the candidate vertex
            if _edge_clear(terrain_gp, pos[vi], cands[vi], limits.z_safe,
                           slack=start_slack if vi == 0 else 0.0,
                           slack_center=pos[0]):
                return graph.add(cands[vi], float(theta_new[vi]), vi)

    # fallback: nearest childless vertex, turned by exactly +dtheta_safe
    childless = np.flatnonzero(~graph.has_child)
    if len(childless) == 0:
        return None
    near = int(childless[int(np.argmin(dists[childless]))])
    theta2 = wrap_angle(float(graph.heading[near]) + limits.dtheta_safe)
    cand = graph.pos[near] + limits.d_safe * np.array(
        [math.cos(theta2), math.sin(theta2)])
    if bounds is not None:
        x_min, x_max, y_min, y_max = bounds
        if not (x_min <= cand[0] <= x_max and y_min <= cand[1] <= y_max):
            return None
    if _edge_clear(terrain_gp, graph.pos[near], cand, limits.z_safe,
                   slack=start_slack if near == 0 else 0.0,
                   slack_center=graph.pos[0]):
        return graph.add(cand, theta2, near)
    return None


def _build_trajectory(graph: LocalGraph, leaf: int, target_pos, terrain_gp,
                      start_stance: str) -> LocalTrajectory:
    idxs = graph.chain(leaf)
    pts = [np.array([graph.pos[i][0], graph.pos[i][1], graph.heading[i]])
           for i in idxs]
    tp = np.asarray(target_pos, dtype=float)[:2]
    delta = tp - graph.pos[leaf]
    if np.linalg.norm(delta) > 1e-12:
        theta_final = math.atan2(delta[1], delta[0])
        pts.append(np.array([tp[0], tp[1], theta_final]))
    wpts = np.array(pts)
    return _actions_from_waypoints(wpts, terrain_gp, start_stance)


def _actions_from_waypoints(wpts: np.ndarray, terrain_gp,
                            start_stance: str) -> LocalTrajectory:
    zs = terrain_mean(terrain_gp, wpts[:, :2])
    actions = []
    stance = start_stance
    for i in range(len(wpts) - 1):
        d = float(np.linalg.norm(wpts[i + 1, :2] - wpts[i, :2]))
        actions.append(HighLevelAction(
            d=d, dtheta=wrap_angle(wpts[i + 1, 2] - wpts[i, 2]),
            dz=float(zs[i + 1] - zs[i]),
            psi="right" if stance == "left" else "left"))
        stance = actions[-1].psi
    return LocalTrajectory(waypoints=wpts, actions=actions)


def lda_l_rrt(start, target, terrain_gp, limits: SafetyLimits, budget: int,
              rng: np.random.Generator, *, bounds=None, goal_bias: float = 0.1,
              start_stance: str = "left",
              start_slack: float = 0.0) -> LocalTrajectory | None:
    """Search a footstep trajectory from ``start`` to within d_safe of
    ``target``. Returns None when the iteration budget is exhausted.

    ``start_slack`` loosens the elevation precondition for the start
    vertex only (the robot may drift marginally past the limit while
    executing an admitted plan); expansion conditions are unaffected.
    """
    start = np.asarray(start, dtype=float)
    tp = np.asarray(target, dtype=float)[:2]
    if float(terrain_mean(terrain_gp, start[None, :2])[0]) \
            > limits.z_safe + start_slack:
        raise UsageError("start waypoint lies on untraversable terrain")
    if bounds is None:
        lo = np.minimum(start[:2], tp) - 5.0
        hi = np.maximum(start[:2], tp) + 5.0
        bounds = (lo[0], hi[0], lo[1], hi[1])
    x_min, x_max, y_min, y_max = bounds

    graph = LocalGraph(start)

    def try_finish(vi: int) -> LocalTrajectory | None:
        delta = tp - graph.pos[vi]
        dist = float(np.linalg.norm(delta))
        if dist > limits.d_safe:
            return None
        if dist > 1e-12:
            theta_fin = math.atan2(delta[1], delta[0])
            if abs(wrap_angle(theta_fin - graph.heading[vi])) > limits.dtheta_safe:
                return None
            if not _edge_clear(terrain_gp, graph.pos[vi], tp, limits.z_safe,
                               slack=start_slack if vi == 0 else 0.0,
                               slack_center=graph.pos[0]):
                return None
        return _build_trajectory(graph, vi, tp, terrain_gp, start_stance)

    done = try_finish(0)
    if done is not None:
        return done
    for _ in range(budget):
        if rng.uniform() < goal_bias:
            rand = tp.copy()
        else:
            rand = np.array([rng.uniform(x_min, x_max),
                             rng.uniform(y_min, y_max)])
        vi = propose_vertex(graph, rand, limits, terrain_gp, bounds=bounds,
                            start_slack=start_slack)
        if vi is None:
            continue
        done = try_finish(vi)
        if done is not None:
            return done
    return None


def smooth(traj: LocalTrajectory, terrain_gp, limits: SafetyLimits,
           spacing: float = SEGMENT_SAMPLE_SPACING) -> LocalTrajectory:
    """Greedy farthest-reachable shortcutting with re-discretized segments.

    A shortcut from the current anchor to waypoint j is admitted when the
    straight segment stays traversable (sampled at ``spacing``) and the
    incoming and outgoing heading changes both stay within the limit.
    Endpoints are never altered; total path length never increases.
    """
    wpts = traj.waypoints
    n = len(wpts)
    if n <= 2:
        return traj
    start_stance = "left" if traj.actions[0].psi == "right" else "right"

    def out_dir(i: int) -> float:
        d = wpts[i + 1, :2] - wpts[i, :2]
        return math.atan2(d[1], d[0])

    new_pts = [wpts[0].copy()]
    anchor = 0
    heading_in = float(wpts[0, 2])
    while anchor < n - 1:
        best = anchor + 1
        for j in range(n - 1, anchor + 1, -1):
            d = wpts[j, :2] - wpts[anchor, :2]
            seg_dir = math.atan2(d[1], d[0])
            if abs(wrap_angle(seg_dir - heading_in)) > limits.dtheta_safe:
                continue
            if j < n - 1:
                if abs(wrap_angle(out_dir(j) - seg_dir)) > limits.dtheta_safe:
                    continue
            if not segment_elevation_ok(terrain_gp, wpts[anchor, :2],
                                        wpts[j, :2], limits.z_safe, spacing):
                continue
            best = j
            break
        p0, p1 = wpts[anchor, :2], wpts[best, :2]
        seg = p1 - p0
        length = float(np.linalg.norm(seg))
        seg_dir = math.atan2(seg[1], seg[0])
        steps = max(1, int(math.ceil(length / limits.d_safe - 1e-9)))
        for k in range(1, steps + 1):
            p = p0 + (k / steps) * seg
            new_pts.append(np.array([p[0], p[1], seg_dir]))
        heading_in = seg_dir
        anchor = best
    new_pts[-1][:2] = wpts[-1, :2]  # exact endpoint
    out = _actions_from_waypoints(np.array(new_pts), terrain_gp, start_stance)
    return out if out.length <= traj.length + 1e-9 else traj


def _signed_deviation(error_model, ctx) -> float:
    if callable(error_model):
        return float(error_model(ctx))
    return model_error.predict_deviation(error_model, ctx)


def _contexts(traj: LocalTrajectory):
    acts = traj.actions
    for i, a in enumerate(acts):
        prev = acts[i - 1] if i > 0 else a
        yield model_error.StepContext(
            d_c=prev.d, dtheta_c=prev.dtheta, dz_c=prev.dz,
            d_n=a.d, dtheta_n=a.dtheta, dz_n=a.dz, stance=a.psi)


def score_error(traj: LocalTrajectory, error_model, terrain_gp=None) -> float:
    """Sum of world-frame deviation magnitudes predicted per step."""
    total = 0.0
    for i, ctx in enumerate(_contexts(traj)):
        dev = _signed_deviation(error_model, ctx)
        off = model_error.to_global(dev, traj.waypoints[i + 1])
        total += float(np.linalg.norm(off))
    return total


def score_info(traj: LocalTrajectory, terrain_gp) -> float:
    """Sum of terrain-GP differential entropies at the waypoints [nats]."""
    var = terrain_var(terrain_gp, traj.waypoints[:, :2])
    var = np.maximum(var, 1e-300)
    return float(np.sum(0.5 * np.log(2 * np.pi * var) + 0.5))


def select_trajectory(candidates: list[LocalTrajectory], alpha_w: float,
                      beta_w: float) -> int:
    """argmax_j [-alpha * error_j + beta * info_j]; ties -> lowest index."""
    if not candidates:
        raise UsageError("no candidate trajectories to select from")
    values = [-alpha_w * c.scores[0] + beta_w * c.scores[1]
              for c in candidates]
    return int(np.argmax(values))


def plan_candidates(start, target, terrain_gp, error_model,
                    limits: SafetyLimits, budget: int,
                    rng: np.random.Generator, m: int = 3,
                    alpha_w: float = 1.0, beta_w: float = 1.0, *,
                    bounds=None, start_stance: str = "left",
                    start_slack: float = 0.0) -> LocalTrajectory | None:
    """Run m candidate searches, smooth and score each, pick the best."""
    candidates = []
    for _ in range(m):
        raw = lda_l_rrt(start, target, terrain_gp, limits, budget, rng,
                        bounds=bounds, start_stance=start_stance,
                        start_slack=start_slack)
        if raw is None:
            continue
        traj = smooth(raw, terrain_gp, limits)
        traj.scores = (score_error(traj, error_model, terrain_gp),
                       score_info(traj, terrain_gp))
        candidates.append(traj)
    if not candidates:
        return None
    return candidates[select_trajectory(candidates, alpha_w, beta_w)]
