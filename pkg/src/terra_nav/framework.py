"""Mission orchestration: plan globally, step locally, sense, retrain.

A mission starts from a terrain GP conditioned on a few hundred random
ground-truth points.  Each epoch runs the coarse planner to get a local
target waypoint, runs the footstep planner to it, executes the steps with
a synthetic lateral-deviation perturbation, collects noisy elevation
samples around every realized pose, and retrains the terrain GP when the
segment completes or the retrain period expires.  The loop ends when the
realized pose is within one step of the goal, the step budget runs out,
or planning fails repeatedly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import gp as gpmod
from . import model_error, terrain
from .errors import ConfigError, DataError, UsageError
from .kernels import AttentiveKernel, Kernel, NeuralNetKernel, RBFKernel
from .locomotion import (ApexState, HighLevelAction, SafetyLimits, plan_step,
                         wrap_angle)
from .planner_global import build_partition, extract_waypoints, lda_g_rrt
from .planner_local import (plan_candidates, terrain_mean, terrain_var,
                            _actions_from_waypoints)

__all__ = [
    "MissionConfig",
    "StepRecord",
    "EpochRecord",
    "MissionLog",
    "BenchmarkReport",
    "run_mission",
    "compute_metrics",
    "export",
    "log_to_bytes",
    "default_kernel",
]

KERNEL_CHOICES = ("rbf", "nn", "attentive")
MAX_CONSECUTIVE_FAILURES = 5


@dataclass(frozen=True)
class MissionConfig:
    """Everything a mission needs; JSON-serializable; fully seeded."""

    # terrain
    terrain_style: str = "hills"
    terrain_seed: int = 0
    amplitude: float = 0.5
    bounds: tuple[float, float, float, float] = (0.0, 20.0, 0.0, 20.0)
    resolution: float = 20.0 / 49.0
    clear_start_goal: bool = True
    # learning
    kernel: str = "rbf"
    n_prior: int = 500
    retrain_period: int = 20
    hyper_refit_every: int = 3   # epochs; 0 disables hyperparameter refits
    hyper_iters: int = 15
    hyper_subsample: int = 400
    inducing: int = 200
    sensor_radius: float = 3.0
    sensor_samples: int = 10
    sensor_noise_std: float = 0.005
    # planning
    d_safe: float = 0.4
    dtheta_safe: float = 0.3
    z_safe: float = 0.15
    d_step: float = 1.5
    region_size: float = 5.0
    local_budget: int = 2000
    global_budget: int = 2000
    m_candidates: int = 3
    alpha_w: float = 1.0
    beta_w: float = 1.0
    # execution
    error_mean: float = model_error.TARGET_MEAN_DEVIATION
    error_noise_std: float = 1e-3
    model_error_artifact: str | None = None
    # mission
    start: tuple[float, float, float] = (1.5, 1.5, math.pi / 4)
    goal: tuple[float, float] = (18.5, 18.5)
    max_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNEL_CHOICES:
            raise ConfigError(f"kernel must be one of {KERNEL_CHOICES}")
        if self.retrain_period < 1:
            raise ConfigError("retrain_period must be >= 1")
        if self.d_step <= self.d_safe:
            raise ConfigError("coarse step d_step must exceed d_safe")
        if self.n_prior < 0 or self.max_steps < 1:
            raise ConfigError("n_prior must be >= 0 and max_steps >= 1")

    @property
    def limits(self) -> SafetyLimits:
        return SafetyLimits(d_safe=self.d_safe, dtheta_safe=self.dtheta_safe,
                            z_safe=self.z_safe)

    def terrain_spec(self) -> terrain.TerrainSpec:
        zones = ()
        if self.clear_start_goal:
            zones = ((self.start[0], self.start[1], 1.2),
                     (self.goal[0], self.goal[1], 1.2))
        return terrain.TerrainSpec(bounds=self.bounds,
                                   resolution=self.resolution,
                                   amplitude=self.amplitude,
                                   style=self.terrain_style,
                                   clear_zones=zones)

    def sensor_spec(self) -> terrain.SensorSpec:
        return terrain.SensorSpec(radius=self.sensor_radius,
                                  samples_per_step=self.sensor_samples,
                                  noise_std=self.sensor_noise_std)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["bounds"] = list(d["bounds"])
        d["start"] = list(d["start"])
        d["goal"] = list(d["goal"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MissionConfig":
        d = dict(d)
        for key in ("bounds", "start", "goal"):
            if key in d:
                d[key] = tuple(d[key])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "MissionConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read mission config {path}: {exc}")


@dataclass
class StepRecord:
    step: int
    epoch: int
    planned: tuple[float, float, float]
    offset: tuple[float, float]
    realized: tuple[float, float, float]
    d: float
    dtheta: float
    dz: float
    psi: str
    error_term: float   # predicted |lateral deviation| for this step [m]
    info_term: float    # terrain-GP entropy at the planned waypoint [nats]
    n_samples: int


@dataclass
class EpochRecord:
    epoch: int
    pose: tuple[float, float, float]
    target: tuple[float, float]
    global_vertices: int
    score_error: float
    score_info: float
    steps_executed: int
    retrained: bool
    hyper_refit: bool
    train_size: int
    avg_env_std: float
    recovery: bool = False
    wall_time: float = 0.0  # excluded from the deterministic byte log


@dataclass
class MissionLog:
    config: dict
    outcome: str = "budget-exhausted"
    steps: list[StepRecord] = dc_field(default_factory=list)
    epochs: list[EpochRecord] = dc_field(default_factory=list)
    total_steps: int = 0
    wall_time: float = 0.0
    # runtime-only attachments (not part of the serialized log)
    final_model: object | None = None
    field: terrain.TerrainField | None = None


@dataclass
class BenchmarkReport:
    kernel: str
    outcome: str
    total_steps: int
    retrain_period: int
    wall_time: float
    avg_error_path: float | None
    avg_std_path: float | None
    sum_error_env: float
    avg_error_env: float
    avg_std_env: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_kernel(name: str, seed: int = 0) -> Kernel:
    """Initial terrain-GP kernel for each supported family."""
    if name == "rbf":
        return RBFKernel(sigma_f2=0.05, lengthscale=1.5, dim=2)
    if name == "nn":
        return NeuralNetKernel(sigma_f2=0.05, bias=1.0,
                               lengthscales=(1.5, 1.5))
    if name == "attentive":
        return AttentiveKernel(amplitude=0.05, seed=seed)
    raise ConfigError(f"unknown kernel {name!r}")


@lru_cache(maxsize=4)
def _cached_error_model(mean: float, noise_std: float):
    oracle = model_error.PerturbationOracle(mean_magnitude=mean,
                                            noise_std=noise_std)
    model = model_error.train_model_error(oracle, seed=0, tune=False)
    return oracle, model


def _load_error_model(config: MissionConfig):
    oracle = model_error.PerturbationOracle(
        mean_magnitude=config.error_mean, noise_std=config.error_noise_std)
    if config.model_error_artifact:
        return oracle, model_error.load_artifact(config.model_error_artifact)
    return _cached_error_model(config.error_mean, config.error_noise_std)


def _avg_env_std(model, field: terrain.TerrainField) -> float:
    xs, ys = field.node_coords()
    xx, yy = np.meshgrid(xs, ys)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return float(np.sqrt(np.maximum(terrain_var(model, pts), 0.0)).mean())


def run_mission(config: MissionConfig) -> MissionLog:
    """Execute one mission and return its complete log."""
    t0 = time.perf_counter()
    field = terrain.generate_terrain(config.terrain_spec(), config.terrain_seed)
    limits = config.limits
    # normal epochs plan with a small elevation margin so the robot never
    # parks on borderline ground it cannot step away from; recovery epochs
    # use the full certified limit for escape headroom
    plan_limits = SafetyLimits(d_safe=limits.d_safe,
                               dtheta_safe=limits.dtheta_safe,
                               z_safe=limits.z_safe - 0.015)
    sensor = config.sensor_spec()
    oracle, err_model = _load_error_model(config)

    ss = np.random.SeedSequence(config.seed)
    rng_prior, rng_sense, rng_global, rng_local, rng_exec = (
        np.random.default_rng(s) for s in ss.spawn(5))

    # prior data: noiseless ground truth at random grid nodes
    xs, ys = field.node_coords()
    xx, yy = np.meshgrid(xs, ys)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    n_prior = min(config.n_prior, len(nodes))
    idx = rng_prior.choice(len(nodes), size=n_prior, replace=False)
    X = nodes[idx]
    y = field.grid.ravel()[idx]

    noise_var = max(config.sensor_noise_std ** 2, 1e-6)
    kernel = default_kernel(config.kernel, seed=config.seed)

    def refit(kern):
        return gpmod.fit(X, y, kern, noise_var,
                         inducing=min(config.inducing, max(len(X), 1)) or None)

    # train the prior GP's hyperparameters on the prior data so the first
    # plans already use a calibrated terrain model
    if config.hyper_refit_every > 0 and len(X) >= 5:
        kernel, _ = gpmod.train_hyperparams(
            gpmod.fit(X, y, kernel, noise_var), max_iter=config.hyper_iters,
            subsample=min(config.hyper_subsample, len(X)), seed=config.seed)
    model = refit(kernel)
    partition = build_partition(config.bounds, config.region_size)

    log = MissionLog(config=config.to_dict(), field=field)
    pose = tuple(float(v) for v in config.start)
    goal = np.asarray(config.goal, dtype=float)
    stance = "left"
    prev_action: HighLevelAction | None = None
    steps = 0
    steps_since_retrain = 0
    epoch = 0
    failures = 0
    outcome = None

    margin = 1e-6
    x_min, x_max, y_min, y_max = config.bounds
    # plans keep a margin from the workspace edge so the robot never ends
    # up on the boundary with its heading (and barrier wedge) pointing out
    inset = 0.5
    plan_bounds = (x_min + inset, x_max - inset, y_min + inset, y_max - inset)

    def clamp(p):
        return (min(max(p[0], x_min + margin), x_max - margin),
                min(max(p[1], y_min + margin), y_max - margin))

    def recovery_targets(pose_now):
        """Candidate reorientation targets when coarse planning is blocked.

        Yields nearby points along rays fanned around the robot's current
        heading (smallest turn first, goal-ward side preferred), keeping
        only rays whose whole length is traversable under the GP mean so
        the footstep planner has a realistic chance of reaching them.
        """
        bearing = math.atan2(goal[1] - pose_now[1], goal[0] - pose_now[0])
        offs = [0.0]
        for mag in (0.4, 0.8, 1.2, 1.6, 2.1, 2.6):
            pair = sorted((mag, -mag), key=lambda o: abs(
                wrap_angle(pose_now[2] + o - bearing)))
            offs.extend(pair)
        offs.append(math.pi)

        def radii_for(off):
            # targets inside the robot's minimum turning circle (radius
            # d_safe / (2 sin(dtheta_safe/2)) ≈ 1.34 m) are unreachable by
            # the footstep search, so mid offsets need a longer standoff
            a = abs(off)
            if a <= 0.5:
                return (2.0, 1.4)
            if a <= 0.9:
                return (2.6, 3.2)
            if a >= 3.0:
                return (2.6, 1.6)
            return (3.2,)

        for off in offs:
            ang = pose_now[2] + off
            for radius in radii_for(off):
                t = np.array([pose_now[0] + radius * math.cos(ang),
                              pose_now[1] + radius * math.sin(ang)])
                if not (plan_bounds[0] <= t[0] <= plan_bounds[1]
                        and plan_bounds[2] <= t[1] <= plan_bounds[3]):
                    continue
                ts = np.linspace(0.25, radius, int(radius / 0.25))
                ray = pose_now[:2] + ts[:, None] * np.array(
                    [math.cos(ang), math.sin(ang)])
                if (terrain_mean(model, ray) <= limits.z_safe).all():
                    yield off, t
                    break

    def rotation_trajectory(pose_now, off, stance_now):
        """Near-in-place rotation by ``off`` using short pivot steps.

        The footstep search cannot reach targets inside the minimum
        turning circle, so a blocked robot reorients with d=0.05 m steps
        before resuming normal planning.
        """
        x, y_, th = pose_now
        pts = [np.array([x, y_, th])]
        remaining = off
        while abs(remaining) > 1e-9:
            d_th = math.copysign(min(limits.dtheta_safe, abs(remaining)),
                                 remaining)
            th = wrap_angle(th + d_th)
            x += 0.05 * math.cos(th)
            y_ += 0.05 * math.sin(th)
            if not (x_min + 0.05 <= x <= x_max - 0.05
                    and y_min + 0.05 <= y_ <= y_max - 0.05):
                return None
            pts.append(np.array([x, y_, th]))
            remaining -= d_th
        wpts = np.array(pts)
        if (terrain_mean(model, wpts[1:, :2]) > limits.z_safe).any():
            return None
        rot = _actions_from_waypoints(wpts, model, stance_now)
        rot.scores = (0.0, 0.0)
        return rot

    while outcome is None:
        if float(np.hypot(pose[0] - goal[0], pose[1] - goal[1])) <= limits.d_safe:
            outcome = "reached"
            break
        if steps >= config.max_steps:
            outcome = "budget-exhausted"
            break

        te = time.perf_counter()
        recovery = failures >= 2
        gpath = None
        target = None
        traj = None

        def try_local(tgt, m, budget, lim):
            try:
                return plan_candidates(pose, tgt, model, err_model, lim,
                                       budget, rng_local, m=m,
                                       alpha_w=config.alpha_w,
                                       beta_w=config.beta_w,
                                       bounds=plan_bounds,
                                       start_stance=stance, start_slack=0.05)
            except UsageError:
                return None

        if not recovery:
            # retry with a shorter coarse step: a smaller barrier radius
            # allows tighter maneuvers around newly discovered obstacles
            d_eff = config.d_step if failures == 0 else max(
                0.6 * config.d_step, config.d_safe + 0.1)
            # the retry (failures == 1) also drops the planning margin
            lim = plan_limits if failures == 0 else limits
            try:
                gpath = lda_g_rrt(pose[:2], pose[2], goal, model, d_eff,
                                  lim, config.global_budget, rng_global,
                                  bounds=plan_bounds, start_slack=0.05)
            except UsageError:
                gpath = None
            if gpath is not None:
                wpts = extract_waypoints(gpath, partition)
                target = wpts[0]
                if (np.hypot(*(target - np.asarray(pose[:2]))) < 1e-9
                        and len(wpts) > 1):
                    target = wpts[1]
                traj = try_local(target, config.m_candidates,
                                 config.local_budget, lim)
                if traj is None and len(gpath) > 1 and \
                        np.linalg.norm(gpath[1] - target) > 1e-9:
                    # the condensed waypoint can lie far off the robot's
                    # heading; the first coarse vertex never does
                    target = gpath[1]
                    traj = try_local(target, config.m_candidates,
                                     config.local_budget, lim)
        else:
            # last resort: reorient toward open ground, then resume
            # coarse planning with the new heading next epoch
            for off, tgt in recovery_targets(pose):
                if abs(off) <= 0.35:
                    # the clear ray is nearly ahead; walk toward it
                    traj = try_local(tgt, 1, config.local_budget, limits)
                else:
                    traj = rotation_trajectory(pose, off, stance)
                if traj is not None:
                    target = tgt
                    break

        if traj is None:
            failures += 1
            if failures >= MAX_CONSECUTIVE_FAILURES:
                outcome = "failed-untraversable"
            continue
        failures = 0
        epoch += 1

        # never end a segment facing a wall: drop trailing steps whose
        # final pose would have every reachable next step above the limit
        wp = traj.waypoints
        n_act = len(traj.actions)
        if not recovery and float(np.hypot(wp[-1, 0] - goal[0],
                                           wp[-1, 1] - goal[1])) > limits.d_safe:
            while n_act > 1:
                x, y_, th = wp[n_act]
                probes = np.array(
                    [[x + limits.d_safe * math.cos(th + d),
                      y_ + limits.d_safe * math.sin(th + d)]
                     for d in (-limits.dtheta_safe, 0.0, limits.dtheta_safe)])
                # probe against the planning margin: the map will shift
                # once the wall ahead is sensed up close
                if (terrain_mean(model, probes) <= plan_limits.z_safe).any():
                    break
                n_act -= 1

        # execute the segment step by step from the realized pose
        executed = 0
        for act in traj.actions[:n_act]:
            apex = ApexState(p_apex=pose[:2], theta=pose[2], stance=stance)
            step_plan = plan_step(apex, act)
            prev = prev_action if prev_action is not None else act
            ctx = model_error.StepContext(
                d_c=prev.d, dtheta_c=prev.dtheta, dz_c=prev.dz,
                d_n=act.d, dtheta_n=act.dtheta, dz_n=act.dz, stance=act.psi)
            planned = (step_plan.next_apex.p_apex[0],
                       step_plan.next_apex.p_apex[1],
                       step_plan.next_apex.theta)
            realized = model_error.perturb_execution(step_plan, ctx, oracle,
                                                     rng_exec)
            rx, ry = clamp(realized[:2])
            realized = (rx, ry, realized[2])
            offset = (realized[0] - planned[0], realized[1] - planned[1])

            samples = terrain.sense(field, realized[:2], sensor, rng_sense)
            hazard = False
            if samples:
                X = np.vstack([X, [s.location for s in samples]])
                y = np.concatenate([y, [s.elevation for s in samples]])
                # abort the segment if fresh samples reveal that an upcoming
                # planned waypoint sits above the limit: the frozen model
                # won't see the wall until the robot is already against it
                ahead = wp[executed + 2:n_act + 1, :2]
                if len(ahead):
                    sl = np.array([s.location for s in samples])
                    sz = np.array([s.elevation for s in samples])
                    hot = sl[sz > limits.z_safe + 0.01]
                    if len(hot):
                        d2 = ((ahead[:, None, :] - hot[None, :, :]) ** 2
                              ).sum(-1)
                        hazard = bool((d2 <= 0.45 ** 2).any())

            err_term = abs(model_error.predict_deviation(err_model, ctx))
            var_w = float(terrain_var(model, np.array([planned[:2]]))[0])
            info_term = 0.5 * math.log(2 * math.pi * max(var_w, 1e-300)) + 0.5

            steps += 1
            steps_since_retrain += 1
            executed += 1
            log.steps.append(StepRecord(
                step=steps, epoch=epoch, planned=planned, offset=offset,
                realized=realized, d=act.d, dtheta=act.dtheta, dz=act.dz,
                psi=act.psi, error_term=err_term, info_term=info_term,
                n_samples=len(samples)))
            pose = realized
            stance = act.psi
            prev_action = act

            if float(np.hypot(pose[0] - goal[0], pose[1] - goal[1])) <= limits.d_safe:
                outcome = "reached"
                break
            if steps >= config.max_steps:
                outcome = "budget-exhausted"
                break
            if steps_since_retrain >= config.retrain_period:
                break
            if hazard:
                break

        # retrain: at segment completion or period expiry, whichever first
        hyper = (config.hyper_refit_every > 0
                 and epoch % config.hyper_refit_every == 0)
        if hyper:
            sub = min(config.hyper_subsample, len(X))
            trained, _ = gpmod.train_hyperparams(
                gpmod.fit(X, y, kernel, noise_var, inducing=config.inducing),
                max_iter=config.hyper_iters,
                subsample=sub, seed=config.seed)
            kernel = trained
        model = refit(kernel)
        steps_since_retrain = 0

        log.epochs.append(EpochRecord(
            epoch=epoch, pose=pose, target=(float(target[0]), float(target[1])),
            global_vertices=0 if gpath is None else len(gpath),
            score_error=traj.scores[0],
            score_info=traj.scores[1], steps_executed=executed,
            retrained=True, hyper_refit=hyper, train_size=len(X),
            avg_env_std=_avg_env_std(model, field), recovery=recovery,
            wall_time=time.perf_counter() - te))

    log.outcome = outcome
    log.total_steps = steps
    log.final_model = model
    log.wall_time = time.perf_counter() - t0
    return log



def compute_metrics(log: MissionLog, field: terrain.TerrainField,
                    model=None) -> BenchmarkReport:
    """Benchmark the final terrain GP against ground truth."""
    model = model if model is not None else log.final_model
    if model is None:
        raise DataError("mission log carries no final terrain model")

    xs, ys = field.node_coords()
    xx, yy = np.meshgrid(xs, ys)
    grid_pts = np.column_stack([xx.ravel(), yy.ravel()])
    truth = field.grid.ravel()
    mu_env = terrain_mean(model, grid_pts)
    std_env = np.sqrt(np.maximum(terrain_var(model, grid_pts), 0.0))
    abs_env = np.abs(mu_env - truth)

    if log.steps:
        wp = np.array([r.realized[:2] for r in log.steps])
        mu_p = terrain_mean(model, wp)
        std_p = np.sqrt(np.maximum(terrain_var(model, wp), 0.0))
        truth_p = field.elevation(wp)
        avg_err_path = float(np.mean(np.abs(mu_p - truth_p)))
        avg_std_path = float(std_p.mean())
    else:
        avg_err_path = None
        avg_std_path = None

    return BenchmarkReport(
        kernel=log.config.get("kernel", "unknown"), outcome=log.outcome,
        total_steps=log.total_steps,
        retrain_period=int(log.config.get("retrain_period", 0)),
        wall_time=log.wall_time,
        avg_error_path=avg_err_path, avg_std_path=avg_std_path,
        sum_error_env=float(abs_env.sum()), avg_error_env=float(abs_env.mean()),
        avg_std_env=float(std_env.mean()))


_STEP_FIELDS = ["step", "epoch", "x_planned", "y_planned", "theta_planned",
                "dx", "dy", "x", "y", "theta", "d", "dtheta", "dz", "psi",
                "error_term", "info_term", "n_samples"]
_EPOCH_FIELDS = ["epoch", "x", "y", "theta", "target_x", "target_y",
                 "global_vertices", "score_error", "score_info",
                 "steps_executed", "retrained", "hyper_refit", "train_size",
                 "avg_env_std", "recovery"]


def _step_row(r: StepRecord) -> list:
    return [r.step, r.epoch, *r.planned, *r.offset, *r.realized,
            r.d, r.dtheta, r.dz, r.psi, r.error_term, r.info_term,
            r.n_samples]


def _epoch_row(e: EpochRecord) -> list:
    return [e.epoch, *e.pose, *e.target, e.global_vertices, e.score_error,
            e.score_info, e.steps_executed, int(e.retrained),
            int(e.hyper_refit), e.train_size, e.avg_env_std, int(e.recovery)]


def log_to_bytes(log: MissionLog) -> bytes:
    """Canonical serialization of a mission log; wall times excluded."""
    payload = {
        "config": log.config,
        "outcome": log.outcome,
        "total_steps": log.total_steps,
        "steps": [_step_row(r) for r in log.steps],
        "epochs": [_epoch_row(e) for e in log.epochs],
    }
    return json.dumps(payload, sort_keys=True,
                      separators=(",", ":")).encode()


def export(log: MissionLog, report: BenchmarkReport, out_dir) -> list[Path]:
    """Write mission.csv, epochs.csv, report.json, and PGM heatmaps."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []

        p = out / "mission.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_STEP_FIELDS)
            for r in log.steps:
                w.writerow(_step_row(r))
        written.append(p)

        p = out / "epochs.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_EPOCH_FIELDS)
            for e in log.epochs:
                w.writerow(_epoch_row(e))
        written.append(p)

        p = out / "report.json"
        with open(p, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        written.append(p)

        if log.field is not None and log.final_model is not None:
            field = log.field
            xs, ys = field.node_coords()
            xx, yy = np.meshgrid(xs, ys)
            pts = np.column_stack([xx.ravel(), yy.ravel()])
            mu = terrain_mean(log.final_model, pts).reshape(field.grid.shape)
            std = np.sqrt(np.maximum(
                terrain_var(log.final_model, pts), 0.0)).reshape(field.grid.shape)
            err = np.abs(mu - field.grid)
            for name, arr in (("mean", mu), ("std", std), ("abs_error", err)):
                p = out / f"{name}.pgm"
                terrain.field_to_pgm(arr, p)
                written.append(p)
        return written
    except OSError as exc:
        raise OSError(f"failed writing mission artifacts under {out}: {exc}")
