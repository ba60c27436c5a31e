"""Reduced-order PIPM step dynamics and phase-space step planning.

A step takes the robot from one apex state to the next.  The sagittal
plan places the switching state by equating the orbital energies of the
forward branch (pendulum about the current stance foot, under the current
apex) and the backward branch (about the new foot, under the next apex).
The lateral plan solves the new foot's lateral offset by bisection so the
center of mass returns to the waypoint line at the next apex.

Note on conventions: stance feet sit under the apex waypoints sagittally;
the spec's "foot placement at the midpoint" symmetric case refers to the
phase-space switching state, which this module exposes as
``StepPlan.switch_position``.  Placing the physical foot at the midpoint
would be infeasible at the default apex velocity (v_apex < omega * d/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InfeasibleStepError, UsageError

__all__ = [
    "GRAVITY",
    "ApexState",
    "HighLevelAction",
    "StepPlan",
    "SafetyLimits",
    "wrap_angle",
    "plan_step",
    "pipm_propagate",
    "action_between",
    "orbital_energy",
]

GRAVITY = 9.81
DEFAULT_APEX_HEIGHT = 1.0     # relative CoM height over the stance foot [m]
DEFAULT_APEX_VELOCITY = 0.4   # nominal sagittal apex velocity [m/s]
DEFAULT_LATERAL_OFFSET = 0.1  # nominal stance-foot lateral offset [m]


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class ApexState:
    """CoM state at the apex of a walking step."""

    p_apex: tuple[float, float]   # planar CoM position [m]
    theta: float                  # heading [rad]
    v_apex: float = DEFAULT_APEX_VELOCITY
    z_apex: float = DEFAULT_APEX_HEIGHT  # absolute apex CoM height [m]
    stance: str = "left"

    def __post_init__(self):
        if self.v_apex <= 0 or self.z_apex <= 0:
            raise ConfigError("apex velocity and height must be positive")
        if self.stance not in ("left", "right"):
            raise ConfigError("stance must be 'left' or 'right'")


@dataclass(frozen=True)
class HighLevelAction:
    """One step: distance, heading change, elevation change, stance foot."""

    d: float
    dtheta: float
    dz: float
    psi: str  # stance foot taking this step: "left" | "right"

    def __post_init__(self):
        if self.d <= 0:
            raise ConfigError("step distance must be positive")
        if self.psi not in ("left", "right"):
            raise ConfigError("psi must be 'left' or 'right'")


@dataclass(frozen=True)
class SafetyLimits:
    d_safe: float = 0.4       # step distance [m]
    dtheta_safe: float = 0.3  # max heading change per step [rad]
    z_safe: float = 0.15      # max traversable elevation [m]

    def __post_init__(self):
        if min(self.d_safe, self.dtheta_safe, self.z_safe) <= 0:
            raise ConfigError("safety limits must be positive")


@dataclass(frozen=True)
class StepPlan:
    """Planned step: foot placement, CoM segment, and the next apex."""

    p_foot: tuple[float, float, float]  # new stance foot, world frame
    omega: float                        # asymptote slope sqrt(g / h) [1/s]
    a: float                            # sagittal surface slope coefficient
    b: float                            # lateral surface slope coefficient
    com_samples: np.ndarray             # rows (t, x, y, z)
    next_apex: ApexState
    switch_time: float                  # phase-space branch intersection [s]
    switch_position: float              # along-step coordinate of the switch [m]
    duration: float
    foot_prev: tuple[float, float]      # previous stance foot, planar


def orbital_energy(v: float, x: float, x_foot: float, omega: float) -> float:
    """E = v^2/2 - omega^2 (x - x_foot)^2 / 2, conserved in single stance."""
    return 0.5 * v * v - 0.5 * omega * omega * (x - x_foot) ** 2


def _bisect(f, lo: float, hi: float, tol: float = 1e-12, it: int = 200) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise InfeasibleStepError("bisection bracket does not straddle a root")
    for _ in range(it):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or hi - lo < tol:
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def plan_step(apex: ApexState, action: HighLevelAction, *,
              g: float = GRAVITY, h_apex: float = DEFAULT_APEX_HEIGHT,
              lateral_offset: float = DEFAULT_LATERAL_OFFSET,
              dt: float = 0.02) -> StepPlan:
    """Plan one PIPM step from ``apex`` under ``action``.

    Raises :class:`InfeasibleStepError` when the forward/backward
    phase-space branches do not intersect between the apexes.
    """
    if h_apex <= 0:
        raise ConfigError("relative apex height must be positive")
    d = action.d
    theta_next = wrap_angle(apex.theta + action.dtheta)
    u = np.array([math.cos(theta_next), math.sin(theta_next)])
    lat = np.array([-u[1], u[0]])  # +90 deg: left of travel
    p0 = np.asarray(apex.p_apex, dtype=float)
    p1 = p0 + d * u

    omega = math.sqrt(g / h_apex)
    v1 = apex.v_apex
    v2 = apex.v_apex  # constant nominal apex velocity policy

    # sagittal switching state: v1^2 + w^2 s^2 = v2^2 + w^2 (s - d)^2
    s_sw = (v2 * v2 - v1 * v1 + omega * omega * d * d) / (2 * omega * omega * d)
    if not (0.0 <= s_sw <= d):
        raise InfeasibleStepError(
            f"no phase-space intersection within the step (s={s_sw:.3f}, d={d})")
    v_sw = math.sqrt(v1 * v1 + omega * omega * s_sw * s_sw)
    t_sw = math.asinh(omega * s_sw / v1) / omega
    tau2 = math.asinh(omega * (d - s_sw) / v2) / omega
    T = t_sw + tau2

    # lateral: phase 1 about the previous foot (opposite side of psi),
    # phase 2 about the new foot; |eta2| from bisection so lambda(T) = 0.
    side = 1.0 if action.psi == "left" else -1.0
    eta1 = -side * lateral_offset
    a1, b1 = omega * t_sw, omega * tau2
    lam_sw = eta1 * (1.0 - math.cosh(a1))
    lamdot_sw = -eta1 * omega * math.sinh(a1)

    def lam_T(eta2):
        return (eta2 + (lam_sw - eta2) * math.cosh(b1)
                + (lamdot_sw / omega) * math.sinh(b1))

    hi = side * max(10.0 * lateral_offset, 10.0 * abs(lam_sw) + 1.0)
    eta2 = _bisect(lam_T, 0.0, hi) if lam_T(0.0) * lam_T(hi) <= 0 \
        else _bisect(lam_T, -hi, 0.0)

    # surface slope along the step; lateral slope unobserved -> 0
    slope = action.dz / d
    a_coef = slope * u[0]
    b_coef = slope * u[1]

    next_apex = ApexState(p_apex=(float(p1[0]), float(p1[1])),
                          theta=theta_next, v_apex=v2,
                          z_apex=apex.z_apex + action.dz, stance=action.psi)
    foot_xy = p1 + eta2 * lat
    z_foot = next_apex.z_apex - h_apex

    # closed-form CoM samples (t, x, y, z) in the world frame
    ts = np.arange(0.0, T, dt)
    if len(ts) == 0 or ts[-1] < T:
        ts = np.append(ts, T)
    s = np.where(
        ts <= t_sw,
        (v1 / omega) * np.sinh(omega * ts),
        d + (s_sw - d) * np.cosh(omega * (ts - t_sw))
        + (v_sw / omega) * np.sinh(omega * (ts - t_sw)))
    lam = np.where(
        ts <= t_sw,
        eta1 * (1.0 - np.cosh(omega * ts)),
        eta2 + (lam_sw - eta2) * np.cosh(omega * (ts - t_sw))
        + (lamdot_sw / omega) * np.sinh(omega * (ts - t_sw)))
    # pin the endpoints exactly at the bounding apexes
    s[0], lam[0] = 0.0, 0.0
    s[-1], lam[-1] = d, 0.0
    xy = p0[None, :] + s[:, None] * u[None, :] + lam[:, None] * lat[None, :]
    z = apex.z_apex + slope * s
    com = np.column_stack([ts, xy, z])

    return StepPlan(p_foot=(float(foot_xy[0]), float(foot_xy[1]), float(z_foot)),
                    omega=omega, a=float(a_coef), b=float(b_coef),
                    com_samples=com, next_apex=next_apex,
                    switch_time=t_sw, switch_position=float(s_sw),
                    duration=T, foot_prev=(float(p0[0]), float(p0[1])))


def pipm_propagate(state, foot, omega: float, duration: float,
                   dt: float, a: float = 0.0, b: float = 0.0,
                   z0: float = 0.0) -> np.ndarray:
    """Closed-form PIPM rollout about a fixed foot.

    ``state`` is (x, y, vx, vy); returns rows (t, x, y, z, vx, vy) with the
    hyperbolic solution per axis and z from the sloped-surface constraint
    z = z0 + a*(x - x_foot) + b*(y - y_foot).
    """
    if omega <= 0 or dt <= 0:
        raise UsageError("omega and dt must be positive")
    x0, y0, vx0, vy0 = (float(v) for v in state)
    fx, fy = float(foot[0]), float(foot[1])
    ts = np.arange(0.0, duration, dt)
    if len(ts) == 0 or ts[-1] < duration:
        ts = np.append(ts, duration)
    ch, sh = np.cosh(omega * ts), np.sinh(omega * ts)
    x = fx + (x0 - fx) * ch + (vx0 / omega) * sh
    y = fy + (y0 - fy) * ch + (vy0 / omega) * sh
    vx = (x0 - fx) * omega * sh + vx0 * ch
    vy = (y0 - fy) * omega * sh + vy0 * ch
    z = z0 + a * (x - fx) + b * (y - fy)
    return np.column_stack([ts, x, y, z, vx, vy])


def action_between(w, w_next, dz: float, prev_stance: str) -> HighLevelAction:
    """High-level action taking waypoint ``w`` to ``w_next``.

    Waypoints are (x, y, theta); ``dz`` is the terrain-mean elevation
    change between them; the stance foot alternates from ``prev_stance``.
    """
    dx, dy = w_next[0] - w[0], w_next[1] - w[1]
    d = math.hypot(dx, dy)
    if d == 0.0:
        raise UsageError("waypoints must be distinct")
    dtheta = wrap_angle(w_next[2] - w[2])
    psi = "right" if prev_stance == "left" else "left"
    return HighLevelAction(d=d, dtheta=dtheta, dz=float(dz), psi=psi)
