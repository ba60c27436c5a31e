"""Lateral step-deviation learning and the synthetic perturbation oracle.

The executor's gap between the reduced-order step plan and "real" motion
is modeled as a smooth function of the step context (previous->current
and current->next step parameters).  A GP is trained offline on absolute
deviations; at prediction time the sign follows the stance foot: positive
for left footsteps, negative for right.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from . import gp as gpmod
from .errors import UsageError
from .kernels import RBFKernel
from .locomotion import StepPlan, wrap_angle

__all__ = [
    "StepContext",
    "ContextRanges",
    "PerturbationOracle",
    "generate_training_set",
    "train_model_error",
    "predict_deviation",
    "to_global",
    "perturb_execution",
    "evaluate_holdout",
    "save_artifact",
    "load_artifact",
]

TARGET_MEAN_DEVIATION = 1.75e-2  # calibrated average |deviation| per step [m]


@dataclass(frozen=True)
class StepContext:
    """Six step parameters feeding the deviation GP, plus the stance foot."""

    d_c: float
    dtheta_c: float
    dz_c: float
    d_n: float
    dtheta_n: float
    dz_n: float
    stance: str = "left"

    def vector(self) -> np.ndarray:
        return np.array([self.d_c, self.dtheta_c, self.dz_c,
                         self.d_n, self.dtheta_n, self.dz_n])


@dataclass(frozen=True)
class ContextRanges:
    """Admissible ranges of the six context inputs."""

    d: tuple[float, float] = (0.2, 0.5)
    dtheta: tuple[float, float] = (-0.3, 0.3)
    dz: tuple[float, float] = (-0.1, 0.1)
    points_per_axis: int = 4

    def axes(self) -> list[np.ndarray]:
        n = self.points_per_axis
        return [np.linspace(*self.d, n), np.linspace(*self.dtheta, n),
                np.linspace(*self.dz, n), np.linspace(*self.d, n),
                np.linspace(*self.dtheta, n), np.linspace(*self.dz, n)]

    def grid(self) -> np.ndarray:
        return np.array(list(itertools.product(*self.axes())))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.array([self.d[0], self.dtheta[0], self.dz[0]] * 2)
        hi = np.array([self.d[1], self.dtheta[1], self.dz[1]] * 2)
        return rng.uniform(lo, hi, size=(n, 6))


class PerturbationOracle:
    """Smooth synthetic |lateral deviation| standing in for executor error.

    A fixed quadratic/absolute-value form in the step context, rescaled at
    construction so its mean over the reference grid matches the
    calibration target (1.75e-2 m by default).
    """

    def __init__(self, ranges: ContextRanges | None = None,
                 mean_magnitude: float = TARGET_MEAN_DEVIATION,
                 noise_std: float = 1e-3):
        self.ranges = ranges or ContextRanges()
        self.noise_std = float(noise_std)
        self.mean_magnitude = float(mean_magnitude)
        self._scale = 1.0
        if mean_magnitude > 0:
            raw = self._raw(self.ranges.grid())
            self._scale = mean_magnitude / float(raw.mean())

    @staticmethod
    def _raw(V: np.ndarray) -> np.ndarray:
        V = np.atleast_2d(V)
        return (0.4
                + 1.5 * V[:, 1] ** 2 + 1.5 * V[:, 4] ** 2
                + 0.8 * np.abs(V[:, 2]) + 0.8 * np.abs(V[:, 5])
                + 1.0 * (V[:, 0] - 0.35) ** 2 + 1.0 * (V[:, 3] - 0.35) ** 2)

    def magnitude(self, ctx: StepContext) -> float:
        """Deterministic deviation magnitude, meters."""
        if self.mean_magnitude == 0:
            return 0.0
        return float(self._raw(ctx.vector()[None, :])[0] * self._scale)

    def magnitude_batch(self, V: np.ndarray) -> np.ndarray:
        if self.mean_magnitude == 0:
            return np.zeros(len(np.atleast_2d(V)))
        return self._raw(V) * self._scale

    def draw(self, ctx: StepContext, rng: np.random.Generator) -> float:
        """Noisy non-negative deviation magnitude."""
        m = self.magnitude(ctx)
        if self.noise_std > 0:
            m += rng.normal(0.0, self.noise_std)
        return max(m, 0.0)


def generate_training_set(oracle: PerturbationOracle,
                          ranges: ContextRanges,
                          rng: np.random.Generator
                          ) -> tuple[np.ndarray, np.ndarray]:
    """One noisy oracle evaluation per grid point, absolute targets.

    Left and right stances produce the same absolute deviation, so each
    grid point yields a single |deviation| target.
    """
    X = ranges.grid()
    y = oracle.magnitude_batch(X)
    if oracle.noise_std > 0:
        y = y + rng.normal(0.0, oracle.noise_std, len(y))
    return X, np.abs(y)


def train_model_error(oracle: PerturbationOracle,
                      ranges: ContextRanges | None = None,
                      seed: int = 0, noise_var: float = 1e-6,
                      tune: bool = True) -> gpmod.GPModel:
    """Offline-train the deviation GP on the oracle grid."""
    ranges = ranges or ContextRanges()
    rng = np.random.default_rng(seed)
    X, y = generate_training_set(oracle, ranges, rng)
    kernel = RBFKernel(sigma_f2=1e-4, lengthscale=0.4, dim=6)
    model = gpmod.fit(X, y, kernel, noise_var)
    if tune:
        kernel, _ = gpmod.train_hyperparams(model, max_iter=25,
                                            subsample=min(300, len(X)),
                                            seed=seed)
        model = gpmod.fit(X, y, kernel, noise_var)
    return model


def predict_deviation(model: gpmod.GPModel, ctx: StepContext) -> float:
    """Signed lateral deviation in the step's local frame.

    Magnitude is the GP posterior mean clamped at zero; sign is + for
    left-foot steps and - for right-foot steps.
    """
    if model.n == 0:
        raise UsageError("deviation GP has no training data")
    mean = float(gpmod.predict_mean(model, ctx.vector()[None, :])[0])
    mag = max(mean, 0.0)
    return mag if ctx.stance == "left" else -mag


def to_global(deviation_local: float, waypoint) -> np.ndarray:
    """Rotate a lateral deviation into the world frame at a waypoint.

    The lateral axis is the waypoint heading rotated by +90 degrees.
    """
    theta = waypoint[2]
    return deviation_local * np.array([-math.sin(theta), math.cos(theta)])


def perturb_execution(step: StepPlan, ctx: StepContext,
                      oracle: PerturbationOracle,
                      rng: np.random.Generator) -> tuple[float, float, float]:
    """Realized waypoint after executing a planned step.

    The planned next-apex waypoint is shifted laterally by a signed oracle
    draw; deterministic for a fixed rng state.
    """
    apex = step.next_apex
    mag = oracle.draw(ctx, rng)
    signed = mag if apex.stance == "left" else -mag
    off = to_global(signed, (apex.p_apex[0], apex.p_apex[1], apex.theta))
    return (apex.p_apex[0] + off[0], apex.p_apex[1] + off[1],
            wrap_angle(apex.theta))


def evaluate_holdout(model: gpmod.GPModel, oracle: PerturbationOracle,
                     ranges: ContextRanges, n: int = 500,
                     seed: int = 1) -> dict:
    """Held-out accuracy: mean |prediction - truth| vs mean |truth|."""
    rng = np.random.default_rng(seed)
    V = ranges.sample(n, rng)
    truth = oracle.magnitude_batch(V)
    pred = np.maximum(gpmod.predict_mean(model, V), 0.0)
    mae = float(np.mean(np.abs(pred - truth)))
    mean_true = float(np.mean(np.abs(truth)))
    return {"mae": mae, "mean_true": mean_true,
            "ratio": mean_true / mae if mae > 0 else float("inf")}


def save_artifact(model: gpmod.GPModel, path, extra: dict | None = None) -> None:
    payload = {"model": gpmod.model_to_dict(model)}
    if extra:
        payload["holdout"] = extra
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_artifact(path) -> gpmod.GPModel:
    with open(path) as fh:
        payload = json.load(fh)
    return gpmod.model_from_dict(payload["model"])
