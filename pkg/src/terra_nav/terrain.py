"""Synthetic terrain fields and the simulated range sensor.

A :class:`TerrainField` is a regular lattice of elevation values over an
axis-aligned rectangle, queried anywhere via bilinear interpolation.
Three generator styles cover the qualitative difficulty spectrum used in
the experiments: isolated hills, a single elongated ridge, and smooth
low-frequency undulation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "TerrainField",
    "TerrainSample",
    "SensorSpec",
    "TerrainSpec",
    "generate_terrain",
    "elevation_at",
    "sense",
    "field_to_csv",
    "field_to_pgm",
]

STYLES = ("hills", "ridge", "undulation")


@dataclass(frozen=True)
class TerrainField:
    """Immutable ground-truth elevation surface.

    ``grid[i, j]`` is the elevation at ``(x_min + j*resolution,
    y_min + i*resolution)``; the lattice covers the bounds exactly.
    """

    bounds: tuple[float, float, float, float]  # (x_min, x_max, y_min, y_max)
    grid: np.ndarray                           # shape (ny, nx), meters
    resolution: float                          # meters per cell

    def __post_init__(self):
        x_min, x_max, y_min, y_max = self.bounds
        if self.resolution <= 0 or x_max <= x_min or y_max <= y_min:
            raise ConfigError("invalid bounds or resolution")
        self.grid.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """1-D x and y coordinates of the lattice nodes."""
        ny, nx = self.grid.shape
        x_min, _, y_min, _ = self.bounds
        return (x_min + self.resolution * np.arange(nx),
                y_min + self.resolution * np.arange(ny))

    def contains(self, p) -> bool:
        x_min, x_max, y_min, y_max = self.bounds
        x, y = float(p[0]), float(p[1])
        return x_min <= x <= x_max and y_min <= y <= y_max

    def elevation(self, points: np.ndarray) -> np.ndarray:
        """Bilinear interpolation for an (n, 2) array of in-bounds points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x_min, x_max, y_min, y_max = self.bounds
        if (pts[:, 0] < x_min).any() or (pts[:, 0] > x_max).any() or \
           (pts[:, 1] < y_min).any() or (pts[:, 1] > y_max).any():
            raise DomainError("query outside terrain bounds")
        ny, nx = self.grid.shape
        fx = (pts[:, 0] - x_min) / self.resolution
        fy = (pts[:, 1] - y_min) / self.resolution
        j0 = np.clip(np.floor(fx).astype(int), 0, nx - 2)
        i0 = np.clip(np.floor(fy).astype(int), 0, ny - 2)
        tx = fx - j0
        ty = fy - i0
        g = self.grid
        z = (g[i0, j0] * (1 - tx) * (1 - ty)
             + g[i0, j0 + 1] * tx * (1 - ty)
             + g[i0 + 1, j0] * (1 - tx) * ty
             + g[i0 + 1, j0 + 1] * tx * ty)
        return z


@dataclass(frozen=True)
class TerrainSample:
    location: tuple[float, float]
    elevation: float


@dataclass(frozen=True)
class SensorSpec:
    """Range sensor: uniform samples in a disc around the robot."""

    radius: float = 3.0
    samples_per_step: int = 10
    noise_std: float = 0.005
    rng_seed: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("sensor radius must be > 0")
        if self.samples_per_step < 0 or self.noise_std < 0:
            raise ConfigError("samples_per_step and noise_std must be >= 0")


@dataclass(frozen=True)
class TerrainSpec:
    """Parameters for the synthetic terrain generator."""

    bounds: tuple[float, float, float, float] = (0.0, 20.0, 0.0, 20.0)
    resolution: float = 20.0 / 49.0   # 50x50 nodes over 20x20 m
    amplitude: float = 0.5
    style: str = "hills"
    z_min: float = 0.0
    z_max: float = 0.5
    # discs (x, y, radius) where elevation is tapered to zero, e.g. around
    # mission start and goal so they are never spawned inside an obstacle
    clear_zones: tuple = ()

    def __post_init__(self):
        if self.style not in STYLES:
            raise ConfigError(f"unknown terrain style {self.style!r}")
        if not (self.z_min <= self.amplitude <= self.z_max) and self.amplitude != 0:
            raise ConfigError("amplitude must lie within [z_min, z_max]")


def _node_grid(spec: TerrainSpec) -> tuple[np.ndarray, np.ndarray]:
    x_min, x_max, y_min, y_max = spec.bounds
    nx = int(round((x_max - x_min) / spec.resolution)) + 1
    ny = int(round((y_max - y_min) / spec.resolution)) + 1
    if nx < 2 or ny < 2:
        raise ConfigError("resolution too coarse for the given bounds")
    xs = np.linspace(x_min, x_min + (nx - 1) * spec.resolution, nx)
    ys = np.linspace(y_min, y_min + (ny - 1) * spec.resolution, ny)
    return np.meshgrid(xs, ys)


def _hills(xx, yy, spec, rng):
    x_min, x_max, y_min, y_max = spec.bounds
    n_bumps = 12
    cx = rng.uniform(x_min + 1.0, x_max - 1.0, n_bumps)
    cy = rng.uniform(y_min + 1.0, y_max - 1.0, n_bumps)
    amp = rng.uniform(0.5, 1.0, n_bumps) * spec.amplitude
    width = rng.uniform(0.9, 2.0, n_bumps)
    z = np.zeros_like(xx)
    for k in range(n_bumps):
        r2 = (xx - cx[k]) ** 2 + (yy - cy[k]) ** 2
        z = np.maximum(z, amp[k] * np.exp(-r2 / (2 * width[k] ** 2)))
    return z


def _ridge(xx, yy, spec, rng):
    x_min, x_max, y_min, y_max = spec.bounds
    # one elongated ridge across the workspace with a traversable gap
    theta = rng.uniform(0, np.pi)
    cx = 0.5 * (x_min + x_max) + rng.uniform(-2.0, 2.0)
    cy = 0.5 * (y_min + y_max) + rng.uniform(-2.0, 2.0)
    n = np.array([-np.sin(theta), np.cos(theta)])   # ridge normal
    t = np.array([np.cos(theta), np.sin(theta)])    # ridge tangent
    dn = (xx - cx) * n[0] + (yy - cy) * n[1]
    dt = (xx - cx) * t[0] + (yy - cy) * t[1]
    width = rng.uniform(1.2, 1.8)
    z = spec.amplitude * np.exp(-dn ** 2 / (2 * width ** 2))
    gap_pos = rng.uniform(-4.0, 4.0)
    gap_width = rng.uniform(1.5, 2.5)
    z *= 1.0 - 0.95 * np.exp(-(dt - gap_pos) ** 2 / (2 * gap_width ** 2))
    return z


def _undulation(xx, yy, spec, rng):
    x_min, x_max, y_min, y_max = spec.bounds
    lx = (x_max - x_min) / rng.uniform(1.0, 2.0)
    ly = (y_max - y_min) / rng.uniform(1.0, 2.0)
    px, py = rng.uniform(0, 2 * np.pi, 2)
    s = 0.5 * (np.sin(2 * np.pi * xx / lx + px) + np.cos(2 * np.pi * yy / ly + py))
    # quintic mapping keeps saddles low (traversable valleys connect the
    # whole field) while crests approach the full amplitude
    return spec.amplitude * ((s + 1.0) / 2.0) ** 5


_STYLE_FNS = {"hills": _hills, "ridge": _ridge, "undulation": _undulation}


def generate_terrain(spec: TerrainSpec, seed: int) -> TerrainField:
    """Build a deterministic synthetic elevation field for ``seed``."""
    rng = np.random.default_rng(seed)
    xx, yy = _node_grid(spec)
    if spec.amplitude == 0:
        z = np.zeros_like(xx)
    else:
        z = _STYLE_FNS[spec.style](xx, yy, spec, rng)
        for (cx, cy, r) in spec.clear_zones:
            d = np.hypot(xx - cx, yy - cy)
            taper = np.clip((d - r) / max(r, 1e-9), 0.0, 1.0)
            z *= taper * taper * (3 - 2 * taper)  # smoothstep
    z = np.clip(z, spec.z_min, spec.z_max)
    return TerrainField(bounds=spec.bounds, grid=z, resolution=spec.resolution)


def elevation_at(field: TerrainField, p) -> float:
    """Ground-truth elevation at a single planar point (bilinear)."""
    return float(field.elevation(np.asarray(p, dtype=float)[None, :])[0])


def sense(field: TerrainField, pose, spec: SensorSpec,
          rng: np.random.Generator) -> list[TerrainSample]:
    """Collect noisy elevation samples in a disc around ``pose``.

    Exactly ``spec.samples_per_step`` samples are drawn uniformly from the
    sensing disc intersected with the field bounds.
    """
    if not field.contains(pose):
        raise DomainError("sensor pose outside terrain bounds")
    px, py = float(pose[0]), float(pose[1])
    samples: list[TerrainSample] = []
    while len(samples) < spec.samples_per_step:
        r = spec.radius * np.sqrt(rng.uniform())
        ang = rng.uniform(0, 2 * np.pi)
        x, y = px + r * np.cos(ang), py + r * np.sin(ang)
        if not field.contains((x, y)):
            continue
        z = elevation_at(field, (x, y))
        if spec.noise_std > 0:
            z += rng.normal(0.0, spec.noise_std)
        samples.append(TerrainSample(location=(x, y), elevation=z))
    return samples


def field_to_csv(field: TerrainField, path) -> None:
    """Dump the lattice as x,y,z rows."""
    xs, ys = field.node_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z"])
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                writer.writerow([f"{x:.6f}", f"{y:.6f}", f"{field.grid[i, j]:.6f}"])


def field_to_pgm(values: np.ndarray, path, vmin: float = None,
                 vmax: float = None) -> None:
    """Write a row-major ASCII PGM heatmap, values mapped linearly to 0-255."""
    arr = np.asarray(values, dtype=float)
    lo = float(arr.min()) if vmin is None else vmin
    hi = float(arr.max()) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    pix = np.clip(np.rint(255 * (arr - lo) / span), 0, 255).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{arr.shape[1]} {arr.shape[0]}\n255\n")
        for row in pix:
            fh.write(" ".join(str(v) for v in row) + "\n")
