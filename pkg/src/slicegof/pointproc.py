"""Samplers for the 3D point processes used as Voronoi generators.

The null model is a homogeneous Poisson process; the alternatives are a
Matern type-I hard-core process (mutual deletion of close pairs) and a
Matern cluster process (Poisson offspring in balls around uniform centers).
All samplers are pure functions of ``(parameters, seed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigurationError

__all__ = [
    "Window3D",
    "PointSet3D",
    "ProcessKind",
    "ProcessSpec",
    "derive_rng",
    "sample_poisson",
    "sample_matern_hardcore",
    "sample_matern_cluster",
    "sample_process",
    "matern_parent_intensity",
    "cluster_retention",
]


@dataclass(frozen=True)
class Window3D:
    """Axis-aligned box ``[ox, ox+side] x [oy, oy+side] x [oz, oz+height]``.

    With the default origin the window is ``[-side/2, side/2]^2 x [0, height]``.
    """

    side: float
    height: float
    origin: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.side) and self.side > 0):
            raise ConfigurationError(f"window side must be positive, got {self.side}")
        if not (math.isfinite(self.height) and self.height > 0):
            raise ConfigurationError(f"window height must be positive, got {self.height}")
        if self.origin is None:
            object.__setattr__(self, "origin", (-self.side / 2.0, -self.side / 2.0, 0.0))

    @property
    def volume(self) -> float:
        return self.side * self.side * self.height

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + np.array([self.side, self.side, self.height])

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)


@dataclass(frozen=True)
class PointSet3D:
    """A finite labeled point pattern inside a sampling window.

    Labels are unique integers, contiguous from 0, bijective with points.
    """

    points: np.ndarray
    labels: np.ndarray
    window: Window3D

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        lab = np.asarray(self.labels, dtype=int).reshape(-1)
        object.__setattr__(self, "labels", lab)
        if len(pts) != len(lab):
            raise ConfigurationError("points and labels must have equal length")
        if len(lab) and (np.unique(lab).size != lab.size):
            raise ConfigurationError("labels must be unique")

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_points(cls, points: np.ndarray, window: Window3D) -> "PointSet3D":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(pts, np.arange(len(pts)), window)


class ProcessKind(str, Enum):
    POISSON = "poisson"
    MATERN_HARDCORE = "matern_hardcore"
    MATERN_CLUSTER = "matern_cluster"


@dataclass(frozen=True)
class ProcessSpec:
    """Parameters of a generator process; fields irrelevant to ``kind`` are ignored.

    For the hard-core process, ``intensity`` is the target *retained* intensity;
    the parent intensity is obtained by inverting the type-I retention formula.
    With ``match_expected_count`` set, the cluster process rescales the mean
    offspring number so that the expected *in-window* count (after boundary
    clipping) equals ``intensity * volume``.
    """

    kind: ProcessKind = ProcessKind.POISSON
    intensity: float = 2.18e-4
    R: float = 0.0
    n_cl: int = 0
    lambda_cl: float = 0.0
    match_expected_count: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ProcessKind(self.kind))
        for name in ("intensity", "R", "lambda_cl"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {v}")
        if self.n_cl < 0:
            raise ConfigurationError(f"n_cl must be >= 0, got {self.n_cl}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "intensity": self.intensity,
            "R": self.R,
            "n_cl": self.n_cl,
            "lambda_cl": self.lambda_cl,
            "match_expected_count": self.match_expected_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSpec":
        return cls(**d)


def derive_rng(seed, index: int | None = None) -> np.random.Generator:
    """Build the RNG for a run, or for replication ``index`` of a run.

    Replication streams are ``SeedSequence(root_seed, spawn_key=(index,))``,
    so a parallel Monte Carlo over indices is reproducible and order-free.
    """
    if isinstance(seed, np.random.Generator):
        if index is not None:
            raise ConfigurationError("cannot derive an indexed stream from a Generator")
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    if index is not None:
        seed = np.random.SeedSequence(seed.entropy, spawn_key=(*seed.spawn_key, index))
    return np.random.default_rng(seed)


def sample_poisson(intensity: float, window: Window3D, seed) -> PointSet3D:
    """Homogeneous Poisson process: count ~ Poisson(intensity * |window|), iid uniform."""
    if not (math.isfinite(intensity) and intensity >= 0):
        raise ConfigurationError(f"intensity must be finite and >= 0, got {intensity}")
    rng = derive_rng(seed)
    n = rng.poisson(intensity * window.volume)
    pts = window.lo + rng.random((n, 3)) * (window.hi - window.lo)
    return PointSet3D.from_points(pts, window)


def matern_parent_intensity(retained: float, R: float) -> float:
    """Parent intensity whose type-I thinning retains intensity ``retained``.

    Solves ``lam * exp(-lam * (4/3) pi R^3) = retained`` on the subcritical
    branch (the smaller root).
    """
    if R == 0:
        return retained
    v = (4.0 / 3.0) * math.pi * R**3
    peak = 1.0 / v  # retention is maximized at lam = 1/v
    if retained > peak * math.exp(-1.0) + 1e-15:
        raise ConfigurationError(
            f"retained intensity {retained} not reachable with hard-core radius {R}"
        )
    if retained == 0:
        return 0.0
    return brentq(lambda lam: lam * math.exp(-lam * v) - retained, 0.0, peak)


def sample_matern_hardcore(lambda_parent: float, R: float, window: Window3D, seed) -> PointSet3D:
    """Matern type-I hard-core process: both members of any pair closer than R die.

    Parents are sampled in the R-dilated window so the thinning sees the
    neighbors a stationary realization would have; retained points are those
    inside ``window``.
    """
    if not (math.isfinite(lambda_parent) and lambda_parent >= 0):
        raise ConfigurationError(f"lambda_parent must be finite and >= 0, got {lambda_parent}")
    if not (math.isfinite(R) and R >= 0):
        raise ConfigurationError(f"R must be finite and >= 0, got {R}")
    rng = derive_rng(seed)
    lo, hi = window.lo - R, window.hi + R
    vol = float(np.prod(hi - lo))
    n = rng.poisson(lambda_parent * vol)
    parents = lo + rng.random((n, 3)) * (hi - lo)
    if n >= 2 and R > 0:
        close = squareform(pdist(parents) < R)
        keep = ~close.any(axis=1)
    else:
        keep = np.ones(n, dtype=bool)
    retained = parents[keep & window.contains(parents)] if n else parents
    return PointSet3D.from_points(retained, window)


def sample_matern_cluster(
    n_cl: int, lambda_cl: float, R: float, window: Window3D, seed
) -> PointSet3D:
    """Matern cluster process: ``n_cl`` uniform centers, Poisson(lambda_cl) offspring
    uniform in the ball of radius R around each center, clipped to the window."""
    if n_cl < 0:
        raise ConfigurationError(f"n_cl must be >= 0, got {n_cl}")
    if not (math.isfinite(lambda_cl) and lambda_cl >= 0):
        raise ConfigurationError(f"lambda_cl must be finite and >= 0, got {lambda_cl}")
    if not (math.isfinite(R) and R >= 0):
        raise ConfigurationError(f"R must be finite and >= 0, got {R}")
    rng = derive_rng(seed)
    centers = window.lo + rng.random((n_cl, 3)) * (window.hi - window.lo)
    offspring = []
    for c in centers:
        k = rng.poisson(lambda_cl)
        if k == 0:
            continue
        # uniform in the ball: direction on the sphere, radius ~ R * U^(1/3)
        d = rng.normal(size=(k, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pts = c + d * (R * rng.random(k) ** (1.0 / 3.0))[:, None]
        offspring.append(pts)
    pts = np.concatenate(offspring, axis=0) if offspring else np.empty((0, 3))
    pts = pts[window.contains(pts)] if len(pts) else pts
    return PointSet3D.from_points(pts, window)


def cluster_retention(R: float, window: Window3D, grid: int = 64) -> float:
    """Probability that an offspring point lands inside the window.

    With the cluster center uniform in the window and the offset uniform in
    the ball of radius R, retention is ``E_u prod_d (1 - |u_d| / L_d)_+``
    over offsets u; evaluated by a midpoint quadrature over the ball.
    """
    if R == 0:
        return 1.0
    L = np.array([window.side, window.side, window.height])
    t = (np.arange(grid) + 0.5) / grid * 2.0 - 1.0  # midpoints of [-1, 1]
    ux, uy, uz = np.meshgrid(t * R, t * R, t * R, indexing="ij", sparse=True)
    inside = ux**2 + uy**2 + uz**2 <= R**2
    w = (
        np.clip(1.0 - np.abs(ux) / L[0], 0.0, None)
        * np.clip(1.0 - np.abs(uy) / L[1], 0.0, None)
        * np.clip(1.0 - np.abs(uz) / L[2], 0.0, None)
    )
    return float((w * inside).sum() / inside.sum())


def sample_process(spec: ProcessSpec, window: Window3D, seed) -> PointSet3D:
    """Dispatch on the process kind of ``spec``."""
    if spec.kind is ProcessKind.POISSON:
        return sample_poisson(spec.intensity, window, seed)
    if spec.kind is ProcessKind.MATERN_HARDCORE:
        lam_parent = matern_parent_intensity(spec.intensity, spec.R)
        return sample_matern_hardcore(lam_parent, spec.R, window, seed)
    lam_cl = spec.lambda_cl
    if spec.match_expected_count:
        if spec.n_cl == 0:
            raise ConfigurationError("match_expected_count requires n_cl > 0")
        retention = cluster_retention(spec.R, window)
        lam_cl = spec.intensity * window.volume / (spec.n_cl * retention)
    return sample_matern_cluster(spec.n_cl, lam_cl, spec.R, window, seed)
