"""The test statistics: cross-sectional total persistence, vine-based
persistence, and the integrated pooled Ripley K-function.

All persistence statistics are normalized by a fixed area |W| (by default
the area of the 2D slice window).  The z-tests downstream are invariant to
this convention because null mean/sd are calibrated with the same one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError
from .mph import PersistenceDiagram
from .tessellate import SliceStack, Window2D
from .vineyard import Vineyard

__all__ = [
    "StatisticValue",
    "t_tp",
    "t_m",
    "ripley_slice",
    "ripley_pooled",
    "t_rip",
    "STATISTIC_NAMES",
]

STATISTIC_NAMES = ("t_tp0", "t_tp1", "t_m0", "t_m1", "t_rip")


@dataclass(frozen=True)
class StatisticValue:
    name: str
    value: float
    metadata: dict = field(default_factory=dict)


def t_tp(diagrams: list[PersistenceDiagram], q: int, area: float) -> StatisticValue:
    """Slice-averaged total persistence per unit area:
    ``(1/H) sum_h (1/|W|) sum_i (D_i - B_i)``."""
    if not diagrams:
        raise DomainError("at least one slice diagram required")
    if area <= 0:
        raise DomainError(f"area must be positive, got {area}")
    total = sum(float(dg.select(q).lifetimes.sum()) for dg in diagrams)
    return StatisticValue(f"t_tp{q}", total / (len(diagrams) * area), {"q": q, "area": area})


def t_m(v: Vineyard, q: int, area: float) -> StatisticValue:
    """Vine-based persistence: per-vine mean lifetime over the slices where
    the vine is present, summed over vines and divided by |W|."""
    if area <= 0:
        raise DomainError(f"area must be positive, got {area}")
    vines = v.select(q)
    if not vines:
        warnings.warn(f"empty vineyard for q={q}; t_m{q} reported as 0", stacklevel=2)
        return StatisticValue(f"t_m{q}", 0.0, {"q": q, "area": area, "empty": True})
    total = sum(
        sum(d - b for b, d in vine.entries.values()) / len(vine.entries) for vine in vines
    )
    return StatisticValue(f"t_m{q}", total / area, {"q": q, "area": area})


def _isotropic_weights(points: np.ndarray, win: Window2D, d: np.ndarray) -> np.ndarray:
    """Ripley's isotropic edge-correction weights for a rectangular window.

    ``d[i, j]`` is the pairwise distance; weight = 1 / (fraction of the
    circle of radius d[i, j] around point i lying inside the window).
    Exact for radii up to half the shorter window side (at most one
    vertical and one horizontal edge can be crossed).
    """
    x, y = points[:, 0], points[:, 1]
    dx = np.minimum(x - win.xmin, win.xmax - x)[:, None]
    dy = np.minimum(y - win.ymin, win.ymax - y)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ax = np.clip(dx / d, -1.0, 1.0)
        ay = np.clip(dy / d, -1.0, 1.0)
        out = 2.0 * np.arccos(ax) + 2.0 * np.arccos(ay)
        corner = (dx**2 + dy**2) < d**2
        # the caps beyond the two nearest edges overlap near their shared corner
        overlap = np.where(corner, np.pi / 2.0 - np.arcsin(ax) - np.arcsin(ay), 0.0)
    frac = 1.0 - (out - overlap) / (2.0 * np.pi)
    return 1.0 / frac


def _translation_weights(points: np.ndarray, win: Window2D, d: np.ndarray) -> np.ndarray:
    """Translation edge-correction: |W| / |W ∩ W shifted by (x_j - x_i)|."""
    ddx = np.abs(points[:, 0][:, None] - points[:, 0][None, :])
    ddy = np.abs(points[:, 1][:, None] - points[:, 1][None, :])
    wx = (win.xmax - win.xmin) - ddx
    wy = (win.ymax - win.ymin) - ddy
    return win.area / np.maximum(wx * wy, 1e-300)


def ripley_slice(
    points: np.ndarray,
    win: Window2D,
    r: np.ndarray,
    correction: str = "isotropic",
) -> np.ndarray:
    """Edge-corrected Ripley K estimate of one slice on the grid ``r``."""
    n = len(points)
    if n < 2:
        raise DomainError("Ripley K needs at least 2 points")
    d = cdist(points, points)
    np.fill_diagonal(d, np.inf)
    if correction == "isotropic":
        w = _isotropic_weights(points, win, d)
    else:
        w = _translation_weights(points, win, d)
    mask = np.isfinite(d)
    dd, ww = d[mask], w[mask]
    order = np.argsort(dd)
    dd, ww = dd[order], np.cumsum(ww[order])
    idx = np.searchsorted(dd, r, side="right")
    csum = np.concatenate([[0.0], ww])[idx]
    return win.area / (n * (n - 1)) * csum


def ripley_pooled(
    stack: SliceStack,
    r_max: float,
    grid: int = 512,
    pooling: str = "pairs",
    correction: str = "isotropic",
) -> tuple[np.ndarray, np.ndarray]:
    """Pooled Ripley K over the slices, point-count weighted by default.

    Slices with fewer than 2 points are skipped with a warning.  Returns
    ``(r, K_pool(r))`` on a uniform grid of ``grid`` points in [0, r_max].
    """
    win = stack.window2d
    if r_max >= min(win.xmax - win.xmin, win.ymax - win.ymin) / 2.0:
        raise DomainError("r_max must be below half the window side")
    r = np.linspace(0.0, r_max, grid)
    acc = np.zeros_like(r)
    wsum = 0.0
    for k, s in enumerate(stack.slices):
        n = len(s)
        if n < 2:
            warnings.warn(f"slice {k} has fewer than 2 points; skipped in Ripley pooling",
                          stacklevel=2)
            continue
        weight = float(n * (n - 1)) if pooling == "pairs" else 1.0
        acc += weight * ripley_slice(s.points, win, r, correction)
        wsum += weight
    if wsum == 0.0:
        raise DomainError("no slice with >= 2 points; pooled Ripley K undefined")
    return r, acc / wsum


def t_rip(
    stack: SliceStack,
    r_rip: float,
    grid: int = 512,
    pooling: str = "pairs",
    correction: str = "isotropic",
) -> StatisticValue:
    """Integral of the pooled Ripley K over [0, r_rip] (trapezoidal rule)."""
    r, k = ripley_pooled(stack, r_rip, grid=grid, pooling=pooling, correction=correction)
    value = float(np.trapezoid(k, r))
    return StatisticValue(
        "t_rip", value, {"r_rip": r_rip, "grid": grid, "pooling": pooling, "correction": correction}
    )
