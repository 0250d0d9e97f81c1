"""Planar sections of the 3D Voronoi tessellation on a generator set.

The section at height h of the 3D Voronoi diagram equals the 2D power
diagram of the projected generators with weights ``-(h - z_i)^2``.  Cells
are computed per slice by clipping the window against bisector half-planes
of the neighbors in the regular triangulation (obtained from the lifted
convex hull), so no 3D cell geometry is ever constructed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ConfigurationError, DomainError
from .pointproc import PointSet3D, derive_rng

__all__ = [
    "Window2D",
    "SliceLayout",
    "SliceCloud",
    "SliceStack",
    "slice_voronoi",
    "section_polygons",
    "perturb_centroids",
    "trajectory_of",
]

_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class Window2D:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigurationError("degenerate 2D window")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )

    @classmethod
    def from_window3d(cls, w) -> "Window2D":
        lo, hi = w.lo, w.hi
        return cls(lo[0], hi[0], lo[1], hi[1])


@dataclass(frozen=True)
class SliceLayout:
    """H slices parallel to the x-y plane.

    By default the slices are centered at half the window height; explicit
    heights override count/spacing.
    """

    count: int = 9
    spacing: float = 4.0
    heights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.heights is not None:
            hs = tuple(float(h) for h in self.heights)
            if sorted(hs) != list(hs) or len(set(hs)) != len(hs):
                raise ConfigurationError("explicit heights must be strictly increasing")
            object.__setattr__(self, "heights", hs)
            object.__setattr__(self, "count", len(hs))
        else:
            if self.count < 1:
                raise ConfigurationError("slice count must be >= 1")
            if self.count > 1 and self.spacing <= 0:
                raise ConfigurationError("spacing must be positive for multiple slices")

    def slice_heights(self, window_height: float) -> np.ndarray:
        if self.heights is not None:
            hs = np.asarray(self.heights, dtype=float)
        else:
            mid = window_height / 2.0
            offsets = (np.arange(self.count) - (self.count - 1) / 2.0) * self.spacing
            hs = mid + offsets
        if np.any(hs <= 0) or np.any(hs >= window_height):
            raise ConfigurationError("slice heights must lie strictly inside (0, height)")
        return hs


@dataclass
class SliceCloud:
    """One slice: centroids of the section cells, with generator labels/areas."""

    height: float
    points: np.ndarray
    labels: np.ndarray | None = None
    areas: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
            if len(self.labels) != len(self.points):
                raise ConfigurationError("labels length mismatch")
            if np.unique(self.labels).size != self.labels.size:
                raise ConfigurationError("labels must be distinct within a slice")
        if self.areas is not None:
            self.areas = np.asarray(self.areas, dtype=float).reshape(-1)
            if len(self.areas) != len(self.points):
                raise ConfigurationError("areas length mismatch")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class SliceStack:
    """Ordered per-slice clouds; the observable data object of the pipeline."""

    window2d: Window2D
    slices: list[SliceCloud] = field(default_factory=list)

    def __post_init__(self):
        hs = [s.height for s in self.slices]
        if sorted(hs) != hs or len(set(hs)) != len(hs):
            raise ConfigurationError("slice heights must be strictly increasing")

    @property
    def labeled(self) -> bool:
        return all(s.labels is not None for s in self.slices)

    def __len__(self) -> int:
        return len(self.slices)

    # -- serialization ----------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["slice_index", "height", "x", "y"]
        if self.labeled:
            header.append("label")
        if all(s.areas is not None for s in self.slices):
            header.append("area")
        w.writerow(header)
        for k, s in enumerate(self.slices):
            for i in range(len(s)):
                row = [k, _FLOAT_FMT % s.height, _FLOAT_FMT % s.points[i, 0], _FLOAT_FMT % s.points[i, 1]]
                if "label" in header:
                    row.append(int(s.labels[i]))
                if "area" in header:
                    row.append(_FLOAT_FMT % s.areas[i])
                w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, window2d: Window2D) -> "SliceStack":
        rdr = csv.reader(io.StringIO(text))
        header = next(rdr, None)
        n_skip = 0
        while header is not None and header and header[0].startswith("#"):
            header = next(rdr, None)  # provenance comment lines
            n_skip += 1
        if header is None:
            raise DomainError("empty stack CSV")
        cols = {name: i for i, name in enumerate(header)}
        for req in ("slice_index", "height", "x", "y"):
            if req not in cols:
                raise DomainError(f"stack CSV missing column {req!r}")
        has_label, has_area = "label" in cols, "area" in cols
        groups: dict[int, dict] = {}
        for lineno, row in enumerate(rdr, start=2 + n_skip):
            if not row or row[0].startswith("#"):
                continue
            try:
                k = int(row[cols["slice_index"]])
                h = float(row[cols["height"]])
                x = float(row[cols["x"]])
                y = float(row[cols["y"]])
                lab = int(row[cols["label"]]) if has_label else None
                area = float(row[cols["area"]]) if has_area else None
            except (ValueError, IndexError) as exc:
                raise DomainError(f"malformed stack CSV row at line {lineno}: {exc}") from exc
            g = groups.setdefault(k, {"height": h, "pts": [], "labs": [], "areas": []})
            g["pts"].append((x, y))
            g["labs"].append(lab)
            g["areas"].append(area)
        slices = []
        for k in sorted(groups):
            g = groups[k]
            slices.append(
                SliceCloud(
                    g["height"],
                    np.array(g["pts"], dtype=float),
                    labels=np.array(g["labs"]) if has_label else None,
                    areas=np.array(g["areas"]) if has_area else None,
                )
            )
        return cls(window2d, slices)

    def to_json(self) -> str:
        return json.dumps(
            {
                "window2d": [self.window2d.xmin, self.window2d.xmax, self.window2d.ymin, self.window2d.ymax],
                "slices": [
                    {
                        "height": s.height,
                        "points": s.points.tolist(),
                        "labels": None if s.labels is None else s.labels.tolist(),
                        "areas": None if s.areas is None else s.areas.tolist(),
                    }
                    for s in self.slices
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SliceStack":
        d = json.loads(text)
        win = Window2D(*d["window2d"])
        slices = [
            SliceCloud(
                s["height"],
                np.array(s["points"], dtype=float).reshape(-1, 2),
                labels=None if s["labels"] is None else np.array(s["labels"]),
                areas=None if s["areas"] is None else np.array(s["areas"]),
            )
            for s in d["slices"]
        ]
        return cls(win, slices)


# -- power-diagram section cells ------------------------------------------


def _clip_halfplane(poly: list, a0: float, a1: float, b: float) -> list:
    """Sutherland-Hodgman clip of ``poly`` against ``a0*x + a1*y <= b``."""
    out = []
    n = len(poly)
    for i in range(n):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % n]
        pin = a0 * px + a1 * py <= b
        qin = a0 * qx + a1 * qy <= b
        if pin:
            out.append(poly[i])
        if pin != qin:
            dp = a0 * px + a1 * py - b
            dq = a0 * qx + a1 * qy - b
            t = dp / (dp - dq)
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def _poly_area_centroid(poly: list) -> tuple[float, tuple[float, float]]:
    a = cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        a += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    a *= 0.5
    if abs(a) < 1e-14:
        return 0.0, (0.0, 0.0)
    return abs(a), (cx / (6.0 * a), cy / (6.0 * a))


def section_polygons(
    generators: PointSet3D, height: float, window2d: Window2D
) -> dict[int, list]:
    """Power-diagram cells at ``z = height``, clipped to the window.

    Returns a map generator label -> cell polygon (CCW vertex list); only
    generators whose 3D Voronoi cell meets the plane inside the window appear.
    """
    pts = generators.points
    n = len(pts)
    if n == 0:
        raise DomainError("empty generator set")
    xy = pts[:, :2]
    lift = (xy**2).sum(axis=1) + (height - pts[:, 2]) ** 2
    window_poly = [tuple(p) for p in window2d.corners]

    neighbors: dict[int, set[int]] | None = None
    if n >= 5:
        try:
            hull = ConvexHull(np.column_stack([xy, lift]))
            lower = hull.equations[:, 2] < -1e-12
            tris = hull.simplices[lower]
            neighbors = {}
            for t in tris:
                for u in t:
                    s = neighbors.setdefault(int(u), set())
                    s.update(int(v) for v in t if v != u)
        except QhullError:
            neighbors = None  # degenerate lift; fall back to all-pairs clipping

    if neighbors is None:
        candidates = {i: [j for j in range(n) if j != i] for i in range(n)}
    else:
        candidates = {i: sorted(js) for i, js in neighbors.items()}

    cells: dict[int, list] = {}
    for i, js in candidates.items():
        poly = window_poly
        li = lift[i]
        xi, yi = xy[i]
        for j in js:
            a0 = 2.0 * (xy[j, 0] - xi)
            a1 = 2.0 * (xy[j, 1] - yi)
            poly = _clip_halfplane(poly, a0, a1, lift[j] - li)
            if len(poly) < 3:
                poly = []
                break
        if len(poly) >= 3:
            cells[int(generators.labels[i])] = poly
    return cells


def slice_voronoi(
    generators: PointSet3D,
    layout: SliceLayout,
    window2d: Window2D | None = None,
    minus_sampling: bool = False,
) -> SliceStack:
    """Slice the Voronoi tessellation of ``generators`` at the layout heights.

    Each slice carries one entry per generator whose cell meets the plane:
    the centroid of the planar section (clipped to the window), its area and
    the generator label.  With ``minus_sampling`` cells touching the window
    boundary are discarded.
    """
    if len(generators) == 0:
        raise DomainError("empty generator set")
    if window2d is None:
        window2d = Window2D.from_window3d(generators.window)
    heights = layout.slice_heights(generators.window.height)
    eps = 1e-9 * max(window2d.xmax - window2d.xmin, window2d.ymax - window2d.ymin)
    slices = []
    for h in heights:
        cells = section_polygons(generators, h, window2d)
        labs, cents, areas = [], [], []
        for lab in sorted(cells):
            poly = cells[lab]
            if minus_sampling:
                v = np.asarray(poly)
                on_edge = (
                    (v[:, 0] < window2d.xmin + eps)
                    | (v[:, 0] > window2d.xmax - eps)
                    | (v[:, 1] < window2d.ymin + eps)
                    | (v[:, 1] > window2d.ymax - eps)
                )
                if on_edge.any():
                    continue
            area, cent = _poly_area_centroid(poly)
            if area <= 0.0:
                continue
            labs.append(lab)
            cents.append(cent)
            areas.append(area)
        slices.append(
            SliceCloud(
                float(h),
                np.array(cents, dtype=float).reshape(-1, 2),
                labels=np.array(labs, dtype=int),
                areas=np.array(areas, dtype=float),
            )
        )
    return SliceStack(window2d, slices)


def perturb_centroids(stack: SliceStack, eta0: float, seed) -> SliceStack:
    """Displace every centroid by an independent uniform draw from the disk
    of radius ``eta0``; labels and slice order are preserved."""
    if eta0 < 0 or not math.isfinite(eta0):
        raise ConfigurationError(f"eta0 must be finite and >= 0, got {eta0}")
    if eta0 == 0:
        return stack
    rng = derive_rng(seed)
    slices = []
    for s in stack.slices:
        k = len(s)
        theta = rng.random(k) * 2 * math.pi
        rad = eta0 * np.sqrt(rng.random(k))
        disp = np.column_stack([rad * np.cos(theta), rad * np.sin(theta)])
        slices.append(SliceCloud(s.height, s.points + disp, labels=s.labels, areas=s.areas))
    return SliceStack(stack.window2d, slices)


def trajectory_of(stack: SliceStack, label: int) -> list[tuple[float, np.ndarray]]:
    """Ordered (height, centroid) subsequence of the slices where ``label`` appears."""
    if not stack.labeled:
        raise DomainError("stack carries no labels")
    out = []
    for s in stack.slices:
        idx = np.flatnonzero(s.labels == label)
        if idx.size:
            out.append((s.height, s.points[idx[0]].copy()))
    return out
