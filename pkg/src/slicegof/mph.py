"""M-bounded persistence diagrams in degrees 0 and 1 for planar point clouds.

Degree 0 follows the union-of-growing-disks semantics: every point births a
component at r = 0; a component dies when it merges into another one (the
component holding the lexicographically larger colliding disk center dies),
or when its spatial size first exceeds M.  Degree 1 tracks bounded holes of
the complement whose boundary-center set has diameter at most M.

Both degrees are computed exactly on the alpha filtration of the Delaunay
triangulation (valid in the plane, where the union of disks deformation-
retracts onto it).  Degree 1 uses the dual-graph formulation: holes are
superlevel components of the distance function, i.e. components of the dual
graph swept by decreasing filtration value.  This yields the same pairing
as boundary-matrix reduction and, in addition, the exact set of disks
bounding each hole at birth, which is what the M filter needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import cdist, pdist

from .errors import DomainError

__all__ = [
    "Filtration2D",
    "PersistenceDiagram",
    "build_filtration",
    "pd0_mbounded",
    "pd1_mbounded",
    "mbounded_diagram",
    "persistent_betti",
    "diagrams_to_csv",
    "diagrams_from_csv",
]


@dataclass
class Filtration2D:
    """Alpha filtration on the Delaunay triangulation of a planar point set.

    ``edge_values[e]`` is half the edge length when the edge is Gabriel and
    the smaller adjacent-triangle value otherwise; ``tri_values[t]`` is the
    circumradius.  Face values never exceed coface values.
    """

    points: np.ndarray
    edges: np.ndarray  # (E, 2) vertex indices, sorted within row
    triangles: np.ndarray  # (T, 3) vertex indices
    edge_values: np.ndarray
    tri_values: np.ndarray
    tri_edges: np.ndarray  # (T, 3) edge indices
    edge_tris: list  # per edge, list of adjacent triangle indices


@dataclass
class PersistenceDiagram:
    """Columnar multiset of (dim, birth, death, key, size) records.

    For q = 0 the key is ``(key_a, -1)`` with ``key_a`` the label of the
    dying component's founding point; for q = 1 it is the unordered label
    pair of the birth edge.  ``sizes`` carries the component/hole diameter
    used by the M filter.
    """

    dims: np.ndarray
    births: np.ndarray
    deaths: np.ndarray
    key_a: np.ndarray
    key_b: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        self.dims = np.asarray(self.dims, dtype=int)
        self.births = np.asarray(self.births, dtype=float)
        self.deaths = np.asarray(self.deaths, dtype=float)
        self.key_a = np.asarray(self.key_a, dtype=int)
        self.key_b = np.asarray(self.key_b, dtype=int)
        self.sizes = np.asarray(self.sizes, dtype=float)

    def __len__(self) -> int:
        return len(self.dims)

    def select(self, q: int) -> "PersistenceDiagram":
        m = self.dims == q
        return PersistenceDiagram(
            self.dims[m], self.births[m], self.deaths[m], self.key_a[m], self.key_b[m], self.sizes[m]
        )

    @property
    def lifetimes(self) -> np.ndarray:
        return self.deaths - self.births

    @classmethod
    def empty(cls) -> "PersistenceDiagram":
        z = np.empty(0)
        return cls(z, z, z, z, z, z)

    @classmethod
    def concatenate(cls, diagrams: list) -> "PersistenceDiagram":
        if not diagrams:
            return cls.empty()
        return cls(
            np.concatenate([d.dims for d in diagrams]),
            np.concatenate([d.births for d in diagrams]),
            np.concatenate([d.deaths for d in diagrams]),
            np.concatenate([d.key_a for d in diagrams]),
            np.concatenate([d.key_b for d in diagrams]),
            np.concatenate([d.sizes for d in diagrams]),
        )

    def relabel(self, labels: np.ndarray) -> "PersistenceDiagram":
        """Map point-index keys to external labels (-1 entries stay -1)."""
        labels = np.asarray(labels, dtype=int)
        ka = np.where(self.key_a >= 0, labels[np.clip(self.key_a, 0, None)], -1)
        kb = np.where(self.key_b >= 0, labels[np.clip(self.key_b, 0, None)], -1)
        # keep the unordered pair canonical after relabeling
        lo = np.where((kb >= 0) & (kb < ka), kb, ka)
        hi = np.where((kb >= 0) & (kb < ka), ka, kb)
        return PersistenceDiagram(self.dims, self.births, self.deaths, lo, hi, self.sizes)


def _circumradius(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    la = np.linalg.norm(b - c)
    lb = np.linalg.norm(a - c)
    lc = np.linalg.norm(a - b)
    area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    if area2 < 1e-300:
        return max(la, lb, lc) / 2.0
    return la * lb * lc / (2.0 * area2)


def _collinear_filtration(points: np.ndarray) -> Filtration2D:
    # all points on one line: the complex is the path of consecutive points
    d = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    order = np.argsort(points @ vt[0])
    edges = np.sort(np.column_stack([order[:-1], order[1:]]), axis=1)
    vals = np.linalg.norm(points[edges[:, 0]] - points[edges[:, 1]], axis=1) / 2.0
    return Filtration2D(
        points,
        edges,
        np.empty((0, 3), dtype=int),
        vals,
        np.empty(0),
        np.empty((0, 3), dtype=int),
        [[] for _ in range(len(edges))],
    )


def build_filtration(points: np.ndarray) -> Filtration2D:
    """Delaunay triangulation of ``points`` with alpha filtration values."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    if n < 1:
        raise DomainError("at least one point required")
    if n >= 2 and pdist(points).min() == 0.0:
        raise DomainError("duplicate points are not allowed")
    if n == 1:
        return Filtration2D(
            points,
            np.empty((0, 2), dtype=int),
            np.empty((0, 3), dtype=int),
            np.empty(0),
            np.empty(0),
            np.empty((0, 3), dtype=int),
            [],
        )
    if n == 2:
        edges = np.array([[0, 1]])
        vals = np.array([np.linalg.norm(points[0] - points[1]) / 2.0])
        return Filtration2D(
            points, edges, np.empty((0, 3), dtype=int), vals, np.empty(0),
            np.empty((0, 3), dtype=int), [[]],
        )

    try:
        tri = Delaunay(points)
    except QhullError:
        rank = np.linalg.matrix_rank(points - points.mean(axis=0), tol=1e-12)
        if rank < 2:
            return _collinear_filtration(points)
        tri = Delaunay(points, qhull_options="QJ")  # symbolic-perturbation fallback
    simplices = tri.simplices
    # drop slivers qhull may keep on near-degenerate input
    a, b, c = points[simplices[:, 0]], points[simplices[:, 1]], points[simplices[:, 2]]
    area2 = np.abs(
        (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    )
    simplices = simplices[area2 > 1e-300]
    if len(simplices) == 0:
        return _collinear_filtration(points)

    pair_index: dict[tuple[int, int], int] = {}
    edge_list: list[tuple[int, int]] = []
    tri_edges = np.empty((len(simplices), 3), dtype=int)
    for t, (i, j, k) in enumerate(simplices):
        for s, (u, v) in enumerate(((i, j), (i, k), (j, k))):
            key = (u, v) if u < v else (v, u)
            e = pair_index.get(key)
            if e is None:
                e = len(edge_list)
                pair_index[key] = e
                edge_list.append(key)
            tri_edges[t, s] = e
    edges = np.array(edge_list, dtype=int)
    edge_tris: list[list[int]] = [[] for _ in range(len(edges))]
    for t in range(len(simplices)):
        for e in tri_edges[t]:
            edge_tris[e].append(t)

    tri_values = np.array(
        [_circumradius(points[i], points[j], points[k]) for i, j, k in simplices]
    )
    edge_values = np.empty(len(edges))
    mids = (points[edges[:, 0]] + points[edges[:, 1]]) / 2.0
    half = np.linalg.norm(points[edges[:, 0]] - points[edges[:, 1]], axis=1) / 2.0
    for e, (u, v) in enumerate(edges):
        gabriel = True
        for t in edge_tris[e]:
            w = [x for x in simplices[t] if x != u and x != v][0]
            if np.linalg.norm(points[w] - mids[e]) < half[e] - 1e-14:
                gabriel = False
        if gabriel:
            edge_values[e] = half[e]
        else:
            edge_values[e] = min(tri_values[t] for t in edge_tris[e])
    return Filtration2D(points, edges, simplices, edge_values, tri_values, tri_edges, edge_tris)


def _diam(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(pdist(points).max())


def _cross_max(a: np.ndarray, b: np.ndarray) -> float:
    return float(cdist(a, b).max())


def _lex_key(p: np.ndarray) -> tuple[float, float]:
    return (p[0], p[1])


def _edge_order(f: Filtration2D) -> np.ndarray:
    """Edges sorted by filtration value; ties broken by endpoint coordinates so
    the diagram does not depend on input point order."""
    pu = f.points[f.edges[:, 0]]
    pv = f.points[f.edges[:, 1]]
    swap = (pu[:, 0] > pv[:, 0]) | ((pu[:, 0] == pv[:, 0]) & (pu[:, 1] > pv[:, 1]))
    lo = np.where(swap[:, None], pv, pu)
    hi = np.where(swap[:, None], pu, pv)
    return np.lexsort((hi[:, 1], hi[:, 0], lo[:, 1], lo[:, 0], f.edge_values))


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        p = self.parent
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:
            p[i], i = root, p[i]
        return root

    def attach(self, child_root: int, parent_root: int):
        self.parent[child_root] = parent_root


def pd0_mbounded(f: Filtration2D, M: float, cluster_size_rule: str = "disks") -> PersistenceDiagram:
    """Degree-0 M-bounded diagram: one (0, death) record per input point.

    With the default ``disks`` rule the component size is
    ``diam(points) + 2r`` (the union of disks), so a component with point
    diameter d is capped at level ``(M - d) / 2``.  The ``points`` rule uses
    the bare point-set diameter, which only grows at merges; a surviving
    component that never exceeds M is flushed with death M / 2.
    """
    if M <= 0:
        raise DomainError(f"M must be positive, got {M}")
    n = len(f.points)
    uf = _UnionFind(n)
    pts_idx: list[np.ndarray | None] = [np.array([i]) for i in range(n)]
    diam = [0.0] * n
    founder = list(range(n))  # -1 once the component's feature is dead
    deaths = np.full(n, np.nan)
    sizes = np.zeros(n)

    def cap(root: int) -> float:
        if cluster_size_rule == "disks":
            return (M - diam[root]) / 2.0
        return math.inf if diam[root] <= M else -math.inf

    def kill(root: int, level: float):
        deaths[founder[root]] = level
        sizes[founder[root]] = diam[root]
        founder[root] = -1

    order = _edge_order(f)
    for e in order:
        r = f.edge_values[e]
        u, v = f.edges[e]
        ru, rv = uf.find(u), uf.find(v)
        for root in {ru, rv}:
            if founder[root] >= 0 and cap(root) < r:
                kill(root, cap(root))
        if ru == rv:
            continue
        a_alive = founder[ru] >= 0
        b_alive = founder[rv] >= 0
        new_diam = max(diam[ru], diam[rv], _cross_max(f.points[pts_idx[ru]], f.points[pts_idx[rv]]))
        if a_alive and b_alive:
            # lexicographic rule on the colliding disk centers
            dying = ru if _lex_key(f.points[u]) > _lex_key(f.points[v]) else rv
            survivor = rv if dying is ru else ru
            kill(dying, r)
            keep = founder[survivor]
        elif a_alive or b_alive:
            # merging into a region that already exceeded M kills the feature
            kill(ru if a_alive else rv, r)
            keep = -1
        else:
            keep = -1
        big, small = (ru, rv) if len(pts_idx[ru]) >= len(pts_idx[rv]) else (rv, ru)
        uf.attach(small, big)
        pts_idx[big] = np.concatenate([pts_idx[big], pts_idx[small]])
        pts_idx[small] = None
        diam[big] = new_diam
        founder[big] = keep
        if keep >= 0 and cap(big) < r:
            kill(big, r)

    for i in range(n):
        root = uf.find(i)
        if founder[root] >= 0:
            level = cap(root)
            if not math.isfinite(level):  # points rule, component never exceeds M
                level = M / 2.0
            kill(root, level)

    assert not np.isnan(deaths).any()
    return PersistenceDiagram(
        np.zeros(n, dtype=int), np.zeros(n), deaths, np.arange(n), np.full(n, -1), sizes
    )


def pd1_mbounded(
    f: Filtration2D, M: float, tau: float, hole_size_at: str = "birth"
) -> PersistenceDiagram:
    """Degree-1 M-bounded diagram via the dual-graph sweep.

    Nodes are triangles plus the outer face; dual edges carry the primal
    edge's filtration value.  Sweeping dual edges by decreasing value, a
    merge at level b creates the hole with the smaller maximal triangle
    value d (birth b, death d).  The hole's bounding disks at birth are the
    vertices of its dual component, whose diameter is checked against M.
    """
    if M <= 0:
        raise DomainError(f"M must be positive, got {M}")
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    nt = len(f.triangles)
    if nt == 0:
        return PersistenceDiagram.empty()
    outer = nt  # the unbounded face
    uf = _UnionFind(nt + 1)
    max_val = [float(v) for v in f.tri_values] + [math.inf]
    deep_tri = list(range(nt)) + [-1]  # per-root triangle realizing max_val
    verts: list[set | None] = [set(map(int, t)) for t in f.triangles] + [set()]

    order = _edge_order(f)[::-1]
    records = []
    for e in order:
        w = f.edge_values[e]
        tris = f.edge_tris[e]
        if len(tris) == 0:
            continue
        a = uf.find(tris[0])
        b = uf.find(tris[1]) if len(tris) == 2 else uf.find(outer)
        if a == b:
            continue
        young = a if max_val[a] < max_val[b] else b
        death = max_val[young]
        if death > w + 1e-15:  # positive persistence: a hole is born here
            if hole_size_at == "birth":
                size = _diam(f.points[sorted(verts[young])])
            else:
                size = _diam(f.points[f.triangles[deep_tri[young]]])
            u, v = f.edges[e]
            records.append((w, death, int(u), int(v), size))
        # union: keep the larger vertex set at the surviving root
        win, lose = (a, b) if len(verts[a]) >= len(verts[b]) else (b, a)
        verts[win].update(verts[lose])
        verts[lose] = None
        uf.attach(lose, win)
        if max_val[lose] > max_val[win]:
            max_val[win] = max_val[lose]
            deep_tri[win] = deep_tri[lose]

    if not records:
        return PersistenceDiagram.empty()
    arr = np.array([(b, d, s) for b, d, _, _, s in records])
    births, deaths, sizes = arr[:, 0], arr[:, 1], arr[:, 2]
    ka = np.array([min(u, v) for _, _, u, v, _ in records])
    kb = np.array([max(u, v) for _, _, u, v, _ in records])
    keep = (deaths <= tau) & (sizes <= M) & (births < deaths)
    m = int(keep.sum())
    return PersistenceDiagram(
        np.ones(m, dtype=int), births[keep], deaths[keep], ka[keep], kb[keep], sizes[keep]
    )


def mbounded_diagram(
    points: np.ndarray,
    M: float,
    tau: float,
    labels: np.ndarray | None = None,
    cluster_size_rule: str = "disks",
    hole_size_at: str = "birth",
) -> PersistenceDiagram:
    """Both degrees for one point cloud; keys remapped to ``labels`` if given."""
    f = build_filtration(points)
    d = PersistenceDiagram.concatenate(
        [pd0_mbounded(f, M, cluster_size_rule), pd1_mbounded(f, M, tau, hole_size_at)]
    )
    if labels is not None:
        d = d.relabel(labels)
    return d


def persistent_betti(diagrams: list, q: int, b: float, d: float) -> float:
    """Slice-averaged count of q-features with birth <= b and death >= d."""
    if not diagrams:
        return 0.0
    total = 0
    for dg in diagrams:
        sel = dg.select(q)
        total += int(np.sum((sel.births <= b) & (sel.deaths >= d)))
    return total / len(diagrams)


def diagrams_to_csv(diagrams: list) -> str:
    """Serialize per-slice diagrams to CSV (one row per feature)."""
    lines = ["slice_index,dim,birth,death,key_a,key_b,size"]
    for k, dg in enumerate(diagrams):
        for q, b, d, ka, kb, sz in zip(
            dg.dims, dg.births, dg.deaths, dg.key_a, dg.key_b, dg.sizes
        ):
            lines.append(f"{k},{q},{b:.17g},{d:.17g},{ka},{kb},{sz:.17g}")
    return "\n".join(lines) + "\n"


def diagrams_from_csv(text: str) -> list:
    """Inverse of :func:`diagrams_to_csv`; returns one diagram per slice index."""
    lines = text.strip().splitlines()
    if not lines or lines[0].split(",") != ["slice_index", "dim", "birth", "death", "key_a", "key_b", "size"]:
        raise DomainError("diagram CSV missing or malformed header")
    rows: dict[int, list] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            k, q, b, d, ka, kb, sz = line.split(",")
            rows.setdefault(int(k), []).append(
                (int(q), float(b), float(d), int(ka), int(kb), float(sz))
            )
        except ValueError as exc:
            raise DomainError(f"malformed diagram CSV row at line {lineno}: {exc}") from exc
    out = []
    for k in range(max(rows) + 1 if rows else 0):
        rec = rows.get(k, [])
        cols = list(zip(*rec)) if rec else [[]] * 6
        out.append(PersistenceDiagram(*[np.array(c) for c in cols]))
    return out
