"""Independent brute-force oracles used to validate the fast implementations.

These deliberately avoid the production code paths: degree 0 simulates the
definitional union-of-growing-disks sweep on the complete graph (no
Delaunay triangulation, no alpha filtration values); degree 1 sweeps a
pixel grid of the distance field and tracks complement components with a
union-find over pixels (no dual-graph reasoning).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a test dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


# ---------------------------------------------------------------------------
# random-instance harness shared by the unit and acceptance oracle tests
# ---------------------------------------------------------------------------


def draw_instance(rng: np.random.Generator, M: float, max_points: int = 12) -> np.ndarray:
    """A random point set whose diagram the pixel oracle can resolve.

    Rejects instances with features too close to the oracle's blind spots:
    near-duplicate points, degree-1 persistence at the quantization-pruning
    scale, or hole sizes within pixel error of the M cut.
    """
    from slicegof.mph import build_filtration, pd1_mbounded

    while True:
        n = int(rng.integers(3, max_points + 1))
        pts = np.round(rng.random((n, 2)) * 3.0, 6)
        if pdist(pts).min() < 1e-2:
            continue
        d1 = pd1_mbounded(build_filtration(pts), M=1e9, tau=1e9)
        if len(d1) and (d1.deaths - d1.births).min() < 0.05:
            continue
        if len(d1) and np.abs(d1.sizes - M).min() < 0.05:
            continue
        return pts


def check_instance(pts: np.ndarray, M: float, tol: float = 1e-2):
    """Assert both degrees match the oracles on one instance."""
    from slicegof.mph import build_filtration, pd0_mbounded, pd1_mbounded

    f = build_filtration(pts)

    impl0 = np.sort(pd0_mbounded(f, M).deaths)
    orc0 = pd0_oracle(pts, M)
    np.testing.assert_allclose(impl0, orc0, atol=1e-9)

    impl1 = pd1_mbounded(f, M, tau=1e9)
    ob, od, osz = pd1_oracle(pts)
    keep = osz <= M
    ob, od = ob[keep], od[keep]
    assert len(impl1) == len(ob), f"degree-1 count {len(impl1)} != oracle {len(ob)}"
    ia = np.lexsort((impl1.deaths, impl1.births))
    oa = np.lexsort((od, ob))
    np.testing.assert_allclose(impl1.births[ia], ob[oa], atol=tol)
    np.testing.assert_allclose(impl1.deaths[ia], od[oa], atol=tol)


# ---------------------------------------------------------------------------
# degree 0: union-of-disks sweep over the complete graph
# ---------------------------------------------------------------------------


def pd0_oracle(points: np.ndarray, M: float, rule: str = "disks") -> np.ndarray:
    """Sorted death levels of the M-bounded degree-0 features.

    Every pairwise half-distance is a potential merge event; components
    are point sets with exact diameters.  On a merge of two live
    components the one containing the lexicographically larger colliding
    disk center dies; a live component joining a dead (oversized) region
    dies at the merge level; a component whose size reaches M between
    merges dies at its cap level.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        return np.empty(0)
    d = squareform(pdist(pts)) if n > 1 else np.zeros((1, 1))

    # complete-graph events sorted by level, ties by endpoint coordinates
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def lex(i):
        return (pts[i, 0], pts[i, 1])

    pairs.sort(key=lambda p: (d[p] / 2.0, min(lex(p[0]), lex(p[1])), max(lex(p[0]), lex(p[1]))))

    comp = {i: {i} for i in range(n)}  # root -> point set
    root_of = list(range(n))
    alive = {i: True for i in range(n)}  # root -> feature still alive
    deaths: list[float] = []

    def diam(root):
        idx = sorted(comp[root])
        return 0.0 if len(idx) < 2 else float(d[np.ix_(idx, idx)].max())

    def cap(root):
        if rule == "disks":
            return (M - diam(root)) / 2.0
        return np.inf if diam(root) <= M else -np.inf

    for (u, v) in pairs:
        r = d[u, v] / 2.0
        ru, rv = root_of[u], root_of[v]
        # cap deaths that occurred strictly before this event
        for root in {ru, rv}:
            if alive[root] and cap(root) < r:
                deaths.append(cap(root))
                alive[root] = False
        if ru == rv:
            continue
        if alive[ru] and alive[rv]:
            dying = ru if lex(u) > lex(v) else rv
            deaths.append(r)
            alive[dying] = False
            survivor_alive = True
        elif alive[ru] or alive[rv]:
            deaths.append(r)  # live feature joins an oversized dead region
            alive[ru if alive[ru] else rv] = False
            survivor_alive = False
        else:
            survivor_alive = False
        comp[ru] |= comp[rv]
        for i in comp[rv]:
            root_of[i] = ru
        del comp[rv], alive[rv]
        alive[ru] = survivor_alive
        if survivor_alive and cap(ru) < r:
            deaths.append(r)  # the merge itself made the component oversized
            alive[ru] = False

    for root, live in alive.items():
        if live:
            level = cap(root)
            if not np.isfinite(level):  # points rule, never exceeded M
                level = M / 2.0
            deaths.append(level)

    assert len(deaths) == n, f"oracle lost features: {len(deaths)} != {n}"
    return np.sort(np.array(deaths))


# ---------------------------------------------------------------------------
# degree 1: pixel distance-field sweep
# ---------------------------------------------------------------------------


@njit(cache=True)
def _uf_find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def _pixel_sweep(order, dist, nx, ny, boundary):
    """Union-find sweep over pixels in decreasing distance order.

    Adding pixels in decreasing distance order grows the complement
    superlevel sets; a component's maximum is the hole's death level and
    the level at which it merges into an older component is its birth.
    The component touching the image boundary is the unbounded region and
    never dies.  Returns (birth, death, deepest_pixel) per finite pair.
    """
    n = nx * ny
    parent = np.full(n, -1, dtype=np.int64)
    comp_max = np.zeros(n)
    comp_argmax = np.zeros(n, dtype=np.int64)
    comp_inf = np.zeros(n, dtype=np.bool_)
    births = np.empty(n)
    deaths = np.empty(n)
    reps = np.empty(n, dtype=np.int64)
    count = 0
    for oi in range(len(order)):
        p = order[oi]
        v = dist[p]
        parent[p] = p
        comp_max[p] = v
        comp_argmax[p] = p
        comp_inf[p] = boundary[p]
        x = p // ny
        y = p % ny
        for k in range(4):
            if k == 0:
                q = p - ny if x > 0 else -1
            elif k == 1:
                q = p + ny if x < nx - 1 else -1
            elif k == 2:
                q = p - 1 if y > 0 else -1
            else:
                q = p + 1 if y < ny - 1 else -1
            if q < 0 or parent[q] == -1:
                continue
            ra = _uf_find(parent, p)
            rb = _uf_find(parent, q)
            if ra == rb:
                continue
            a_inf = comp_inf[ra]
            b_inf = comp_inf[rb]
            if a_inf and b_inf:
                parent[rb] = ra
                continue
            if a_inf or (not b_inf and comp_max[ra] >= comp_max[rb]):
                young, old = rb, ra
            else:
                young, old = ra, rb
            births[count] = v
            deaths[count] = comp_max[young]
            reps[count] = comp_argmax[young]
            count += 1
            parent[young] = old
            if comp_max[young] > comp_max[old]:
                comp_max[old] = comp_max[young]
                comp_argmax[old] = comp_argmax[young]
            comp_inf[old] = comp_inf[old] or comp_inf[young]
    return births[:count], deaths[:count], reps[:count]


def _flood(dist2: np.ndarray, x0: int, y0: int, level: float) -> np.ndarray:
    """Boolean mask of the superlevel component of (x0, y0) at the level."""
    from scipy import ndimage

    labels, _ = ndimage.label(dist2 > level)
    return labels == labels[x0, y0]


def pd1_oracle(
    points: np.ndarray,
    resolution: float = 1e-2,
    pad: float = 0.35,
    size_tol: float = 0.02,
    prune: float = 0.02,
):
    """(births, deaths, sizes) of all holes of the growing disk union.

    The complement of the union of radius-r disks is the superlevel set
    {distance > r} of the distance field to the point set; holes are its
    bounded components.  Size = diameter of the disk centers at distance
    <= birth (+ tolerance) from the hole, i.e. the disks bounding it.
    Apply the M filter on the returned sizes.
    """
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    nx = int(np.ceil((hi[0] - lo[0]) / resolution)) + 1
    ny = int(np.ceil((hi[1] - lo[1]) / resolution)) + 1
    xs = lo[0] + np.arange(nx) * resolution
    ys = lo[1] + np.arange(ny) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    dist = cdist(grid, pts).min(axis=1)
    boundary = np.zeros((nx, ny), dtype=bool)
    boundary[0, :] = boundary[-1, :] = True
    boundary[:, 0] = boundary[:, -1] = True
    order = np.argsort(-dist, kind="stable")
    b, d, reps = _pixel_sweep(order, dist, nx, ny, boundary.ravel())
    # drop grid-quantization noise pairs (measured persistence < ~0.007 at
    # resolution 1e-2); callers must guard real features away from `prune`
    keep = d - b > prune
    b, d, reps = b[keep], d[keep], reps[keep]
    sizes = np.empty(len(b))
    dist2 = dist.reshape(nx, ny)
    for i in range(len(b)):
        comp = _flood(dist2, reps[i] // ny, reps[i] % ny, b[i])
        cpix = grid.reshape(nx, ny, 2)[comp]
        dmin = cdist(pts, cpix).min(axis=1)
        bnd = pts[dmin <= b[i] + size_tol + resolution]
        sizes[i] = 0.0 if len(bnd) < 2 else float(pdist(bnd).max())
    return b, d, sizes
