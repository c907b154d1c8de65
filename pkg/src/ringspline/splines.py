"""Piecewise polynomials over ring partitions.

Two concrete families: piecewise constants over dyadic ring partitions, and
continuous piecewise-linear splines spanned by Courant hat functions on the
criss-cross triangulations of the unit square obtained by repeated midpoint
quadrisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from .geometry import (
    EPS,
    SLIVER_AREA,
    ConvexPolygon,
    Domain,
    GeometryError,
    Ring,
    RingPartition,
    _fmt,
    _to_shape,
    dyadic_ring,
    parse_ring_line,
    ring_line,
)

__all__ = [
    "Poly2",
    "PiecewisePoly",
    "HatHierarchy",
    "pc_from_partition",
    "hat_spline",
    "lp_norm",
    "smoothness_check",
    "random_spline",
    "check_nikolski_markov",
    "spline_to_text",
    "spline_from_text",
    "unit_square_domain",
]


def _exponents(k: int):
    return [(a, d - a) for d in range(k) for a in range(d, -1, -1)]


class Poly2:
    """Bivariate polynomial of total degree < k in the monomial basis.

    Coefficient order is c00, c10, c01, c20, c11, c02, ... (degree-major,
    descending x power inside each degree).
    """

    def __init__(self, k: int, coeffs):
        if k < 1:
            raise ValueError("k must be >= 1")
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        if len(c) != k * (k + 1) // 2:
            raise ValueError(f"expected {k*(k+1)//2} coefficients for k={k}")
        self.k = k
        self.coeffs = c
        self.coeffs.setflags(write=False)

    @classmethod
    def constant(cls, value: float):
        return cls(1, [value])

    @classmethod
    def zero(cls, k: int):
        return cls(k, np.zeros(k * (k + 1) // 2))

    def eval_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        out = np.zeros(len(pts))
        for c, (a, b) in zip(self.coeffs, _exponents(self.k)):
            if c != 0.0:
                out += c * x**a * y**b
        return out

    def __call__(self, x, y):
        return float(self.eval_many(np.array([[x, y]]))[0])

    def partial(self, axis: int) -> "Poly2":
        """Partial derivative along x (axis=0) or y (axis=1)."""
        kk = max(self.k - 1, 1)
        out = np.zeros(kk * (kk + 1) // 2)
        tgt = {e: i for i, e in enumerate(_exponents(kk))}
        for c, (a, b) in zip(self.coeffs, _exponents(self.k)):
            if axis == 0 and a > 0:
                out[tgt[(a - 1, b)]] += a * c
            elif axis == 1 and b > 0:
                out[tgt[(a, b - 1)]] += b * c
        return Poly2(kk, out)

    def directional(self, nu) -> "Poly2":
        nx, ny = float(nu[0]), float(nu[1])
        px, py = self.partial(0), self.partial(1)
        return Poly2(px.k, nx * px.coeffs + ny * py.coeffs)

    def scaled(self, a: float) -> "Poly2":
        return Poly2(self.k, a * self.coeffs)


# 7-point degree-5 rule on the reference triangle (barycentric points, weights
# relative to triangle area).
_A1 = 0.0597158717897698
_B1 = 0.4701420641051151
_A2 = 0.7974269853530873
_B2 = 0.1012865073234563
_TRI_RULE = (
    np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [_A1, _B1, _B1],
            [_B1, _A1, _B1],
            [_B1, _B1, _A1],
            [_A2, _B2, _B2],
            [_B2, _A2, _B2],
            [_B2, _B2, _A2],
        ]
    ),
    np.array([0.225, 0.1323941527885062, 0.1323941527885062, 0.1323941527885062,
              0.1259391805448271, 0.1259391805448271, 0.1259391805448271]),
)


def _tri_area(tri):
    (x0, y0), (x1, y1), (x2, y2) = tri
    return 0.5 * abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


def _tri_nodes(tris):
    """Quadrature nodes and weights for a list of triangles."""
    bary, w = _TRI_RULE
    nodes = []
    weights = []
    for tri in tris:
        tri = np.asarray(tri)
        nodes.append(bary @ tri)
        weights.append(w * _tri_area(tri))
    if not nodes:
        return np.zeros((0, 2)), np.zeros(0)
    return np.vstack(nodes), np.concatenate(weights)


def _subdivide_tris(tris):
    out = []
    for tri in tris:
        tri = np.asarray(tri)
        m01 = 0.5 * (tri[0] + tri[1])
        m12 = 0.5 * (tri[1] + tri[2])
        m02 = 0.5 * (tri[0] + tri[2])
        out += [
            np.array([tri[0], m01, m02]),
            np.array([m01, tri[1], m12]),
            np.array([m02, m12, tri[2]]),
            np.array([m01, m12, m02]),
        ]
    return out


def triangulate(shape) -> list:
    """Exact triangulation of a polygon (holes allowed) via constrained CDT."""
    tris = []
    cdt = shapely.constrained_delaunay_triangles(shape)
    for g in cdt.geoms:
        if g.area > SLIVER_AREA:
            tris.append(np.asarray(g.exterior.coords)[:3])
    return tris


def _ring_triangles(ring: Ring):
    cache = getattr(ring, "_tri_cache", None)
    if cache is None:
        cache = triangulate(ring.shape)
        ring._tri_cache = cache
    return cache


def unit_square_domain() -> Domain:
    return Domain.rectangle(0.0, 0.0, 1.0, 1.0)


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """Spline: one polynomial of degree < k per ring, smoothness class r.

    r = -1 means no continuity requirement, r = 0 continuity, etc.
    """

    partition: RingPartition
    pieces: tuple
    k: int
    r: int = -1
    hierarchy: object = None  # set for hat splines; same values, faster eval

    def __post_init__(self):
        if len(self.pieces) != len(self.partition.rings):
            raise ValueError("one polynomial per ring required")
        if self.r > self.k - 2:
            raise ValueError("smoothness r must be <= k-2")
        for p in self.pieces:
            if p.k > self.k:
                raise ValueError("piece degree exceeds spline degree bound")

    @property
    def n(self) -> int:
        return len(self.partition.rings)

    def eval_many(self, pts, strict: bool = False) -> np.ndarray:
        """Values at points; ties on shared edges go to the lowest ring index.

        Outside the domain: 0 for plane-supported splines, 0 (or an error when
        strict=True) for bounded domains.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.hierarchy is not None:
            vals = self.hierarchy.eval_many(pts)
            inside = self.partition.omega.contains_xy(pts[:, 0], pts[:, 1])
            if strict and not inside.all():
                raise GeometryError("point outside the spline domain")
            return np.where(inside, vals, 0.0)
        out = np.zeros(len(pts))
        claimed = np.zeros(len(pts), dtype=bool)
        x, y = pts[:, 0], pts[:, 1]
        for ring, poly in zip(self.partition.rings, self.pieces):
            m = ~claimed & ring.contains_xy(x, y)
            if m.any():
                out[m] = poly.eval_many(pts[m])
                claimed |= m
        if strict and self.partition.omega.is_bounded and not claimed.all():
            missing = pts[~claimed]
            om = self.partition.omega
            if not np.all(om.contains_xy(missing[:, 0], missing[:, 1])):
                raise GeometryError("point outside the spline domain")
        return out

    def eval(self, point) -> float:
        p = np.asarray([point.x, point.y] if hasattr(point, "x") else point, dtype=float)
        return float(self.eval_many(p[None, :], strict=True)[0])

    def values(self) -> np.ndarray:
        """Constant values per ring (k=1 only)."""
        if self.k != 1:
            raise ValueError("values() requires a piecewise constant")
        return np.array([p.coeffs[0] for p in self.pieces])

    def scaled(self, lam: float) -> "PiecewisePoly":
        return PiecewisePoly(
            self.partition,
            tuple(p.scaled(lam) for p in self.pieces),
            self.k,
            self.r,
            hierarchy=self.hierarchy.scaled(lam) if self.hierarchy is not None else None,
        )


def pc_from_partition(partition: RingPartition, values) -> PiecewisePoly:
    values = list(values)
    if len(values) != len(partition.rings):
        raise ValueError("need exactly one value per ring")
    return PiecewisePoly(partition, tuple(Poly2.constant(v) for v in values), k=1, r=-1)


def lp_norm(s: PiecewisePoly, p: float, region=None, mode: str = "exact") -> float:
    """L^p (quasi)norm of a spline, exact for constants or by quadrature."""
    if p <= 0:
        raise ValueError("p must be positive")
    if mode == "exact":
        if s.k != 1:
            raise ValueError("exact mode requires piecewise constants (k=1)")
        total = 0.0
        for ring, poly in zip(s.partition.rings, s.pieces):
            if region is None:
                a = ring.area
            else:
                a = ring.shape.intersection(_to_shape(region)).area
            total += abs(poly.coeffs[0]) ** p * a
        return total ** (1.0 / p)
    if mode != "quadrature":
        raise ValueError("mode must be 'exact' or 'quadrature'")
    refine = s.k >= 2 and abs(p - round(p)) > 1e-12
    total = 0.0
    for ring, poly in zip(s.partition.rings, s.pieces):
        if region is None:
            tris = _ring_triangles(ring)
        else:
            inter = ring.shape.intersection(_to_shape(region))
            if inter.area <= SLIVER_AREA:
                continue
            tris = triangulate(inter)
        if refine:
            tris = _subdivide_tris(tris)
        nodes, w = _tri_nodes(tris)
        total += float(np.dot(w, np.abs(poly.eval_many(nodes)) ** p))
    return total ** (1.0 / p)


# ---------------------------------------------------------------------------
# Courant hats on criss-cross triangulations of the unit square


def _hat_values(pts, level, i, j):
    """Hat at grid vertex (i,j)/2^level of the 3-direction mesh."""
    scale = 2.0**level
    xi = pts[:, 0] * scale - i
    eta = pts[:, 1] * scale - j
    v = np.minimum(np.minimum(1 - np.abs(xi), 1 - np.abs(eta)), 1 - np.abs(xi - eta))
    return np.maximum(v, 0.0)


@dataclass(frozen=True, eq=False)
class HatHierarchy:
    """Selected Courant hat cells with coefficients over levels of refinement.

    Level j lives on the triangulation of [0,1]^2 with 2*4^j triangles; a cell
    is addressed by its level and the grid indices of its center vertex.
    """

    selection: tuple  # of (level, i, j)
    coeffs: tuple
    max_level: int = 12

    def __post_init__(self):
        if len(self.selection) != len(self.coeffs):
            raise ValueError("one coefficient per selected cell")
        for lev, i, j in self.selection:
            if not 0 <= lev <= self.max_level:
                raise ValueError("cell level outside the hierarchy")
            if not (0 <= i <= 2**lev and 0 <= j <= 2**lev):
                raise ValueError("cell index outside the grid")

    @property
    def n(self) -> int:
        return len(self.selection)

    def eval_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        for (lev, i, j), c in zip(self.selection, self.coeffs):
            if c != 0.0:
                out += c * _hat_values(pts, lev, i, j)
        return out

    def scaled(self, lam: float) -> "HatHierarchy":
        return HatHierarchy(self.selection, tuple(lam * c for c in self.coeffs),
                            self.max_level)


def _t0_triangles():
    return [
        (0, np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])),
        (0, np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])),
    ]


def _children(level, tri):
    m01 = 0.5 * (tri[0] + tri[1])
    m12 = 0.5 * (tri[1] + tri[2])
    m02 = 0.5 * (tri[0] + tri[2])
    return [
        (level + 1, np.array([tri[0], m01, m02])),
        (level + 1, np.array([m01, tri[1], m12])),
        (level + 1, np.array([m02, m12, tri[2]])),
        (level + 1, np.array([m01, m12, m02])),
    ]


def hat_spline(h: HatHierarchy) -> PiecewisePoly:
    """Continuous piecewise-linear spline from selected hats.

    The induced partition is the coarsest midpoint-refinement triangulation on
    which every selected hat is linear; leaves are found by subdividing any
    triangle overlapped by the support of a finer selected hat.
    """
    omega = unit_square_domain()
    if h.n == 0:
        ring = Ring(ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)]))
        part = RingPartition(omega, (ring,))
        return PiecewisePoly(part, (Poly2.zero(2),), k=2, r=0, hierarchy=h)

    sel = np.array([(lev, i, j) for lev, i, j in h.selection], dtype=float)
    levels = sel[:, 0]
    centers = sel[:, 1:] / (2.0 ** levels[:, None])
    radius = 2.0 ** (-levels)  # hat support fits in a box of this half-width

    leaves = []
    stack = _t0_triangles()
    while stack:
        level, tri = stack.pop()
        finer = levels > level
        if not finer.any():
            leaves.append((level, tri))
            continue
        lo = tri.min(axis=0)
        hi = tri.max(axis=0)
        c = centers[finer]
        rad = radius[finer]
        overlap = (
            (c[:, 0] + rad > lo[0] + EPS)
            & (c[:, 0] - rad < hi[0] - EPS)
            & (c[:, 1] + rad > lo[1] + EPS)
            & (c[:, 1] - rad < hi[1] - EPS)
        )
        if overlap.any():
            stack.extend(_children(level, tri))
        else:
            leaves.append((level, tri))

    leaves.sort(key=lambda lt: (lt[0], lt[1][0, 0], lt[1][0, 1], lt[1][1, 0], lt[1][1, 1]))
    rings = []
    pieces = []
    for _, tri in leaves:
        vals = h.eval_many(tri)
        A = np.column_stack([np.ones(3), tri[:, 0], tri[:, 1]])
        coeff = np.linalg.solve(A, vals)
        rings.append(Ring(ConvexPolygon(tri)))
        pieces.append(Poly2(2, coeff))
    part = RingPartition(omega, tuple(rings))
    return PiecewisePoly(part, tuple(pieces), k=2, r=0, hierarchy=h)


# ---------------------------------------------------------------------------


def _sup_estimate(s: PiecewisePoly) -> float:
    best = 0.0
    for ring, poly in zip(s.partition.rings, s.pieces):
        pts = [ring.outer.vertices, [ring.outer.centroid]]
        if ring.hole is not None:
            pts.append(ring.hole.vertices)
        pts = np.vstack(pts)
        best = max(best, float(np.max(np.abs(poly.eval_many(pts)))))
    return best


def smoothness_check(s: PiecewisePoly, r: int) -> dict:
    """Sample shared edges and report the largest jump of derivatives <= r."""
    if r > s.k - 2:
        raise ValueError("r must be <= k-2")
    shapes = [ring.shape.boundary for ring in s.partition.rings]
    tree = shapely.STRtree([ring.shape for ring in s.partition.rings])
    ts = np.arange(1, 18) / 18.0
    max_jump = 0.0
    for i, ring in enumerate(s.partition.rings):
        for j in tree.query(ring.shape):
            j = int(j)
            if j <= i:
                continue
            inter = shapes[i].intersection(shapes[j])
            if inter.is_empty or inter.length <= EPS:
                continue
            lines = [inter] if inter.geom_type == "LineString" else [
                g for g in getattr(inter, "geoms", []) if g.geom_type == "LineString"
            ]
            for line in lines:
                if line.length <= EPS:
                    continue
                coords = np.asarray(line.coords)
                for a, b in zip(coords[:-1], coords[1:]):
                    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
                    for order in range(r + 1):
                        for ax_count in range(order + 1):
                            pi, pj = s.pieces[i], s.pieces[j]
                            for _ in range(ax_count):
                                pi, pj = pi.partial(0), pj.partial(0)
                            for _ in range(order - ax_count):
                                pi, pj = pi.partial(1), pj.partial(1)
                            jump = np.max(np.abs(pi.eval_many(pts) - pj.eval_many(pts)))
                            max_jump = max(max_jump, float(jump))
    tol = 1e-9 * (1.0 + _sup_estimate(s))
    return {"max_jump": max_jump, "pass": max_jump <= tol}


# ---------------------------------------------------------------------------
# Random splines


def _draw_values(rng, n, value_law):
    if value_law == "normal":
        return rng.standard_normal(n)
    if value_law == "uniform":
        return rng.uniform(-1.0, 1.0, size=n)
    if value_law == "pm1":
        return rng.choice([-1.0, 1.0], size=n)
    raise ValueError(f"unknown value law {value_law!r}")


_MAX_SPLIT_LEVEL = 9


def random_dyadic_partition(rng, n: int, max_restarts: int = 64) -> RingPartition:
    """Random quadtree partition of the unit square into exactly n rings.

    A split either quadrisects a square or turns it into a square-minus-square
    ring plus the hole square (probability 0.3 when both are allowed; forced
    ring splits make up the count when fewer than 3 slots remain).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cells = None
    for _ in range(max_restarts):
        # cells: ('square', level, i, j) or ('ring', level, i, j, di, dj)
        trial = [("square", 0, 0, 0)]
        stuck = False
        while len(trial) < n:
            room = n - len(trial)
            quad_ok = [idx for idx, c in enumerate(trial)
                       if c[0] == "square" and c[1] + 1 <= _MAX_SPLIT_LEVEL]
            ring_ok = [idx for idx, c in enumerate(trial)
                       if c[0] == "square" and c[1] + 2 <= _MAX_SPLIT_LEVEL]
            ops = []
            if room >= 3 and quad_ok:
                ops.append("quad")
            if ring_ok:
                ops.append("ring")
            if not ops:
                stuck = True
                break
            if len(ops) == 2:
                op = "ring" if rng.random() < 0.3 else "quad"
            else:
                op = ops[0]
            pool = ring_ok if op == "ring" else quad_ok
            idx = pool[int(rng.integers(len(pool)))]
            _, lev, i, j = trial[idx]
            if op == "ring":
                di, dj = [(1, 1), (1, 2), (2, 1), (2, 2)][int(rng.integers(4))]
                trial[idx] = ("ring", lev, i, j, di, dj)
                trial.append(("square", lev + 2, 4 * i + di, 4 * j + dj))
            else:
                trial[idx] = ("square", lev + 1, 2 * i, 2 * j)
                trial.append(("square", lev + 1, 2 * i + 1, 2 * j))
                trial.append(("square", lev + 1, 2 * i, 2 * j + 1))
                trial.append(("square", lev + 1, 2 * i + 1, 2 * j + 1))
        if not stuck:
            cells = trial
            break
    if cells is None:
        raise GeometryError("n exceeds quadtree capacity")
    rings = []
    for c in cells:
        if c[0] == "square":
            _, lev, i, j = c
            rings.append(dyadic_ring(lev, (i, j)))
        else:
            _, lev, i, j, di, dj = c
            rings.append(dyadic_ring(lev, (i, j), hole=(lev + 2, (4 * i + di, 4 * j + dj))))
    return RingPartition(unit_square_domain(), tuple(rings))


def _hat_capacity(level):
    return (2**level + 1) ** 2


def random_spline(seed: int, n: int, k: int, value_law: str = "normal") -> PiecewisePoly:
    """Seeded random spline: dyadic piecewise constant (k=1) or hat sum (k=2)."""
    rng = np.random.default_rng(seed)
    if n < 1:
        raise ValueError("n must be >= 1")
    if k == 1:
        part = random_dyadic_partition(rng, n)
        vals = _draw_values(rng, n, value_law)
        return pc_from_partition(part, vals)
    if k == 2:
        max_level = 3
        while sum(_hat_capacity(l) for l in range(max_level + 1)) < 4 * n and max_level < 12:
            max_level += 1
        if sum(_hat_capacity(l) for l in range(max_level + 1)) < n:
            raise ValueError("n exceeds hat hierarchy capacity")
        cells = [(lev, i, j)
                 for lev in range(max_level + 1)
                 for i in range(2**lev + 1)
                 for j in range(2**lev + 1)]
        pick = rng.choice(len(cells), size=n, replace=False)
        sel = tuple(cells[int(t)] for t in sorted(pick))
        coeffs = tuple(_draw_values(rng, n, value_law))
        return hat_spline(HatHierarchy(sel, coeffs))
    raise ValueError("k must be 1 or 2")


# ---------------------------------------------------------------------------
# Polynomial inequalities on rings


def _poly_lp_on_shape(P: Poly2, shape, p: float, refine: int = 0) -> float:
    tris = triangulate(shape)
    for _ in range(refine):
        tris = _subdivide_tris(tris)
    nodes, w = _tri_nodes(tris)
    return float(np.dot(w, np.abs(P.eval_many(nodes)) ** p)) ** (1.0 / p)


def _poly_sup_on_ring(P: Poly2, ring: Ring) -> float:
    """Exact sup of |P| over a ring for degree <= 2 polynomials.

    Candidates: boundary vertices, per-edge critical points (P restricted to
    an edge is quadratic in the edge parameter) and the interior critical
    point of a quadratic when it lies in the ring.
    """
    if P.k > 3:
        raise ValueError("sup norm implemented for polynomials of degree <= 2")
    cand = [ring.outer.vertices]
    if ring.hole is not None:
        cand.append(ring.hole.vertices)
    pts = [np.vstack(cand)]
    if P.k == 3:
        gx, gy = P.partial(0), P.partial(1)
        edges = ring.outer.edges() + (ring.hole.edges() if ring.hole is not None else [])
        for a, b in edges:
            d = b - a
            g0 = float(gx.eval_many(a[None, :])[0] * d[0] + gy.eval_many(a[None, :])[0] * d[1])
            g1 = float(gx.eval_many(b[None, :])[0] * d[0] + gy.eval_many(b[None, :])[0] * d[1])
            if abs(g1 - g0) > 1e-15:
                t = -g0 / (g1 - g0)
                if 0.0 < t < 1.0:
                    pts.append((a + t * d)[None, :])
        exps = dict(zip(_exponents(P.k), P.coeffs))
        A = np.array([
            [2 * exps.get((2, 0), 0.0), exps.get((1, 1), 0.0)],
            [exps.get((1, 1), 0.0), 2 * exps.get((0, 2), 0.0)],
        ])
        if abs(np.linalg.det(A)) > 1e-15:
            crit = np.linalg.solve(A, -np.array([exps.get((1, 0), 0.0),
                                                 exps.get((0, 1), 0.0)]))
            if ring.contains_xy(crit[0], crit[1]):
                pts.append(crit[None, :])
    allpts = np.vstack(pts)
    return float(np.max(np.abs(P.eval_many(allpts))))


def _poly_norm(P: Poly2, shape_or_ring, p: float) -> float:
    if math.isinf(p):
        if isinstance(shape_or_ring, Ring):
            return _poly_sup_on_ring(P, shape_or_ring)
        ring = Ring(ConvexPolygon(np.asarray(shape_or_ring.exterior.coords)[:-1]))
        return _poly_sup_on_ring(P, ring)
    shape = shape_or_ring.shape if isinstance(shape_or_ring, Ring) else shape_or_ring
    refine = 0 if abs(p - round(p)) < 1e-12 else 2
    return _poly_lp_on_shape(P, shape, p, refine=refine)


def check_nikolski_markov(P: Poly2, g: Ring, p: float, q: float, r: int, nu=(1.0, 0.0)) -> dict:
    """Left/right ratios of the Nikolski, Markov and norm-comparison bounds.

    The comparison set H is the convex hull of the ring (its outer polygon).
    """
    if g.area <= SLIVER_AREA:
        raise GeometryError("degenerate ring")
    area = g.area
    norm_p = _poly_norm(P, g, p)
    norm_q = _poly_norm(P, g, q)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    nikolski = norm_p / (area ** (inv_p - inv_q) * norm_q) if norm_q > 0 else 0.0

    D = P
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    for _ in range(r):
        D = D.directional(nu)
    norm_D = _poly_norm(D, g, p)
    markov = norm_D * g.diameter**r / norm_p if norm_p > 0 else 0.0

    hull = Ring(g.outer)
    norm_H = _poly_norm(P, hull, p)
    ratio_area = (area / g.outer.area) ** inv_p
    norms = norm_p / (ratio_area * norm_H) if norm_H > 0 else 0.0
    return {"nikolski_ratio": nikolski, "markov_ratio": markov, "norms_ratio": norms}


# ---------------------------------------------------------------------------
# Serialization


def spline_to_text(s: PiecewisePoly) -> str:
    lines = [f"spline k={s.k} r={s.r} n={s.n}"]
    om = s.partition.omega
    if om.kind == "plane":
        lines.append("# omega plane")
    elif om.kind == "rect":
        x0, y0, x1, y1 = om.rect
        lines.append(f"# omega rect {_fmt(x0)} {_fmt(y0)} {_fmt(x1)} {_fmt(y1)}")
    for ring, poly in zip(s.partition.rings, s.pieces):
        lines.append(ring_line(ring))
        lines.append("coef " + " ".join(_fmt(c) for c in poly.coeffs))
    return "\n".join(lines) + "\n"


def spline_from_text(text: str) -> PiecewisePoly:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or not lines[0].startswith("spline "):
        raise ValueError("missing spline header")
    hdr = dict(tok.split("=") for tok in lines[0].split()[1:])
    k, r, n = int(hdr["k"]), int(hdr["r"]), int(hdr["n"])
    omega = None
    rings = []
    polys = []
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("# omega plane"):
            omega = Domain.plane()
            i += 1
            continue
        if line.startswith("# omega rect"):
            vals = [float(t) for t in line.split()[3:]]
            omega = Domain.rectangle(*vals)
            i += 1
            continue
        if line.startswith("#"):
            i += 1
            continue
        rings.append(parse_ring_line(line))
        coef_line = lines[i + 1].split()
        if coef_line[0] != "coef":
            raise ValueError("expected coef line after ring line")
        polys.append(Poly2(k, [float(t) for t in coef_line[1:]]))
        i += 2
    if len(rings) != n:
        raise ValueError("ring count does not match header")
    if omega is None:
        xs = [r.outer.bounds for r in rings]
        x0 = min(b[0] for b in xs)
        y0 = min(b[1] for b in xs)
        x1 = max(b[2] for b in xs)
        y1 = max(b[3] for b in xs)
        omega = Domain.rectangle(x0, y0, x1, y1)
    part = RingPartition(omega, tuple(rings))
    return PiecewisePoly(part, tuple(polys), k=k, r=r)
