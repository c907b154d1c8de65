"""Polygonal rings, their validation, good triangles, overlays and subdivisions.

A ring is a compact convex polygon, optionally minus a convex polygonal hole,
subject to structural conditions: bounded edge count, bounded eccentricity of
both boundaries, and the no-narrow-subregion condition witnessed by isosceles
triangles sitting on (possibly split) boundary edges.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely
from shapely.geometry import Point as ShapelyPoint
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.ops import polylabel

__all__ = [
    "GeometryError",
    "Point",
    "ConvexPolygon",
    "Ring",
    "StructuralParams",
    "Triangle",
    "Trapezoid",
    "Domain",
    "RingPartition",
    "Cell",
    "ValidationReport",
    "polygon_boolean",
    "eccentricity",
    "validate_ring",
    "good_triangles",
    "overlay",
    "subdivide_cell",
    "shape_certificate",
    "dyadic_ring",
    "quadtree_children",
    "random_ring",
    "ring_line",
    "parse_geometry",
    "validation_csv",
]

# Areas below this are numerical slivers and get discarded after boolean ops.
SLIVER_AREA = 1e-12
# Incidence tolerance for collinearity / on-boundary predicates (model units).
EPS = 1e-9


class GeometryError(ValueError):
    """Raised for malformed or degenerate geometry."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError("non-finite point")

    def as_array(self):
        return np.array([self.x, self.y], dtype=float)


def _pt(p) -> np.ndarray:
    if isinstance(p, Point):
        return p.as_array()
    a = np.asarray(p, dtype=float).reshape(2)
    return a


def _shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _diameter(v: np.ndarray) -> float:
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d * d).sum(-1).max()))


class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices."""

    def __init__(self, vertices):
        v = np.asarray([_pt(p) for p in vertices], dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("vertices must be an (m,2) sequence")
        if not np.all(np.isfinite(v)):
            raise GeometryError("non-finite vertex")
        if len(v) > 1 and np.allclose(v[0], v[-1]):
            v = v[:-1]
        # drop consecutive duplicates
        keep = [0]
        for i in range(1, len(v)):
            if np.linalg.norm(v[i] - v[keep[-1]]) > EPS:
                keep.append(i)
        if len(keep) > 1 and np.linalg.norm(v[keep[-1]] - v[keep[0]]) <= EPS:
            keep.pop()
        v = v[keep]
        if len(v) < 3:
            raise GeometryError("polygon needs at least 3 distinct vertices")
        if _shoelace(v) < 0:
            v = v[::-1].copy()
        scale = max(v.max(0).max() - v.min(0).min(), EPS)
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 1e-12 * scale * scale):
            raise GeometryError("polygon not strictly convex")
        self.vertices = v
        self.vertices.setflags(write=False)

    def __len__(self):
        return len(self.vertices)

    @cached_property
    def area(self) -> float:
        return _shoelace(self.vertices)

    @cached_property
    def diameter(self) -> float:
        return _diameter(self.vertices)

    @cached_property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cr = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return (v + w).T @ cr / (6.0 * self.area)

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    @cached_property
    def shape(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.vertices)

    def contains_xy(self, x, y, atol=EPS):
        """Vectorized closed-set membership using half-plane tests."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = np.ones(np.broadcast(x, y).shape, dtype=bool)
        for i in range(len(v)):
            s = e[i, 0] * (y - v[i, 1]) - e[i, 1] * (x - v[i, 0])
            inside &= s >= -atol
        return inside

    @cached_property
    def is_axis_rect(self) -> bool:
        if len(self.vertices) != 4:
            return False
        e = np.roll(self.vertices, -1, axis=0) - self.vertices
        return bool(np.all(np.minimum(np.abs(e[:, 0]), np.abs(e[:, 1])) < EPS))

    @cached_property
    def bounds(self):
        v = self.vertices
        return (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())


def _rect_poly(x0, y0, x1, y1) -> ConvexPolygon:
    return ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


class Ring:
    """Convex polygon Q1 minus an optional convex polygonal hole Q2."""

    def __init__(self, outer: ConvexPolygon, hole: ConvexPolygon | None = None):
        if not isinstance(outer, ConvexPolygon):
            outer = ConvexPolygon(outer)
        if hole is not None and not isinstance(hole, ConvexPolygon):
            hole = ConvexPolygon(hole)
        self.outer = outer
        self.hole = hole
        if hole is not None:
            if not outer.shape.covers(hole.shape):
                raise GeometryError("hole not contained in outer polygon")
            shp = shapely.difference(outer.shape, hole.shape)
            if shp.geom_type != "Polygon" or shp.area <= SLIVER_AREA:
                raise GeometryError("ring interior empty or disconnected")
            self._shape = shp
        else:
            self._shape = outer.shape

    @property
    def shape(self) -> ShapelyPolygon:
        return self._shape

    @cached_property
    def area(self) -> float:
        return self.outer.area - (self.hole.area if self.hole is not None else 0.0)

    @cached_property
    def diameter(self) -> float:
        return self.outer.diameter

    @cached_property
    def is_rectilinear(self) -> bool:
        return self.outer.is_axis_rect and (self.hole is None or self.hole.is_axis_rect)

    @cached_property
    def rectangles(self) -> np.ndarray:
        """Decompose a rectilinear ring into <= 4 rectangles (x0,y0,x1,y1 rows)."""
        if not self.is_rectilinear:
            raise GeometryError("rectangle decomposition needs a rectilinear ring")
        x0, y0, x1, y1 = self.outer.bounds
        if self.hole is None:
            return np.array([[x0, y0, x1, y1]])
        a0, b0, a1, b1 = self.hole.bounds
        rects = [
            (x0, y0, a0, y1),   # left band
            (a1, y0, x1, y1),   # right band
            (a0, y0, a1, b0),   # bottom band
            (a0, b1, a1, y1),   # top band
        ]
        out = [r for r in rects if r[2] - r[0] > SLIVER_AREA and r[3] - r[1] > SLIVER_AREA]
        return np.array(out)

    def boundary_edges(self):
        """Edges of the ring boundary with inward (into the ring) unit normals.

        Returns a list of (p, q, normal, tag) with tag 'outer' or 'hole'.
        """
        out = []
        for p, q in self.outer.edges():
            d = q - p
            n = np.array([-d[1], d[0]]) / np.linalg.norm(d)
            out.append((p, q, n, "outer"))
        if self.hole is not None:
            for p, q in self.hole.edges():
                d = q - p
                n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
                out.append((p, q, n, "hole"))
        return out

    def contains_xy(self, x, y):
        inside = self.outer.contains_xy(x, y)
        if self.hole is not None:
            # hole boundary still belongs to the ring, so only open hole excluded
            inside &= ~self.hole.contains_xy(x, y, atol=-EPS)
        return inside


@dataclass(frozen=True)
class StructuralParams:
    """Structural constants: max edge count, eccentricity bound, base angle."""

    N0: int = 8
    c0: float = 4.0
    beta: float = math.pi / 6

    def __post_init__(self):
        if self.N0 < 3:
            raise GeometryError("N0 must be >= 3")
        if self.c0 < 1.0:
            raise GeometryError("c0 must be >= 1")
        if not 0.0 < self.beta <= math.pi / 3:
            raise GeometryError("beta must lie in (0, pi/3]")

    def measure_lower_bound(self) -> float:
        """Positive lower bound for |R|/d(R)^2 over accepted rings.

        The largest boundary edge has length >= 2 d/N0 (convex perimeter >= 2d),
        its larger split piece >= d/N0, and the good triangle on that piece is
        contained in R, so |R| >= (d/N0)^2 tan(beta/2)/4.
        """
        return math.tan(self.beta / 2) / (4.0 * self.N0 * self.N0)


class Triangle:
    """Triangle tagged with its base edge (first two vertices)."""

    def __init__(self, verts, base_tag=None):
        v = np.asarray([_pt(p) for p in verts], dtype=float)
        if v.shape != (3, 2):
            raise GeometryError("triangle needs 3 vertices")
        area = _shoelace(v)
        if abs(area) <= SLIVER_AREA:
            raise GeometryError("degenerate triangle")
        if area < 0:
            v = v[::-1].copy()
        self.verts = v
        self.verts.setflags(write=False)
        self.base_tag = base_tag

    @property
    def area(self) -> float:
        return _shoelace(self.verts)

    @cached_property
    def shape(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.verts)

    def min_angle(self) -> float:
        v = self.verts
        angs = []
        for i in range(3):
            a, b, c = v[i], v[(i + 1) % 3], v[(i + 2) % 3]
            u, w = b - a, c - a
            cosv = np.dot(u, w) / (np.linalg.norm(u) * np.linalg.norm(w))
            angs.append(math.acos(max(-1.0, min(1.0, cosv))))
        return min(angs)

    def contains(self, pts, atol=EPS):
        v = self.verts
        pts = np.atleast_2d(pts)
        inside = np.ones(len(pts), dtype=bool)
        for i in range(3):
            p, q = v[i], v[(i + 1) % 3]
            s = (q[0] - p[0]) * (pts[:, 1] - p[1]) - (q[1] - p[1]) * (pts[:, 0] - p[0])
            inside &= s >= -atol
        return inside


@dataclass(frozen=True, eq=False)
class Trapezoid:
    """Isosceles trapezoid (or triangle) wedged between two good triangles.

    Vertices run v1, v2 (larger base delta1) then v3, v4 (smaller base delta2);
    legs [v1,v4] and [v2,v3] lie on boundary segments of the two parent rings.
    """

    verts: np.ndarray
    delta1: float
    delta2: float
    height: float
    leg1: np.ndarray  # on the parent-1 segment
    leg2: np.ndarray  # on the parent-2 segment

    def __post_init__(self):
        l1 = np.linalg.norm(self.leg1[1] - self.leg1[0])
        l2 = np.linalg.norm(self.leg2[1] - self.leg2[0])
        scale = max(l1, l2, EPS)
        if abs(l1 - l2) > 1e-6 * scale:
            raise GeometryError("trapezoid not isosceles")
        if self.height < self.delta1 - 1e-9 * scale:
            raise GeometryError("trapezoid height smaller than its larger base")

    @property
    def area(self) -> float:
        return abs(_shoelace(self.verts))

    @cached_property
    def shape(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.verts)


class Domain:
    """Bounded polygonal region or the unbounded plane."""

    def __init__(self, kind, data=None):
        if kind not in ("rect", "polygon", "plane"):
            raise GeometryError("unknown domain kind")
        self.kind = kind
        if kind == "rect":
            x0, y0, x1, y1 = map(float, data)
            if not (x1 > x0 and y1 > y0):
                raise GeometryError("empty rectangle domain")
            self.rect = (x0, y0, x1, y1)
        elif kind == "polygon":
            self.poly = data if isinstance(data, ConvexPolygon) else ConvexPolygon(data)

    @staticmethod
    def rectangle(x0, y0, x1, y1):
        return Domain("rect", (x0, y0, x1, y1))

    @staticmethod
    def polygon(vertices):
        return Domain("polygon", vertices)

    @staticmethod
    def plane():
        return Domain("plane")

    @property
    def is_bounded(self) -> bool:
        return self.kind != "plane"

    @cached_property
    def bounds(self):
        if self.kind == "rect":
            return self.rect
        if self.kind == "polygon":
            return self.poly.bounds
        raise GeometryError("the plane has no bounds")

    @cached_property
    def area(self) -> float:
        if self.kind == "rect":
            x0, y0, x1, y1 = self.rect
            return (x1 - x0) * (y1 - y0)
        if self.kind == "polygon":
            return self.poly.area
        return math.inf

    @cached_property
    def diameter(self) -> float:
        if self.kind == "rect":
            x0, y0, x1, y1 = self.rect
            return math.hypot(x1 - x0, y1 - y0)
        if self.kind == "polygon":
            return self.poly.diameter
        return math.inf

    @cached_property
    def shape(self):
        if self.kind == "rect":
            x0, y0, x1, y1 = self.rect
            return shapely.box(x0, y0, x1, y1)
        if self.kind == "polygon":
            return self.poly.shape
        raise GeometryError("the plane has no shapely form")

    def contains_xy(self, x, y):
        if self.kind == "plane":
            return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=bool)
        if self.kind == "rect":
            x0, y0, x1, y1 = self.rect
            x = np.asarray(x)
            y = np.asarray(y)
            return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        return self.poly.contains_xy(x, y)

    def segment_inside(self, a, b):
        """Vectorized test whether segments [a_i, b_i] lie in the domain.

        Domains here are convex, so endpoint membership suffices.
        """
        if self.kind == "plane":
            return np.ones(len(np.atleast_2d(a)), dtype=bool)
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        return self.contains_xy(a[:, 0], a[:, 1]) & self.contains_xy(b[:, 0], b[:, 1])

    def equivalent(self, other, tol=1e-9) -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == "plane":
            return True
        sa, sb = self.shape, other.shape
        return sa.symmetric_difference(sb).area <= tol * max(sa.area, sb.area)


@dataclass(frozen=True, eq=False)
class RingPartition:
    """Domain tiled by rings with pairwise disjoint interiors."""

    omega: Domain
    rings: tuple

    def __post_init__(self):
        object.__setattr__(self, "rings", tuple(self.rings))
        if len(self.rings) == 0:
            raise GeometryError("partition needs at least one ring")

    def __len__(self):
        return len(self.rings)

    @cached_property
    def support_shape(self):
        return shapely.unary_union([r.shape for r in self.rings])

    def check_tiling(self, rel_tol=1e-8) -> bool:
        total = sum(r.area for r in self.rings)
        if self.omega.is_bounded:
            target = self.omega.area
        else:
            target = self.support_shape.area
        if abs(total - target) > rel_tol * max(target, 1.0):
            return False
        tree = shapely.STRtree([r.shape for r in self.rings])
        for i, r in enumerate(self.rings):
            for j in tree.query(r.shape):
                if j <= i:
                    continue
                if r.shape.intersection(self.rings[j].shape).area > rel_tol * max(target, 1.0):
                    return False
        return True

    @cached_property
    def is_rectilinear(self) -> bool:
        return self.omega.kind == "rect" and all(r.is_rectilinear for r in self.rings)


@dataclass(frozen=True, eq=False)
class Cell:
    """Connected overlay piece with its two parent ring indices."""

    shape: ShapelyPolygon
    provenance: tuple | None = None

    @property
    def area(self) -> float:
        return self.shape.area

    @cached_property
    def diameter(self) -> float:
        v = np.asarray(self.shape.exterior.coords)
        return _diameter(v)


def _to_shape(g):
    if isinstance(g, (Ring, ConvexPolygon, Triangle, Cell, Trapezoid)):
        return g.shape
    if isinstance(g, ShapelyPolygon) or g.geom_type in ("Polygon", "MultiPolygon"):
        return g
    raise GeometryError(f"cannot interpret {type(g)!r} as a polygon")


def _components(geom):
    """Polygonal connected components above the sliver threshold."""
    parts = []
    if geom.is_empty:
        return parts
    if geom.geom_type == "Polygon":
        geoms = [geom]
    elif geom.geom_type in ("MultiPolygon", "GeometryCollection"):
        geoms = [g for g in geom.geoms if g.geom_type == "Polygon"]
    else:
        geoms = []
    for g in geoms:
        if g.area > SLIVER_AREA:
            parts.append(g)
    return parts


def polygon_boolean(a, b, op: str):
    """Boolean operation on polygons-with-holes, returning connected Cells."""
    sa, sb = _to_shape(a), _to_shape(b)
    if sa.area <= SLIVER_AREA or sb.area <= SLIVER_AREA:
        raise GeometryError("degenerate (zero-area) input")
    if op == "intersect":
        out = shapely.intersection(sa, sb)
    elif op == "difference":
        out = shapely.difference(sa, sb)
    elif op == "union":
        out = shapely.union(sa, sb)
    else:
        raise GeometryError(f"unknown boolean op {op!r}")
    return [Cell(g) for g in _components(out)]


def _min_enclosing_radius(v: np.ndarray) -> float:
    """Smallest enclosing circle radius via pair/triple enumeration."""
    m = len(v)
    best = math.inf

    def covers(c, r):
        return bool(np.all(np.linalg.norm(v - c, axis=1) <= r * (1 + 1e-12) + 1e-15))

    for i in range(m):
        for j in range(i + 1, m):
            c = 0.5 * (v[i] + v[j])
            r = 0.5 * np.linalg.norm(v[i] - v[j])
            if r < best and covers(c, r):
                best = r
    if math.isfinite(best):
        return best
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(j + 1, m):
                ax, ay = v[i]
                bx, by = v[j]
                cx, cy = v[k]
                d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
                if abs(d) < 1e-15:
                    continue
                ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay)
                      + (cx**2 + cy**2) * (ay - by)) / d
                uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx)
                      + (cx**2 + cy**2) * (bx - ax)) / d
                c = np.array([ux, uy])
                r = np.linalg.norm(v[i] - c)
                if r < best and covers(c, r):
                    best = r
    return best


def eccentricity(q: ConvexPolygon):
    """Chebyshev (inscribed) radius, enclosing radius and their ratio."""
    from scipy.optimize import linprog

    v = q.vertices
    e = np.roll(v, -1, axis=0) - v
    lens = np.linalg.norm(e, axis=1)
    # outward unit normals of CCW polygon; constraints n.x + r <= n.p
    n = np.stack([e[:, 1], -e[:, 0]], axis=1) / lens[:, None]
    b = (n * v).sum(axis=1)
    A = np.hstack([n, np.ones((len(v), 1))])
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=b,
                  bounds=[(None, None), (None, None), (0, None)], method="highs")
    if not res.success:
        raise GeometryError("Chebyshev radius LP failed")
    r_in = float(res.x[2])
    r_out = _min_enclosing_radius(v)
    if r_in <= 0:
        raise GeometryError("degenerate polygon: zero inscribed radius")
    return r_in, r_out, r_out / r_in


def iso_triangle(p, q, angle, inward) -> np.ndarray:
    """Isosceles triangle on base [p,q] with the given base angles, apex inward."""
    p, q = _pt(p), _pt(q)
    mid = 0.5 * (p + q)
    h = 0.5 * np.linalg.norm(q - p) * math.tan(angle)
    return np.array([p, q, mid + h * np.asarray(inward)])


@dataclass(frozen=True, eq=False)
class ValidationReport:
    pass_a: bool
    pass_b: bool
    pass_c: bool
    area: float
    diam: float
    area_diam_ratio: float
    ecc_outer: float
    ecc_hole: float | None
    # per boundary edge: (p, q, inward normal, tag, split fraction or None if failed)
    edge_splits: tuple

    @property
    def passed(self) -> bool:
        return self.pass_a and self.pass_b and self.pass_c


# Candidate split fractions, scanned center-out; 1.0 means the whole edge.
_SPLIT_FRACTIONS = [1.0] + sorted((j / 34 for j in range(1, 34)),
                                  key=lambda s: abs(s - 0.5))


def validate_ring(r: Ring, params: StructuralParams = StructuralParams()) -> ValidationReport:
    """Check Definition-of-ring conditions (a)-(c) and report |R|/d(R)^2."""
    if not isinstance(r, Ring):
        raise GeometryError("validate_ring expects a Ring")
    shp = r.shape
    prepared = shp
    shapely.prepare(prepared)

    pass_a = r.area > SLIVER_AREA
    if r.hole is not None:
        pass_a = pass_a and r.outer.shape.covers(r.hole.shape)

    ecc_outer = eccentricity(r.outer)[2]
    ecc_hole = eccentricity(r.hole)[2] if r.hole is not None else None
    pass_b = len(r.outer) <= params.N0 and ecc_outer <= params.c0 * (1 + 1e-12)
    if r.hole is not None:
        pass_b = pass_b and len(r.hole) <= params.N0 and ecc_hole <= params.c0 * (1 + 1e-12)

    splits = []
    pass_c = True
    for p, q, n, tag in r.boundary_edges():
        found = None
        for s in _SPLIT_FRACTIONS:
            cut = p + s * (q - p)
            tris = [iso_triangle(p, cut, params.beta, n)]
            if s < 1.0:
                tris.append(iso_triangle(cut, q, params.beta, n))
            if all(prepared.covers(ShapelyPolygon(t)) for t in tris):
                found = s
                break
        if found is None:
            pass_c = False
        splits.append((p, q, n, tag, found))

    diam = r.diameter
    return ValidationReport(
        pass_a=pass_a,
        pass_b=pass_b,
        pass_c=pass_c,
        area=r.area,
        diam=diam,
        area_diam_ratio=r.area / (diam * diam),
        ecc_outer=ecc_outer,
        ecc_hole=ecc_hole,
        edge_splits=tuple(splits),
    )


def good_triangles(r: Ring, params: StructuralParams = StructuralParams(),
                   report: ValidationReport | None = None):
    """Good triangles (base angles beta/2) on the split boundary segments of r.

    Returns a list of (segment, Triangle) where segment is a (2,2) array.
    """
    if report is None:
        report = validate_ring(r, params)
    if not report.pass_c:
        raise GeometryError("ring has no valid edge splits; validation failed")
    out = []
    for p, q, n, tag, s in report.edge_splits:
        if s is None:
            raise GeometryError("missing split witness")
        pieces = [(p, q)] if s >= 1.0 else [(p, p + s * (q - p)), (p + s * (q - p), q)]
        for a, b in pieces:
            tri = Triangle(iso_triangle(a, b, params.beta / 2, n), base_tag=tag)
            out.append((np.array([a, b]), tri))
    return out


def overlay(p1: RingPartition, p2: RingPartition):
    """All maximal connected intersections of rings from the two partitions."""
    if not p1.omega.equivalent(p2.omega):
        raise GeometryError("partitions cover different domains")
    shapes2 = [r.shape for r in p2.rings]
    tree = shapely.STRtree(shapes2)
    cells = []
    for i, r1 in enumerate(p1.rings):
        for j in sorted(tree.query(r1.shape)):
            inter = shapely.intersection(r1.shape, shapes2[j])
            for comp in _components(inter):
                cells.append(Cell(comp, provenance=(i, int(j))))
    return cells


# ---------------------------------------------------------------------------
# Trapezoid extraction


def _clip_interval(p0, d, tri_verts, lo, hi):
    """Clip the line p0 + s*d against a triangle; returns sub-interval of [lo,hi]."""
    for i in range(3):
        a = tri_verts[i]
        b = tri_verts[(i + 1) % 3]
        e = b - a
        # inside: cross(e, x - a) >= 0 for CCW triangle
        num = e[0] * (p0[1] - a[1]) - e[1] * (p0[0] - a[0])
        den = e[0] * d[1] - e[1] * d[0]
        if abs(den) < 1e-15:
            if num < 0:
                return None
            continue
        s = -num / den
        if den > 0:
            lo = max(lo, s)
        else:
            hi = min(hi, s)
        if lo > hi:
            return None
    return lo, hi


def _max_trapezoid(e1, n1, e2, n2, beta):
    """Maximal isosceles trapezoid with legs on segments e1, e2.

    The trapezoid lies inside the two good triangles (base angles beta/2) and
    satisfies height >= larger base.  Legs have maximal extent; the feasible
    leg interval is computed exactly by clipping each base line against the
    other triangle, so no iterative search is needed.
    """
    a0, a1 = np.asarray(e1, dtype=float)
    b0, b1 = np.asarray(e2, dtype=float)
    d1v = a1 - a0
    d2v = b1 - b0
    len1 = np.linalg.norm(d1v)
    len2 = np.linalg.norm(d2v)
    if len1 < EPS or len2 < EPS:
        return None
    d1 = d1v / len1
    d2 = d2v / len2
    m1, m2 = 0.5 * (a0 + a1), 0.5 * (b0 + b1)
    # segments must face each other across the cell
    if np.dot(n1, m2 - m1) <= EPS or np.dot(n2, m1 - m2) <= EPS:
        return None

    tri1 = iso_triangle(a0, a1, beta / 2, n1)
    tri2 = iso_triangle(b0, b1, beta / 2, n2)
    if _shoelace(tri1) < 0:
        tri1 = tri1[::-1]
    if _shoelace(tri2) < 0:
        tri2 = tri2[::-1]

    cross = d1[0] * d2[1] - d1[1] * d2[0]
    scale = max(len1, len2)

    if abs(cross) < 1e-9:
        # parallel legs: axis along the segments
        if np.dot(d2, d1) < 0:
            d2 = -d2
            b0, b1 = b1, b0
        axis = d1
        ref = a0
    else:
        # wedge: axis along the angle bisector through the intersection point
        t = ((b0[0] - a0[0]) * d2[1] - (b0[1] - a0[1]) * d2[0]) / cross
        O = a0 + t * d1
        u1 = d1 if np.dot(d1, m1 - O) > 0 else -d1
        u2 = d2 if np.dot(d2, m2 - O) > 0 else -d2
        axis = u1 + u2
        na = np.linalg.norm(axis)
        if na < EPS:
            return None
        axis = axis / na
        ref = O

    def q_of(p):
        return float(np.dot(p - ref, axis))

    # feasible parameter interval on each line: own segment extent clipped by
    # the other triangle
    i1 = _clip_interval(a0, d1v / 1.0, tri2, 0.0, 1.0)
    i2 = _clip_interval(b0, b1 - b0, tri1, 0.0, 1.0)
    if i1 is None or i2 is None:
        return None

    def pa(s):
        return a0 + s * d1v

    def pb(s):
        return b0 + s * (b1 - b0)

    qa = sorted((q_of(pa(i1[0])), q_of(pa(i1[1]))))
    qb = sorted((q_of(pb(i2[0])), q_of(pb(i2[1]))))
    qlo = max(qa[0], qb[0])
    qhi = min(qa[1], qb[1])
    if qhi - qlo <= EPS * scale:
        return None

    # invert q back to line parameters (q is affine and monotone in s)
    def s_at(p0, dv, q):
        dq = np.dot(dv, axis)
        if abs(dq) < 1e-15:
            return None
        return (q - np.dot(p0 - ref, axis)) / dq

    def width(q):
        sa_, sb_ = s_at(a0, d1v, q), s_at(b0, b1 - b0, q)
        return float(np.linalg.norm(pa(sa_) - pb(sb_)))

    w_lo, w_hi = width(qlo), width(qhi)
    # orient so the wide end sits at q2 (delta nondecreasing toward q2)
    if w_lo > w_hi + EPS * scale:
        axis = -axis
        qa = [-q for q in qa]
        qb = [-q for q in qb]
        qlo, qhi = -qhi, -qlo
        w_lo, w_hi = w_hi, w_lo

    slope = (w_hi - w_lo) / (qhi - qlo)

    def delta(q):
        return w_lo + slope * (q - qlo)

    q2 = qhi
    q1 = qlo
    if q2 - q1 < delta(q2) - EPS * scale:
        # maximal legs fail the height condition; no shorter choice can help
        # since shrinking either end only lowers H faster than delta1
        return None
    sa1, sa2 = s_at(a0, d1v, q1), s_at(b0, b1 - b0, q1)
    sb1, sb2 = s_at(a0, d1v, q2), s_at(b0, b1 - b0, q2)
    v1 = pa(sa1)
    v2 = pb(sa2)
    v3 = pb(sb2)
    v4 = pa(sb1)
    verts = np.array([v1, v2, v3, v4])
    if abs(_shoelace(verts)) <= SLIVER_AREA:
        return None
    return Trapezoid(
        verts=verts,
        delta1=float(np.linalg.norm(v2 - v1)),
        delta2=float(np.linalg.norm(v3 - v4)),
        height=float(q2 - q1),
        leg1=np.array([v1, v4]),
        leg2=np.array([v2, v3]),
    )


def _boundary_segments(poly: ShapelyPolygon):
    segs = []
    rings = [poly.exterior] + list(poly.interiors)
    for ring in rings:
        coords = np.asarray(ring.coords)
        for i in range(len(coords) - 1):
            p, q = coords[i], coords[i + 1]
            if np.linalg.norm(q - p) > EPS:
                segs.append((p, q))
    return segs


def _pieces_on_parent(cell_segs, parent_segments):
    """Match cell boundary segments against a parent's split boundary segments.

    Returns (piece, parent segment, inward normal) for every positive-length
    overlap, cutting cell segments at the parent's split points.
    """
    out = []
    for p, q in cell_segs:
        d = q - p
        ln = np.linalg.norm(d)
        u = d / ln
        for seg, tri in parent_segments:
            s0, s1 = seg
            dv = s1 - s0
            lv = np.linalg.norm(dv)
            uv = dv / lv
            if abs(u[0] * uv[1] - u[1] * uv[0]) > 1e-7:
                continue
            # both cell endpoints must sit on the parent segment's line
            if abs(np.cross(uv, p - s0)) > EPS * 10 or abs(np.cross(uv, q - s0)) > EPS * 10:
                continue
            t0 = np.dot(p - s0, uv)
            t1 = np.dot(q - s0, uv)
            tlo, thi = min(t0, t1), max(t0, t1)
            lo, hi = max(0.0, tlo), min(lv, thi)
            if hi - lo <= EPS * 10:
                continue
            apex = tri.verts[2]
            base_mid = 0.5 * (s0 + s1)
            nvec = apex - base_mid
            nvec = nvec / np.linalg.norm(nvec)
            out.append((np.array([s0 + lo * uv, s0 + hi * uv]), (seg, tri), nvec))
    return out


def subdivide_cell(u: Cell, g1, g2, params: StructuralParams = StructuralParams()):
    """Carve maximal isosceles trapezoids out of an overlay cell.

    g1, g2 are the good-triangle lists of the cell's two parent rings.  Returns
    (trapezoids, residual Cells); the pieces tile the cell.
    """
    cell_segs = _boundary_segments(u.shape)
    pieces1 = _pieces_on_parent(cell_segs, g1)
    pieces2 = _pieces_on_parent(cell_segs, g2)

    traps = []
    shapes = []
    for e1, _, n1 in pieces1:
        for e2, _, n2 in pieces2:
            t = _max_trapezoid(e1, n1, e2, n2, params.beta)
            if t is None:
                continue
            tshape = t.shape
            if not u.shape.buffer(1e-9).covers(tshape):
                continue
            if any(tshape.intersection(s).area > 1e-10 for s in shapes):
                continue
            traps.append(t)
            shapes.append(tshape)

    if shapes:
        rest = shapely.difference(u.shape, shapely.unary_union(shapes))
    else:
        rest = u.shape
    residuals = [Cell(g, provenance=u.provenance) for g in _components(rest)]
    return traps, residuals


def shape_certificate(a) -> dict:
    """Elongation d^2/|a| plus an inscribed witness triangle for a cell."""
    shp = _to_shape(a)
    area = shp.area
    if area <= SLIVER_AREA:
        raise GeometryError("degenerate cell")
    verts = np.asarray(shp.exterior.coords)[:-1]
    diam = _diameter(verts)
    center = polylabel(shp, tolerance=1e-6 * math.sqrt(area))
    rho = shp.boundary.distance(center)
    c = np.array([center.x, center.y])
    # equilateral triangle inscribed in the largest inner circle
    tri = Triangle([c + rho * np.array([math.cos(a0), math.sin(a0)])
                    for a0 in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)])
    return {
        "elongation": diam * diam / area,
        "witness": tri,
        "min_angle": tri.min_angle(),
        "cstar": area / tri.area,
    }


def dyadic_ring(level: int, index, hole=None) -> Ring:
    """Dyadic square 2^-level * (index + [0,1]^2), minus an optional dyadic hole."""
    i, j = index
    s = 2.0 ** (-level)
    outer = _rect_poly(i * s, j * s, (i + 1) * s, (j + 1) * s)
    hpoly = None
    if hole is not None:
        hl, (hi, hj) = hole
        hs = 2.0 ** (-hl)
        hpoly = _rect_poly(hi * hs, hj * hs, (hi + 1) * hs, (hj + 1) * hs)
        ox0, oy0, ox1, oy1 = outer.bounds
        hx0, hy0, hx1, hy1 = hpoly.bounds
        if not (hx0 > ox0 + EPS and hy0 > oy0 + EPS and hx1 < ox1 - EPS and hy1 < oy1 - EPS):
            raise GeometryError("hole square not strictly inside the outer square")
    return Ring(outer, hpoly)


def quadtree_children(r: Ring):
    """Quadrisect a dyadic (axis-aligned, hole-free) square into 4 children."""
    if r.hole is not None or not r.outer.is_axis_rect:
        raise GeometryError("hierarchical subdivision is implemented for dyadic squares only")
    x0, y0, x1, y1 = r.outer.bounds
    if abs((x1 - x0) - (y1 - y0)) > EPS:
        raise GeometryError("hierarchical subdivision is implemented for dyadic squares only")
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    return [
        Ring(_rect_poly(x0, y0, xm, ym)),
        Ring(_rect_poly(xm, y0, x1, ym)),
        Ring(_rect_poly(x0, ym, xm, y1)),
        Ring(_rect_poly(xm, ym, x1, y1)),
    ]


def random_ring(rng: np.random.Generator, params: StructuralParams = StructuralParams(),
                scale: float = 1.0, hole_prob: float = 0.4, max_tries: int = 200) -> Ring:
    """Seeded random ring that passes validate_ring (rejection sampling)."""
    for _ in range(max_tries):
        m = int(rng.integers(3, params.N0 + 1))
        rot = rng.uniform(0, 2 * math.pi)
        angles = rot + 2 * math.pi * np.arange(m) / m
        radii = scale * rng.uniform(0.8, 1.2, size=m)
        center = rng.uniform(-1, 1, size=2) * scale
        verts = center + np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        try:
            outer = ConvexPolygon(verts)
        except GeometryError:
            continue
        hole = None
        if rng.random() < hole_prob:
            f = rng.uniform(0.2, 0.4)
            c = outer.centroid
            hole_verts = c + f * (outer.vertices - c)
            try:
                hole = ConvexPolygon(hole_verts)
            except GeometryError:
                hole = None
        try:
            ring = Ring(outer, hole)
        except GeometryError:
            continue
        if validate_ring(ring, params).passed:
            return ring
    raise GeometryError("failed to sample a valid ring")


# ---------------------------------------------------------------------------
# Plain-text geometry format


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def ring_line(r: Ring) -> str:
    parts = ["ring", "outer"]
    for v in r.outer.vertices:
        parts += [_fmt(v[0]), _fmt(v[1])]
    if r.hole is not None:
        parts.append("hole")
        for v in r.hole.vertices:
            parts += [_fmt(v[0]), _fmt(v[1])]
    return " ".join(parts)


def parse_ring_line(line: str) -> Ring:
    tok = line.split()
    if not tok or tok[0] != "ring" or tok[1] != "outer":
        raise GeometryError(f"malformed ring line: {line!r}")
    if "hole" in tok:
        k = tok.index("hole")
        outer_tok, hole_tok = tok[2:k], tok[k + 1:]
    else:
        outer_tok, hole_tok = tok[2:], []

    def to_verts(ts):
        if len(ts) % 2 != 0:
            raise GeometryError("odd coordinate count in ring line")
        vals = [float(t) for t in ts]
        return np.array(vals).reshape(-1, 2)

    outer = ConvexPolygon(to_verts(outer_tok))
    hole = ConvexPolygon(to_verts(hole_tok)) if hole_tok else None
    return Ring(outer, hole)


def parse_geometry(text: str):
    rings = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rings.append(parse_ring_line(line))
    return rings


def validation_csv(reports) -> str:
    lines = ["ring_id,pass_a,pass_b,pass_c,area,diam,ratio"]
    for i, rep in enumerate(reports):
        lines.append(
            f"{i},{int(rep.pass_a)},{int(rep.pass_b)},{int(rep.pass_c)},"
            f"{_fmt(rep.area)},{_fmt(rep.diam)},{_fmt(rep.area_diam_ratio)}"
        )
    return "\n".join(lines) + "\n"
