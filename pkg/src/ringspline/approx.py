"""Greedy adaptive n-term approximation over dyadic ring partitions.

k=1 runs a priority-queue quadtree on the unit square: the leaf with the
largest local error is split, either into its 4 dyadic children or, when the
error concentrates in a single child, into that child plus the surrounding
ring (parent minus child).  k=2 selects the n largest hierarchical hat
coefficients of an interpolatory pre-fit.

The engine produces certified upper bounds of the best n-term error; rates are
what the experiments check, not optimality gaps.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexPolygon, GeometryError, Ring
from .splines import (
    HatHierarchy,
    PiecewisePoly,
    Poly2,
    RingPartition,
    _fmt,
    hat_spline,
    pc_from_partition,
    unit_square_domain,
)

__all__ = ["ApproxTrace", "best_poly_fit", "greedy_approx", "rate_fit"]

_MAX_DEPTH = 12


def _sobol_nodes(n_log2: int, seed: int, bounds=(0.0, 0.0, 1.0, 1.0)):
    from scipy.stats import qmc

    sob = qmc.Sobol(d=2, scramble=True, seed=seed)
    u = sob.random(1 << n_log2)
    x0, y0, x1, y1 = bounds
    pts = np.empty_like(u)
    pts[:, 0] = x0 + u[:, 0] * (x1 - x0)
    pts[:, 1] = y0 + u[:, 1] * (y1 - y0)
    return pts


def _as_fn(f):
    if isinstance(f, PiecewisePoly) or hasattr(f, "eval_many"):
        return lambda pts: f.eval_many(pts)
    return lambda pts: np.asarray(f(pts), dtype=float)


def _const_fit(vals: np.ndarray, p: float):
    """Best constant for sum |v - c|^p and the attained sum."""
    if len(vals) == 0:
        return 0.0, 0.0
    if p == 2.0:
        c = float(vals.mean())
        return c, float(np.sum((vals - c) ** 2))
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-15:
        return lo, 0.0
    phi = lambda c: float(np.sum(np.abs(vals - c) ** p))
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - gr * (b - a)
    x2 = a + gr * (b - a)
    f1, f2 = phi(x1), phi(x2)
    for _ in range(60):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - gr * (b - a)
            f1 = phi(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + gr * (b - a)
            f2 = phi(x2)
    c = 0.5 * (a + b)
    return c, phi(c)


def best_poly_fit(f, cell: Ring, p: float, k: int, nodes=None, weight=None):
    """Best L^p fit on a ring: constant (k=1) or least-squares linear (k=2).

    Returns (Poly2, error) with error the achieved L^p norm of the residual,
    estimated on quasi-Monte-Carlo nodes.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    fn = _as_fn(f)
    if nodes is None:
        x0, y0, x1, y1 = cell.outer.bounds
        pts = _sobol_nodes(14, seed=0, bounds=(x0, y0, x1, y1))
        inside = cell.contains_xy(pts[:, 0], pts[:, 1])
        pts = pts[inside]
        weight = (x1 - x0) * (y1 - y0) / (1 << 14)
    else:
        pts = nodes
        if weight is None:
            raise ValueError("weight required with explicit nodes")
    vals = fn(pts)
    if k == 1:
        c, err_pow = _const_fit(vals, p)
        return Poly2.constant(c), (weight * err_pow) ** (1.0 / p)
    A = np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    poly = Poly2(2, coef)
    resid = vals - A @ coef
    return poly, (weight * float(np.sum(np.abs(resid) ** p))) ** (1.0 / p)


@dataclass(eq=False)
class ApproxTrace:
    """Greedy trace: error against term count, with optional spline snapshots."""

    rows: list = field(default_factory=list)  # (n, error, holes)
    snapshots: dict = field(default_factory=dict)
    budget_exhausted: bool = False
    meta: dict = field(default_factory=dict)

    def error_at(self, n: int):
        """Best recorded (n', error) with n' <= n; errors are nonincreasing."""
        best = None
        for row in self.rows:
            if row[0] <= n:
                best = row
            else:
                break
        if best is None:
            raise ValueError(f"no trace row with n <= {n}")
        return best[0], best[1]

    def to_csv(self) -> str:
        lines = ["n,error,rings,holes"]
        for n, err, holes in self.rows:
            lines.append(f"{n},{_fmt(err)},{n},{holes}")
        return "\n".join(lines) + "\n"


class _Leaf:
    __slots__ = ("kind", "level", "i", "j", "quad", "idx", "c", "err_pow")

    def __init__(self, kind, level, i, j, quad, idx):
        self.kind = kind  # 'square' or 'ring'
        self.level = level
        self.i = i
        self.j = j
        self.quad = quad  # hole quadrant for rings
        self.idx = idx

    def bounds(self):
        s = 2.0**-self.level
        return (self.i * s, self.j * s, (self.i + 1) * s, (self.j + 1) * s)

    def hole_bounds(self):
        qx, qy = self.quad
        s = 2.0 ** -(self.level + 1)
        i, j = 2 * self.i + qx, 2 * self.j + qy
        return (i * s, j * s, (i + 1) * s, (j + 1) * s)

    def to_ring(self) -> Ring:
        x0, y0, x1, y1 = self.bounds()
        outer = ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
        if self.kind == "square":
            return Ring(outer)
        a0, b0, a1, b1 = self.hole_bounds()
        hole = ConvexPolygon([(a0, b0), (a1, b0), (a1, b1), (a0, b1)])
        return Ring(outer, hole)


def _fit_leaf(leaf: _Leaf, fvals, p, weight):
    c, err_pow = _const_fit(fvals[leaf.idx], p)
    leaf.c = c
    leaf.err_pow = weight * err_pow


def _child_masks(leaf: _Leaf, pts):
    x0, y0, x1, y1 = leaf.bounds()
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    sub = pts[leaf.idx]
    right = sub[:, 0] >= xm
    top = sub[:, 1] >= ym
    return {
        (0, 0): leaf.idx[~right & ~top],
        (1, 0): leaf.idx[right & ~top],
        (0, 1): leaf.idx[~right & top],
        (1, 1): leaf.idx[right & top],
    }


def _assemble(leaves, p_order) -> PiecewisePoly:
    rings = []
    values = []
    for leaf in leaves:
        rings.append(leaf.to_ring())
        values.append(leaf.c)
    part = RingPartition(unit_square_domain(), tuple(rings))
    return pc_from_partition(part, values)


def greedy_approx(f, n_max: int, k: int, p: float, snapshot_at=(),
                  nodes_log2: int = 15, seed: int = 0,
                  ring_threshold: float = 0.9, hat_levels: int | None = None) -> ApproxTrace:
    """Greedy n-term approximation of f on the unit square; see module doc."""
    if n_max > 1 << 16:
        raise ValueError("n_max capped at 2^16")
    if p <= 0:
        raise ValueError("p must be positive")
    if k == 1:
        return _greedy_pc_impl(f, n_max, p, snapshot_at, nodes_log2, seed, ring_threshold)
    if k == 2:
        return _greedy_hat(f, n_max, p, snapshot_at, nodes_log2, seed, hat_levels)
    raise ValueError("k must be 1 or 2")


def _greedy_pc_impl(f, n_max, p, snapshot_at, nodes_log2, seed, ring_threshold):
    fn = _as_fn(f)
    pts = _sobol_nodes(nodes_log2, seed)
    fvals = fn(pts)
    weight = 1.0 / len(pts)

    root = _Leaf("square", 0, 0, 0, None, np.arange(len(pts)))
    _fit_leaf(root, fvals, p, weight)
    leaves = {id(root): root}
    order = [root]  # creation order, for deterministic assembly
    heap = [(-root.err_pow, 0, root)]
    counter = 1
    trace = ApproxTrace(meta={"k": 1, "p": p, "n_max": n_max, "seed": seed,
                              "nodes": len(pts)})
    pending = sorted(set(snapshot_at))

    def record():
        live = [l for l in order if id(l) in leaves]
        total = sum(l.err_pow for l in live)
        holes = sum(1 for l in live if l.kind == "ring")
        n = len(live)
        trace.rows.append((n, total ** (1.0 / p), holes))
        while pending and n >= pending[0]:
            trace.snapshots[pending.pop(0)] = _assemble(live, p)

    record()
    while len(leaves) < n_max:
        top = None
        while heap:
            negerr, _, leaf = heapq.heappop(heap)
            if id(leaf) in leaves:
                top = leaf
                break
        if top is None or top.err_pow <= 1e-28:
            break  # converged or nothing left to split
        new_leaves = None
        if top.kind == "square" and top.level < _MAX_DEPTH:
            masks = _child_masks(top, pts)
            children = []
            for (qx, qy), idx in masks.items():
                ch = _Leaf("square", top.level + 1, 2 * top.i + qx, 2 * top.j + qy,
                           None, idx)
                _fit_leaf(ch, fvals, p, weight)
                children.append(ch)
            errs = [c.err_pow for c in children]
            imax = int(np.argmax(errs))
            if (errs[imax] >= ring_threshold * top.err_pow
                    and len(leaves) + 1 <= n_max):
                hot = children[imax]
                quad = (hot.i - 2 * top.i, hot.j - 2 * top.j)
                ring = _Leaf("ring", top.level, top.i, top.j, quad,
                             np.setdiff1d(top.idx, hot.idx, assume_unique=True))
                _fit_leaf(ring, fvals, p, weight)
                new_leaves = [ring, hot]
            elif len(leaves) + 3 <= n_max:
                new_leaves = children
        elif top.kind == "ring" and len(leaves) + 2 <= n_max:
            # split the L/annulus back into the hole's three dyadic siblings
            masks = _child_masks(top, pts)
            new_leaves = []
            for (qx, qy), idx in masks.items():
                if (qx, qy) == top.quad:
                    continue
                ch = _Leaf("square", top.level + 1, 2 * top.i + qx, 2 * top.j + qy,
                           None, idx)
                _fit_leaf(ch, fvals, p, weight)
                new_leaves.append(ch)
        if new_leaves is None:
            # the worst leaf cannot be split (depth cap or term budget)
            trace.budget_exhausted = len(leaves) < n_max
            break
        del leaves[id(top)]
        for ch in new_leaves:
            leaves[id(ch)] = ch
            order.append(ch)
            heapq.heappush(heap, (-ch.err_pow, counter, ch))
            counter += 1
        record()
    live = [l for l in order if id(l) in leaves]
    trace.snapshots["final"] = _assemble(live, p)
    for n in pending:
        trace.snapshots[n] = trace.snapshots["final"]
    return trace


def _hierarchical_coeffs(fn, levels: int):
    """Hierarchical hat coefficients interpolating f at the level grids."""
    coeffs = []  # (level, i, j, c)
    size = 1
    grid = fn(np.array([[x, y] for y in (0.0, 1.0) for x in (0.0, 1.0)], dtype=float))
    # values arranged val[j, i] on the (2^l + 1)^2 grid
    val = np.array([[grid[0], grid[1]], [grid[2], grid[3]]])
    for (j, i) in ((0, 0), (0, 1), (1, 0), (1, 1)):
        coeffs.append((0, i, j, float(val[j, i])))
    for lev in range(1, levels + 1):
        m = 2**lev
        # interpolate previous grid onto the refined one
        fine = np.empty((m + 1, m + 1))
        fine[::2, ::2] = val
        fine[::2, 1::2] = 0.5 * (val[:, :-1] + val[:, 1:])
        fine[1::2, ::2] = 0.5 * (val[:-1, :] + val[1:, :])
        # cell centers sit on the main diagonal of each coarse cell
        fine[1::2, 1::2] = 0.5 * (val[:-1, :-1] + val[1:, 1:])
        xs = np.arange(m + 1) / m
        X, Y = np.meshgrid(xs, xs)
        new = np.zeros((m + 1, m + 1), dtype=bool)
        new[1::2, :] = True
        new[:, 1::2] = True
        pts = np.column_stack([X[new], Y[new]])
        fv = fn(pts)
        target = fine.copy()
        target[new] = fv
        detail = target - fine
        jj, ii = np.nonzero(new)
        for a in range(len(jj)):
            c = float(detail[jj[a], ii[a]])
            if c != 0.0:
                coeffs.append((lev, int(ii[a]), int(jj[a]), c))
        val = target
    return coeffs


def _greedy_hat(f, n_max, p, snapshot_at, nodes_log2, seed, hat_levels):
    fn = _as_fn(f)
    if hat_levels is None:
        hat_levels = max(4, int(math.ceil(math.log(max(n_max, 4), 4))) + 2)
    hat_levels = min(hat_levels, 8)
    coeffs = _hierarchical_coeffs(fn, hat_levels)
    coeffs.sort(key=lambda t: (-abs(t[3]), t[0], t[1], t[2]))
    coeffs = coeffs[: max(n_max, 1)]

    pts = _sobol_nodes(nodes_log2, seed)
    fvals = fn(pts)
    weight = 1.0 / len(pts)
    cur = np.zeros(len(pts))
    trace = ApproxTrace(meta={"k": 2, "p": p, "n_max": n_max, "seed": seed,
                              "nodes": len(pts), "hat_levels": hat_levels})
    pending = sorted(set(snapshot_at))

    from .splines import _hat_values

    sel = []
    cvals = []
    err0 = (weight * float(np.sum(np.abs(fvals) ** p))) ** (1.0 / p)
    for n, (lev, i, j, c) in enumerate(coeffs, start=1):
        cur = cur + c * _hat_values(pts, lev, i, j)
        sel.append((lev, i, j))
        cvals.append(c)
        err = (weight * float(np.sum(np.abs(fvals - cur) ** p))) ** (1.0 / p)
        trace.rows.append((n, err, 0))
        while pending and n >= pending[0]:
            trace.snapshots[pending.pop(0)] = hat_spline(
                HatHierarchy(tuple(sel), tuple(cvals)))
    if not trace.rows:
        trace.rows.append((1, err0, 0))
    last_err = trace.rows[-1][1]
    trace.budget_exhausted = len(coeffs) < n_max and last_err > 1e-12
    trace.snapshots["final"] = hat_spline(HatHierarchy(tuple(sel), tuple(cvals)))
    return trace


def rate_fit(rows, window=None) -> dict:
    """Least-squares line through (log x, log y); returns slope, intercept, r2."""
    pts = [(float(x), float(y)) for x, y in rows]
    if window is not None:
        lo, hi = window
        pts = [(x, y) for x, y in pts if lo <= x <= hi]
    for x, y in pts:
        if x <= 0 or y <= 0:
            raise ValueError("rate_fit needs positive data")
    if len(pts) < 2:
        raise ValueError("rate_fit needs at least 2 points")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    fit = slope * lx + intercept
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot < 1e-30 else 1.0 - ss_res / ss_tot
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}
