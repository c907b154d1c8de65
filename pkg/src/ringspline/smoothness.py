"""Moduli of smoothness, Besov and BV seminorms, K-functional upper bounds.

The modulus uses k-th order forward differences with the zero convention: the
difference is 0 unless the whole segment [x, x+kh] lies in the domain.  Two
estimators are provided: a quasi-Monte-Carlo one for arbitrary evaluable
functions, and an exact one for piecewise constants based on overlaying the
partition with its own translate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely import affinity

from .geometry import EPS, SLIVER_AREA, Domain, GeometryError
from .splines import PiecewisePoly, _fmt

__all__ = [
    "BesovParams",
    "EstimatorConfig",
    "ModulusCurve",
    "kth_difference",
    "modulus",
    "modulus_exact_pc",
    "modulus_curve_exact_pc",
    "besov_seminorm",
    "besov_from_curve",
    "bv_seminorm",
    "lp_distance",
    "pc_lp_distance",
    "k_functional_upper",
]


@dataclass(frozen=True)
class BesovParams:
    """Smoothness scale (k, s, p); tau is derived from 1/tau = s/2 + 1/p."""

    k: int
    s: float
    p: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.s > 0:
            raise ValueError("s must be positive")
        if not 0 < self.p < math.inf:
            raise ValueError("p must lie in (0, inf)")

    @property
    def tau(self) -> float:
        return 1.0 / (self.s / 2.0 + 1.0 / self.p)

    @property
    def admissible(self) -> bool:
        """Hypothesis of the smooth Bernstein estimate: s/2 < k - 1 + 1/p."""
        return self.s / 2.0 < self.k - 1 + 1.0 / self.p


@dataclass(frozen=True)
class EstimatorConfig:
    directions: int = 32
    mc_samples: int = 2**17
    seed: int = 0
    t_min: float | None = None
    t_max: float | None = None
    points_per_decade: int = 8
    t_grid: tuple | None = None
    extrapolation: str = "powerlaw"  # or "none"

    def __post_init__(self):
        if self.directions < 4:
            raise ValueError("need at least 4 directions")
        if self.mc_samples < 1024:
            raise ValueError("need at least 1024 sample points")
        if self.t_min is not None and self.t_max is not None and not self.t_min < self.t_max:
            raise ValueError("t_min must be < t_max")
        if self.extrapolation not in ("powerlaw", "none"):
            raise ValueError("extrapolation must be 'powerlaw' or 'none'")


@dataclass(frozen=True, eq=False)
class ModulusCurve:
    """Sampled t -> omega_k(f, t)_tau^tau, nondecreasing by construction."""

    t_grid: np.ndarray
    omega_tau_pow: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        w = np.asarray(self.omega_tau_pow, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("t grid must be strictly increasing")
        if np.any(w < 0) or np.any(np.diff(w) < -1e-15):
            raise ValueError("modulus curve must be nonnegative and nondecreasing")

    def to_csv(self) -> str:
        lines = ["t,omega_tau_pow,stderr"]
        for t, w, se in zip(self.t_grid, self.omega_tau_pow, self.stderr):
            lines.append(f"{_fmt(t)},{_fmt(w)},{_fmt(se)}")
        return "\n".join(lines) + "\n"


def _as_callable(f):
    if isinstance(f, PiecewisePoly):
        return lambda pts: f.eval_many(pts)
    if hasattr(f, "eval_many"):
        return lambda pts: f.eval_many(pts)
    return lambda pts: np.asarray(f(pts), dtype=float)


def _difference_values(fn, h, k, X, omega: Domain) -> np.ndarray:
    """Vectorized Delta_h^k f over rows of X with the zero convention."""
    h = np.asarray(h, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros(len(X))
    mask = omega.segment_inside(X, X + k * h)
    if not mask.any():
        return out
    Xm = X[mask]
    acc = np.zeros(len(Xm))
    for nu in range(k + 1):
        coef = float((-1) ** (k + nu) * math.comb(k, nu))
        acc = acc + coef * fn(Xm + nu * h)
    out[mask] = acc
    return out


def kth_difference(f, h, k: int, x, omega: Domain) -> float:
    """Delta_h^k f(x), or exactly 0 when [x, x+kh] leaves the domain."""
    fn = _as_callable(f)
    pt = np.asarray([x.x, x.y] if hasattr(x, "x") else x, dtype=float)
    return float(_difference_values(fn, h, k, pt[None, :], omega)[0])


def _default_grid(cfg: EstimatorConfig, omega: Domain, k: int) -> np.ndarray:
    if cfg.t_grid is not None:
        t = np.asarray(sorted(cfg.t_grid), dtype=float)
        if len(t) < 1 or t[0] <= 0:
            raise ValueError("explicit t grid must be positive")
        return t
    diam = omega.diameter
    if not math.isfinite(diam) and (cfg.t_min is None or cfg.t_max is None):
        raise ValueError("unbounded domain needs explicit t_min/t_max or t_grid")
    t_max = cfg.t_max if cfg.t_max is not None else diam / k
    t_min = cfg.t_min if cfg.t_min is not None else 2.0**-12 * diam
    npts = max(2, int(math.ceil(cfg.points_per_decade * math.log10(t_max / t_min))) + 1)
    return np.geomspace(t_min, t_max, npts)


def _qmc_points(cfg: EstimatorConfig, bounds):
    from scipy.stats import qmc

    n = 1 << max(10, int(math.ceil(math.log2(cfg.mc_samples))))
    sob = qmc.Sobol(d=2, scramble=True, seed=cfg.seed)
    u = sob.random(n)
    x0, y0, x1, y1 = bounds
    pts = np.empty_like(u)
    pts[:, 0] = x0 + u[:, 0] * (x1 - x0)
    pts[:, 1] = y0 + u[:, 1] * (y1 - y0)
    return pts, (x1 - x0) * (y1 - y0)


def _estimate_table(sampler, tg, directions):
    """E[d, m] estimates and standard errors for every direction/magnitude."""
    D, M = directions, len(tg)
    E = np.zeros((D, M))
    SE = np.zeros((D, M))
    thetas = 2.0 * math.pi * np.arange(D) / D
    for di, th in enumerate(thetas):
        dvec = np.array([math.cos(th), math.sin(th)])
        for mi, mag in enumerate(tg):
            E[di, mi], SE[di, mi] = sampler(mag * dvec)
    return E, SE


def _running_max_curve(tg, E, SE, meta) -> ModulusCurve:
    col_max = E.max(axis=0)
    col_arg = E.argmax(axis=0)
    w = np.empty(len(tg))
    se = np.empty(len(tg))
    cur, cur_se = -math.inf, 0.0
    for i in range(len(tg)):
        if col_max[i] > cur:
            cur = col_max[i]
            cur_se = SE[col_arg[i], i]
        w[i] = max(cur, 0.0)
        se[i] = cur_se
    return ModulusCurve(np.asarray(tg, float), w, se, meta)


def modulus(f, omega: Domain, params: BesovParams, cfg: EstimatorConfig) -> ModulusCurve:
    """Monte-Carlo modulus estimate: sup over sampled shifts of int |Delta|^tau.

    Shift candidates combine cfg.directions equispaced angles with magnitudes
    from the t grid itself; the value at t is the running maximum over all
    candidates with magnitude <= t, hence a guaranteed lower bound of the sup.
    """
    fn = _as_callable(f)
    tau = params.tau
    tg = _default_grid(cfg, omega, params.k)
    pts, measure = _qmc_points(cfg, omega.bounds)
    n = len(pts)

    def sampler(h):
        vals = np.abs(_difference_values(fn, h, params.k, pts, omega)) ** tau
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1))
        return measure * mean, measure * sd / math.sqrt(n)

    E, SE = _estimate_table(sampler, tg, cfg.directions)
    meta = {
        "mode": "mc",
        "k": params.k,
        "tau": tau,
        "directions": cfg.directions,
        "mc_samples": n,
        "seed": cfg.seed,
    }
    return _running_max_curve(tg, E, SE, meta)


# ---------------------------------------------------------------------------
# Exact modulus for piecewise constants


def _rect_decomposition(s: PiecewisePoly):
    rects = []
    vals = []
    for ring, poly in zip(s.partition.rings, s.pieces):
        for r in ring.rectangles:
            rects.append(r)
            vals.append(poly.coeffs[0])
    return np.asarray(rects, dtype=float), np.asarray(vals, dtype=float)


def _pair_sum(rA, vA, rB, vB, shift, window, power, chunk=512):
    """sum_{i,j} |vA_i - vB_j|^power * area(A_i cut (B_j - shift) cut W)."""
    sx, sy = float(shift[0]), float(shift[1])
    bx0 = rB[:, 0] - sx
    by0 = rB[:, 1] - sy
    bx1 = rB[:, 2] - sx
    by1 = rB[:, 3] - sy
    if window is not None:
        wx0, wy0, wx1, wy1 = window
        if wx1 - wx0 <= 0 or wy1 - wy0 <= 0:
            return 0.0
        bx0 = np.maximum(bx0, wx0)
        by0 = np.maximum(by0, wy0)
        bx1 = np.minimum(bx1, wx1)
        by1 = np.minimum(by1, wy1)
    total = 0.0
    for lo in range(0, len(rA), chunk):
        a = rA[lo:lo + chunk]
        va = vA[lo:lo + chunk]
        ox = np.minimum(a[:, None, 2], bx1[None, :]) - np.maximum(a[:, None, 0], bx0[None, :])
        oy = np.minimum(a[:, None, 3], by1[None, :]) - np.maximum(a[:, None, 1], by0[None, :])
        area = np.clip(ox, 0.0, None) * np.clip(oy, 0.0, None)
        dv = np.abs(va[:, None] - vB[None, :])
        total += float(np.sum(area * dv**power))
    return total


def _window_rect(omega: Domain, h):
    x0, y0, x1, y1 = omega.rect
    wx0, wy0 = max(x0, x0 - h[0]), max(y0, y0 - h[1])
    wx1, wy1 = min(x1, x1 - h[0]), min(y1, y1 - h[1])
    return (wx0, wy0, wx1, wy1)


def modulus_exact_pc(s: PiecewisePoly, h, tau: float) -> float:
    """Exact int_Omega |Delta_h s|^tau for a piecewise constant spline.

    Overlays the partition with its translate by -h, clipped to the set of x
    with [x, x+h] inside the domain.  Rectilinear partitions use interval
    arithmetic; anything else goes through polygon booleans.
    """
    if s.k != 1:
        raise ValueError("exact modulus requires a piecewise constant spline")
    h = np.asarray(h, dtype=float)
    if np.linalg.norm(h) == 0.0:
        return 0.0
    omega = s.partition.omega
    if s.partition.is_rectilinear and omega.kind == "rect":
        rects, vals = _rect_decomposition(s)
        return _pair_sum(rects, vals, rects, vals, h, _window_rect(omega, h), tau)

    shapes = [r.shape for r in s.partition.rings]
    vals = s.values()
    shifted = [affinity.translate(g, -h[0], -h[1]) for g in shapes]
    total = 0.0
    if omega.is_bounded:
        W = omega.shape.intersection(affinity.translate(omega.shape, -h[0], -h[1]))
        if W.area <= SLIVER_AREA:
            return 0.0
        tree = shapely.STRtree(shifted)
        for i, g in enumerate(shapes):
            gi = g.intersection(W)
            if gi.area <= SLIVER_AREA:
                continue
            for j in tree.query(gi):
                j = int(j)
                if vals[i] == vals[j]:
                    continue
                a = gi.intersection(shifted[j]).area
                if a > 0:
                    total += abs(vals[i] - vals[j]) ** tau * a
        return total
    # plane case: the spline is 0 outside its support
    support = s.partition.support_shape
    support_shifted = affinity.translate(support, -h[0], -h[1])
    tree = shapely.STRtree(shifted)
    for i, g in enumerate(shapes):
        for j in tree.query(g):
            j = int(j)
            if vals[i] == vals[j]:
                continue
            a = g.intersection(shifted[j]).area
            if a > 0:
                total += abs(vals[i] - vals[j]) ** tau * a
        out = g.difference(support_shifted).area
        if out > 0 and vals[i] != 0.0:
            total += abs(vals[i]) ** tau * out
    for j, g in enumerate(shifted):
        out = g.difference(support).area
        if out > 0 and vals[j] != 0.0:
            total += abs(vals[j]) ** tau * out
    return total


def modulus_curve_exact_pc(s: PiecewisePoly, params: BesovParams,
                           cfg: EstimatorConfig) -> ModulusCurve:
    """Exact-mode modulus curve (k=1) over the direction/magnitude grid."""
    if params.k != 1:
        raise ValueError("exact mode is defined for k=1 (piecewise constants)")
    tau = params.tau
    omega = s.partition.omega
    tg = _default_grid(cfg, omega, 1)

    def sampler(h):
        return modulus_exact_pc(s, h, tau), 0.0

    E, SE = _estimate_table(sampler, tg, cfg.directions)
    meta = {"mode": "exact", "k": 1, "tau": tau, "directions": cfg.directions,
            "mc_samples": 0, "seed": cfg.seed}
    return _running_max_curve(tg, E, SE, meta)


# ---------------------------------------------------------------------------
# Besov seminorm


def besov_from_curve(curve: ModulusCurve, params: BesovParams,
                     cfg: EstimatorConfig) -> dict:
    """Quadrature of the Besov integral from a sampled modulus curve.

    Midsection by trapezoid rule in log t, analytic constant-omega tail above
    t_max, and a power-law extrapolation below t_min (flagged divergent when
    the fitted exponent of omega^tau(t)/t is <= s*tau - 1).
    """
    tau = params.tau
    st = params.s * tau
    t = curve.t_grid
    w = curve.omega_tau_pow
    se = curve.stderr
    integrand = t ** (-st) * w
    logt = np.log(t)
    i_mid = float(np.trapezoid(integrand, logt)) if len(t) > 1 else 0.0
    se_mid = float(np.trapezoid(t ** (-st) * se, logt)) if len(t) > 1 else 0.0
    tail = float(w[-1] * t[-1] ** (-st) / st)
    se_tail = float(se[-1] * t[-1] ** (-st) / st)

    divergent = False
    i_small = 0.0
    if cfg.extrapolation == "powerlaw" and len(t) >= 2 and w[0] > 0 and w[1] > 0:
        beta = float(np.log(w[1] / w[0]) / np.log(t[1] / t[0]))
        # divergent when the exponent of omega^tau(t)/t is <= s*tau - 1
        if beta - 1.0 <= st - 1.0 + 1e-12:
            divergent = True
        else:
            i_small = float(w[0] * t[0] ** (-st) / (beta - st))

    if divergent:
        return {"value": math.inf, "tail_fraction": 0.0, "stderr": math.inf,
                "divergent": True, "power_integral": math.inf, "curve": curve}
    total = i_small + i_mid + tail
    value = total ** (1.0 / tau) if total > 0 else 0.0
    dtotal = se_mid + se_tail
    stderr = (value ** (1.0 - tau) * dtotal / tau) if total > 0 else 0.0
    return {
        "value": value,
        "tail_fraction": tail / total if total > 0 else 0.0,
        "stderr": stderr,
        "divergent": False,
        "power_integral": total,
        "curve": curve,
    }


def besov_seminorm(f, params: BesovParams, cfg: EstimatorConfig,
                   omega: Domain | None = None, mode: str = "mc") -> dict:
    """Besov seminorm |f|_{B_tau^{s,k}} estimate; see besov_from_curve."""
    if mode == "exact":
        if not isinstance(f, PiecewisePoly):
            raise ValueError("exact mode needs a piecewise constant spline")
        curve = modulus_curve_exact_pc(f, params, cfg)
    else:
        if omega is None:
            if isinstance(f, PiecewisePoly):
                omega = f.partition.omega
            else:
                raise ValueError("omega required for a bare callable")
        curve = modulus(f, omega, params, cfg)
    return besov_from_curve(curve, params, cfg)


# ---------------------------------------------------------------------------
# BV seminorm


def _rect_bv(rects, vals, plane, chunk=512):
    x0, y0, x1, y1 = rects[:, 0], rects[:, 1], rects[:, 2], rects[:, 3]
    m = len(rects)
    total = 0.0
    exposed_r = y1 - y0 if plane else None
    exposed_l = (y1 - y0).copy() if plane else None
    exposed_t = x1 - x0 if plane else None
    exposed_b = (x1 - x0).copy() if plane else None
    if plane:
        exposed_r = exposed_r.copy()
        exposed_t = exposed_t.copy()
    for lo in range(0, m, chunk):
        sl = slice(lo, lo + chunk)
        dv = np.abs(vals[sl, None] - vals[None, :])
        # vertical contact: right side of i against left side of j
        touch = np.abs(x1[sl, None] - x0[None, :]) < EPS
        ov = np.clip(np.minimum(y1[sl, None], y1[None, :])
                     - np.maximum(y0[sl, None], y0[None, :]), 0.0, None)
        ov = np.where(touch, ov, 0.0)
        total += float(np.sum(dv * ov))
        if plane:
            exposed_r[sl] -= ov.sum(axis=1)
            exposed_l -= ov.sum(axis=0)
        # horizontal contact: top of i against bottom of j
        touch = np.abs(y1[sl, None] - y0[None, :]) < EPS
        ov = np.clip(np.minimum(x1[sl, None], x1[None, :])
                     - np.maximum(x0[sl, None], x0[None, :]), 0.0, None)
        ov = np.where(touch, ov, 0.0)
        total += float(np.sum(dv * ov))
        if plane:
            exposed_t[sl] -= ov.sum(axis=1)
            exposed_b -= ov.sum(axis=0)
    if plane:
        av = np.abs(vals)
        for ex in (exposed_r, exposed_l, exposed_t, exposed_b):
            total += float(np.sum(av * np.clip(ex, 0.0, None)))
    return total


def _linear_length(geom) -> float:
    if geom.is_empty:
        return 0.0
    if geom.geom_type in ("LineString", "MultiLineString"):
        return geom.length
    if geom.geom_type == "GeometryCollection":
        return sum(_linear_length(g) for g in geom.geoms)
    return 0.0


def bv_seminorm(s: PiecewisePoly) -> float:
    """Total jump mass: sum over jump edges of |value jump| x edge length.

    Plane-supported splines count their support boundary against the exterior
    value 0; bounded domains count interior edges only.
    """
    if s.k != 1:
        raise ValueError("BV seminorm is defined here for piecewise constants")
    plane = not s.partition.omega.is_bounded
    if s.partition.is_rectilinear or (plane and all(r.is_rectilinear for r in s.partition.rings)):
        rects, vals = _rect_decomposition(s)
        return _rect_bv(rects, vals, plane)
    shapes = [r.shape for r in s.partition.rings]
    vals = s.values()
    tree = shapely.STRtree(shapes)
    total = 0.0
    for i, g in enumerate(shapes):
        for j in tree.query(g):
            j = int(j)
            if j <= i or vals[i] == vals[j]:
                continue
            L = _linear_length(g.boundary.intersection(shapes[j].boundary))
            total += abs(vals[i] - vals[j]) * L
    if plane:
        ub = s.partition.support_shape.boundary
        for i, g in enumerate(shapes):
            if vals[i] != 0.0:
                total += abs(vals[i]) * _linear_length(g.boundary.intersection(ub))
    return total


# ---------------------------------------------------------------------------
# Norm distances and the K-functional upper bound


def pc_lp_distance(s1: PiecewisePoly, s2: PiecewisePoly, p: float) -> float:
    """Exact ||s1 - s2||_p for two piecewise constants on the same domain."""
    if s1.k != 1 or s2.k != 1:
        raise ValueError("exact distance requires piecewise constants")
    if (s1.partition.is_rectilinear and s2.partition.is_rectilinear
            and s1.partition.omega.kind == "rect"):
        rA, vA = _rect_decomposition(s1)
        rB, vB = _rect_decomposition(s2)
        return _pair_sum(rA, vA, rB, vB, (0.0, 0.0), None, p) ** (1.0 / p)
    shapes2 = [r.shape for r in s2.partition.rings]
    v1 = s1.values()
    v2 = s2.values()
    tree = shapely.STRtree(shapes2)
    total = 0.0
    for i, r1 in enumerate(s1.partition.rings):
        for j in tree.query(r1.shape):
            j = int(j)
            a = r1.shape.intersection(shapes2[j]).area
            if a > 0:
                total += abs(v1[i] - v2[j]) ** p * a
    return total ** (1.0 / p)


def lp_distance(f, g, omega: Domain, p: float, cfg: EstimatorConfig) -> float:
    """QMC estimate of ||f - g||_p over a bounded domain (g may be None)."""
    fn = _as_callable(f)
    gn = _as_callable(g) if g is not None else None
    pts, measure = _qmc_points(cfg, omega.bounds)
    inside = omega.contains_xy(pts[:, 0], pts[:, 1])
    diff = fn(pts)
    if gn is not None:
        diff = diff - gn(pts)
    vals = np.where(inside, np.abs(diff) ** p, 0.0)
    return float(measure * vals.mean()) ** (1.0 / p)


def k_functional_upper(f, t: float, params: BesovParams, candidates,
                       omega: Domain | None = None,
                       cfg: EstimatorConfig | None = None,
                       seminorm: str = "besov",
                       seminorm_values=None,
                       p: float | None = None) -> float:
    """Upper bound of K(f, t): min over candidate splines g (and g = 0) of
    ||f - g||_p + t * |g|.

    seminorm selects |g|: 'besov' (exact mode for piecewise constants) or
    'bv'.  seminorm_values may supply precomputed |g| values.
    """
    cfg = cfg or EstimatorConfig()
    p = p if p is not None else params.p
    if omega is None:
        if isinstance(f, PiecewisePoly):
            omega = f.partition.omega
        elif candidates:
            omega = candidates[0].partition.omega
        else:
            raise ValueError("omega required")

    def distance(g):
        if isinstance(f, PiecewisePoly) and f.k == 1 and (g is None or g.k == 1):
            if g is None:
                from .splines import lp_norm

                return lp_norm(f, p, mode="exact")
            return pc_lp_distance(f, g, p)
        return lp_distance(f, g, omega, p, cfg)

    best = distance(None)  # g = 0 gives ||f||_p
    for idx, g in enumerate(candidates):
        if seminorm_values is not None:
            sem = seminorm_values[idx]
        elif seminorm == "bv":
            sem = bv_seminorm(g)
        else:
            sem = besov_seminorm(g, params, cfg, mode="exact")["value"]
        if not math.isfinite(sem):
            continue
        best = min(best, distance(g) + t * sem)
    return best
