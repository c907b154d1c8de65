"""Nonlinear spline approximation over polygonal ring partitions in 2-D.

Subpackages: geometry (rings, overlays, subdivisions), splines (piecewise
polynomials and Courant hats), smoothness (moduli and seminorms), approx
(greedy n-term engine), experiments (verdict harness), cli (front end).
"""

from .geometry import (
    Cell,
    ConvexPolygon,
    Domain,
    GeometryError,
    Point,
    Ring,
    RingPartition,
    StructuralParams,
    Trapezoid,
    Triangle,
    dyadic_ring,
    eccentricity,
    good_triangles,
    overlay,
    polygon_boolean,
    shape_certificate,
    subdivide_cell,
    validate_ring,
)
from .smoothness import (
    BesovParams,
    EstimatorConfig,
    ModulusCurve,
    besov_seminorm,
    bv_seminorm,
    k_functional_upper,
    kth_difference,
    modulus,
    modulus_exact_pc,
)
from .splines import (
    HatHierarchy,
    PiecewisePoly,
    Poly2,
    check_nikolski_markov,
    hat_spline,
    lp_norm,
    pc_from_partition,
    random_spline,
    smoothness_check,
)
from .approx import ApproxTrace, best_poly_fit, greedy_approx, rate_fit

__version__ = "0.1.0"
