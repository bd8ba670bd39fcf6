"""Gap bounds for small horoconvex hyperbolic domains via a sphere comparison.

A horoconvex domain of hyperbolic diameter D below a universal threshold can
be recentered into a small coordinate ball, where the hyperbolic eigenvalue
problem rereads as a weighted problem relative to a round sphere of radius R.
For the right R the weight's spherical Hessian satisfies the matrix
inequality Hess rho <= 2 K rho g, the ground state is log-concave with
respect to the sphere connection, and the gap inherits the sphere bound

    gap >= (32 / (3 (7 + sqrt 33))) pi^2 / D^2 + 4/3.

This module holds every closed form of that chain - the weight, its
spherical Hessian, the Hessian eigenvalues and their normalized versions,
the admissible coordinate radius, the optimal sphere radius, the boundary
convexity margin - plus the end-to-end verification pipeline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from . import concavity as _concavity
from .domains import (Domain2D, circumradius, dekster_min_diameter, diameter,
                      is_convex_wrt, is_horoconvex)
from .errors import GeometryError, NumericalError, UsageError
from .fields import ScalarField, _as_points
from .geometry import POINCARE, ConformalChart, SymMatrix2, mobius_recenter

R_STAR = math.sqrt(7.0 - math.sqrt(33.0)) / 2.0
GAP_COEFFICIENT = 32.0 / (3.0 * (7.0 + math.sqrt(33.0)))
GAP_CONSTANT = 4.0 / 3.0
D_MAX = 2.0 * math.asinh(1.0 / (2.0 * math.sqrt(11.0 / 3.0)))


def rho_hyper_to_sphere(x, R: float):
    """Weight turning the sphere-R Laplacian into the hyperbolic problem.

    rho(x) = (R^2 + |x|^2)^2 / (R^4 (1 - |x|^2)^2), the ratio of the
    hyperbolic conformal factor to the sphere's in the shared disk chart.
    """
    pts, single = _as_points(x)
    s = np.einsum("...i,...i->...", pts, pts)
    if np.any(s >= 1.0):
        raise GeometryError("rho_hyper_to_sphere requires |x| < 1")
    out = (R**2 + s) ** 2 / (R**4 * (1.0 - s) ** 2)
    return float(out[0]) if single else out


def rho_sphere_field(R: float) -> ScalarField:
    from .fields import X1, X2
    import sympy as sp

    s = X1**2 + X2**2
    R2 = sp.Float(R) ** 2
    return ScalarField.from_expression((R2 + s) ** 2 / (R2**2 * (1 - s) ** 2),
                                       name="rho_sphere")


def spherical_hessian_rho(x, R: float) -> SymMatrix2:
    """Closed-form Hessian of rho_hyper_to_sphere w.r.t. the sphere connection.

    With s = |x|^2 the components are
    4 (1+R^2) / (R^4 (1-s)^4) * [ 5 x1^2 - x2^2 + R^2 (1 + 5 x1^2 - x2^2) + s^2,
                                  6 (1+R^2) x1 x2  ;  symmetric ].
    """
    pts, _ = _as_points(x)
    x1, x2 = float(pts[0, 0]), float(pts[0, 1])
    s = x1 * x1 + x2 * x2
    if s >= 1.0:
        raise GeometryError("spherical_hessian_rho requires |x| < 1")
    pref = 4.0 * (1.0 + R**2) / (R**4 * (1.0 - s) ** 4)
    a11 = pref * (5 * x1**2 - x2**2 + R**2 * (1 + 5 * x1**2 - x2**2) + s**2)
    a22 = pref * (5 * x2**2 - x1**2 + R**2 * (1 + 5 * x2**2 - x1**2) + s**2)
    a12 = pref * 6.0 * (1.0 + R**2) * x1 * x2
    return SymMatrix2(a11, a12, a22)


def mu_eigenvalues(r: float, R: float):
    """Eigenvalues of the spherical Hessian of rho at radius r (any direction).

    mu1 is the tangential eigenvalue, mu2 the radial one; mu2 >= mu1.
    """
    if not 0.0 <= r < 1.0:
        raise UsageError("r must lie in [0, 1)")
    one_m = 1.0 - r * r
    mu1 = 4.0 * (1.0 + R**2) * (R**2 - r**2) / (R**4 * one_m**3)
    mu2 = 4.0 * (1.0 + R**2) * (r**2 * (5.0 + r**2) + R**2 * (1.0 + 5.0 * r**2)) \
        / (R**4 * one_m**4)
    return mu1, mu2


def normalized_mu(r: float, R: float):
    """mu / (K rho e^{2 phi}): the matrix inequality reads max(mu~) <= 2."""
    if not 0.0 <= r < 1.0:
        raise UsageError("r must lie in [0, 1)")
    one_m = 1.0 - r * r
    mu1t = (1.0 + R**2) * (R**2 - r**2) / (R**2 * one_m)
    mu2t = (1.0 + R**2) * (r**2 * (5.0 + r**2) + R**2 * (1.0 + 5.0 * r**2)) \
        / (R**2 * one_m**2)
    return mu1t, mu2t


def admissible_radius(R: float) -> float:
    """Largest coordinate radius where the weight satisfies Hess rho <= 2 K rho g.

    The binding constraint is the radial eigenvalue: r_max solves
    mu2~(r) = 2.  The quadratic-formula root is rationalized so the
    subtraction of nearly equal terms never happens:

        r_max^2 = 2 R^2 (1 - R^2) /
                  (5 + 14 R^2 + 5 R^4 + (1 + R^2) sqrt(25 + 94 R^2 + 25 R^4)).

    The tangential eigenvalue is checked by sampling; it stays below 2 on
    the whole interval for every R < 1.
    """
    if not 0.0 < R < 1.0:
        raise UsageError("admissible_radius requires 0 < R < 1")
    S = math.sqrt(25.0 + 94.0 * R**2 + 25.0 * R**4)
    r2 = 2.0 * R**2 * (1.0 - R**2) / (5.0 + 14.0 * R**2 + 5.0 * R**4 + (1.0 + R**2) * S)
    r_max = math.sqrt(r2)
    rs = np.linspace(0.0, r_max, 200)
    mu1t = (1.0 + R**2) * (R**2 - rs**2) / (R**2 * (1.0 - rs**2))
    if np.any(mu1t > 2.0 + 1e-12):
        raise NumericalError("tangential eigenvalue exceeded 2 inside the admissible radius")
    return r_max


def optimal_R(confirm: bool = True) -> float:
    """The sphere radius maximizing the admissible radius: sqrt(7 - sqrt 33)/2.

    With ``confirm`` a golden-section maximization of admissible_radius over
    (0.01, 0.99) cross-checks the closed-form argmax to 1e-6.
    """
    if confirm:
        inv = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = 0.01, 0.99
        c = b - inv * (b - a)
        d = a + inv * (b - a)
        fc, fd = admissible_radius(c), admissible_radius(d)
        for _ in range(80):
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - inv * (b - a)
                fc = admissible_radius(c)
            else:
                a, c, fc = c, d, fd
                d = a + inv * (b - a)
                fd = admissible_radius(d)
            if b - a < 1e-10:
                break
        argmax = 0.5 * (a + b)
        if abs(argmax - R_STAR) > 1e-6:
            raise NumericalError(f"numerical argmax {argmax:.8f} disagrees with closed form")
    return R_STAR


@dataclass(frozen=True)
class HoroconvexConfig:
    """All thresholds of the small-horoconvex-domain gap theorem."""

    R: float = R_STAR
    r_max: float = dc_field(default=None)  # type: ignore[assignment]
    C_max: float = dc_field(default=None)  # type: ignore[assignment]
    D_max: float = dc_field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.r_max is None:
            object.__setattr__(self, "r_max", admissible_radius(self.R))
        if self.C_max is None:
            object.__setattr__(self, "C_max", 2.0 * math.atanh(self.r_max))
        if self.D_max is None:
            object.__setattr__(self, "D_max", dekster_min_diameter(self.C_max))

    @property
    def rho_max(self) -> float:
        """sup of the sphere-relative weight over the admissible ball."""
        return rho_hyper_to_sphere((self.r_max, 0.0), self.R)

    def to_json(self) -> dict:
        return {"R": self.R, "r_max": self.r_max, "C_max": self.C_max,
                "D_max": self.D_max, "rho_max": self.rho_max}


def gap_lower_bound(D: float) -> float:
    """The headline bound (32/(3(7+sqrt 33))) pi^2/D^2 + 4/3 for D below D_max."""
    if not 0.0 < D < D_MAX:
        raise UsageError(
            f"gap_lower_bound needs 0 < D < D_max = {D_MAX:.12g}; got D = {D}")
    return GAP_COEFFICIENT * math.pi**2 / D**2 + GAP_CONSTANT


def step2_margin(r: float, R: float) -> float:
    """Lower bound for the sphere-metric boundary curvature at coordinate radius r.

    A horoconvex boundary point at radius r sits on a tangent enclosing
    horocycle; combining the horocycle's flat curvature with the normal
    derivative of the sphere's log-factor leaves at least
    ``e^{-phi(r)} (1 - 2 r) / (1/2 + r)^2`` of sphere-metric curvature, with
    ``phi(r) = log(2 R^2 / (R^2 + r^2))``.  Positive whenever r < 1/2, which
    the admissible radius guarantees with room to spare.
    """
    if R <= 0.5:
        raise UsageError("step2_margin requires R > 1/2")
    if r < 0.0 or r >= 1.0:
        raise UsageError("r must lie in [0, 1)")
    value = (R**2 + r**2) / (2.0 * R**2) * (1.0 - 2.0 * r) / (0.5 + r) ** 2
    if r >= 0.5:
        warnings.warn("step2_margin is nonpositive for r >= 1/2", stacklevel=2)
    return value


def thresholds(R: float = R_STAR) -> dict:
    """Every constant a verification run needs, in one dictionary."""
    cfg = HoroconvexConfig(R=R)
    return {
        "R": cfg.R,
        "r_max": cfg.r_max,
        "C_max": cfg.C_max,
        "D_max": cfg.D_max,
        "rho_max": cfg.rho_max,
        "inv_rho_max": 1.0 / cfg.rho_max,
        "gap_coefficient": GAP_COEFFICIENT,
        "gap_constant": GAP_CONSTANT,
        "curvature_K": 1.0 / cfg.R**2,
        "step2_margin_at_r_max": step2_margin(cfg.r_max, cfg.R),
    }


# ---------------------------------------------------------------------------
# the end-to-end pipeline
# ---------------------------------------------------------------------------
@dataclass
class StageResult:
    index: int
    name: str
    passed: bool
    details: dict

    def to_json(self) -> dict:
        return {"index": self.index, "name": self.name, "passed": self.passed,
                "details": self.details}


@dataclass
class PipelineReport:
    stages: List[StageResult]
    passed: bool
    config: HoroconvexConfig
    gap: Optional[float] = None
    bound: Optional[float] = None
    diameter_hyp: Optional[float] = None

    def failed_stage(self) -> Optional[StageResult]:
        for st in self.stages:
            if not st.passed:
                return st
        return None

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "stages": [st.to_json() for st in self.stages],
            "gap": self.gap,
            "bound": self.bound,
            "diameter_hyperbolic": self.diameter_hyp,
            "config": self.config.to_json(),
        }


def verify_pipeline(domain: Domain2D, h_target: Optional[float] = None,
                    margin: Optional[float] = None,
                    config: Optional[HoroconvexConfig] = None) -> PipelineReport:
    """Run the whole gap-theorem verification on one hyperbolic domain.

    Stages: (0) horoconvexity and diameter threshold, (1) Mobius recentering,
    (2) circumradius and admissible-ball containment, (3) spherical convexity,
    (4) weighted eigensolve with Richardson extrapolation, (5) log-concavity
    w.r.t. the sphere connection, (6) the gap bound itself.  Hypothesis and
    bound failures are recorded in the report (verification outcomes), not
    raised; genuinely numerical breakdowns raise.
    """
    from .eigensolver import WeightedProblem, fundamental_gap

    if domain.chart.model != POINCARE:
        raise UsageError("the pipeline runs on poincare_disk domains")
    cfg = config or HoroconvexConfig()
    stages: List[StageResult] = []

    def fail(report_gap=None, bound=None, D=None):
        return PipelineReport(stages=stages, passed=False, config=cfg,
                              gap=report_gap, bound=bound, diameter_hyp=D)

    # stage 0: hypotheses
    cert_horo = is_horoconvex(domain)
    D_hyp = diameter(domain)
    ok0 = bool(cert_horo) and D_hyp < cfg.D_max
    stages.append(StageResult(0, "threshold", ok0, {
        "horoconvex": bool(cert_horo),
        "min_hyperbolic_curvature": cert_horo.min_geodesic_curvature,
        "diameter": D_hyp,
        "D_max": cfg.D_max,
    }))
    if not ok0:
        return fail(D=D_hyp)

    # stage 1: recenter the hyperbolic circumcenter at the origin
    recentered = mobius_recenter(domain)
    D_after = diameter(recentered)
    if abs(D_after - D_hyp) > 1e-10 * max(1.0, D_hyp):
        raise NumericalError(
            f"recentering changed the diameter: {D_hyp} -> {D_after}")
    stages.append(StageResult(1, "recenter", True, {
        "diameter_before": D_hyp, "diameter_after": D_after,
    }))

    # stage 2: circumradius threshold and coordinate-ball containment
    C, center = circumradius(recentered)
    r_euclid = float(np.max(np.linalg.norm(recentered.vertices, axis=1)))
    ok2 = (C <= cfg.C_max + 1e-12) and (r_euclid <= cfg.r_max + 1e-9) \
        and (r_euclid <= math.tanh(C / 2.0) + 1e-9)
    stages.append(StageResult(2, "circumradius", bool(ok2), {
        "circumradius": float(C),
        "C_max": cfg.C_max,
        "max_coordinate_radius": r_euclid,
        "r_max": cfg.r_max,
    }))
    if not ok2:
        return fail(D=D_hyp)

    # stage 3: convexity with respect to the comparison sphere
    sphere = ConformalChart.stereographic_sphere(cfg.R)
    cert_sph = is_convex_wrt(recentered, sphere)
    stages.append(StageResult(3, "spherical_convexity", bool(cert_sph), {
        "min_spherical_curvature": cert_sph.min_geodesic_curvature,
        "predicted_margin": step2_margin(r_euclid, cfg.R),
    }))
    if not cert_sph:
        return fail(D=D_hyp)

    # stage 4: eigensolve of the hyperbolic problem in the flat chart
    problem = WeightedProblem.from_chart(recentered, name="horoconvex")
    if h_target is None:
        h_target = recentered.euclidean_extent() / 14.0
    gap_res = fundamental_gap(problem, h_target)
    stages.append(StageResult(4, "eigensolve", True, {
        "lambda1": gap_res.lambda1, "lambda2": gap_res.lambda2,
        "gap_extrapolated": gap_res.gap, "gap_fine": gap_res.gap_fine,
        "h": h_target, "n_vertices_fine": gap_res.fine.mesh.n_vertices,
    }))

    # stage 5: ground-state log-concavity w.r.t. the sphere connection
    field = _concavity.log_hessian_field(gap_res.fine, connection=sphere,
                                         margin=margin)
    report = _concavity.concavity_report(field)
    stages.append(StageResult(5, "log_concavity", report.verdict == "concave",
                              report.to_json()))
    if report.verdict != "concave":
        return fail(report_gap=gap_res.gap, D=D_hyp)

    # stage 6: the bound
    bound = gap_lower_bound(D_hyp)
    ok6 = gap_res.gap >= bound
    stages.append(StageResult(6, "gap_bound", bool(ok6), {
        "gap": gap_res.gap, "bound": bound,
        "ratio": gap_res.gap / bound,
    }))
    return PipelineReport(stages=stages, passed=bool(ok6), config=cfg,
                          gap=gap_res.gap, bound=bound, diameter_hyp=D_hyp)
