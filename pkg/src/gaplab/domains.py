"""Polyline domains on conformal charts and their convexity certificates.

A domain is a simple closed polyline in chart coordinates, oriented
counterclockwise, optionally tagged with an analytic boundary description
(circles/ellipses) that supplies exact flat curvature instead of the
three-point discrete estimator.  All convexity notions are curvature-based:
geodesic curvature of the boundary with respect to a chart metric, computed
from the flat curvature by the conformal boundary-curvature transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import GeometryError, NumericalError, UsageError
from .geometry import (
    EUCLIDEAN,
    POINCARE,
    SPHERE,
    ConformalChart,
    circumcenter3,
    distance,
    geodesic_point,
)

CORNER_TURNING_ANGLE = 0.30  # rad; discrete turning angle above this flags a corner


# ---------------------------------------------------------------------------
# analytic boundary descriptors
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class AnalyticBoundary:
    """Closed-form boundary: exact flat curvature at each polyline vertex."""

    kind: str  # "circle" | "ellipse"
    params: dict

    def flat_curvature(self, verts: np.ndarray) -> np.ndarray:
        if self.kind == "circle":
            return np.full(len(verts), 1.0 / self.params["radius"])
        if self.kind == "ellipse":
            a, b = self.params["a"], self.params["b"]
            cx, cy = self.params.get("center", (0.0, 0.0))
            # parameter recovered from the vertex position
            ct = (verts[:, 0] - cx) / a
            st = (verts[:, 1] - cy) / b
            return a * b / (a**2 * st**2 + b**2 * ct**2) ** 1.5
        raise UsageError(f"unknown analytic boundary kind {self.kind!r}")

    def to_json(self) -> dict:
        return {"kind": self.kind, **{k: (list(v) if isinstance(v, tuple) else v)
                                      for k, v in self.params.items()}}


# ---------------------------------------------------------------------------
# the domain type
# ---------------------------------------------------------------------------
@dataclass
class Domain2D:
    """Simple closed CCW polyline in chart coordinates."""

    chart: ConformalChart
    vertices: np.ndarray
    analytic: Optional[AnalyticBoundary] = None
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("domain needs at least 3 vertices of shape (M, 2)")
        if np.linalg.norm(v[0] - v[-1]) < 1e-15:
            v = v[:-1]
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        self.chart.check_points(v)
        _check_simple(v)
        self.vertices = v

    def with_vertices(self, verts: np.ndarray) -> "Domain2D":
        return Domain2D(chart=self.chart, vertices=np.asarray(verts, dtype=float),
                        analytic=None, name=self.name)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def polygon_area(self) -> float:
        return _signed_area(self.vertices)

    def euclidean_extent(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.max(hi - lo))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Ray-crossing point-in-polygon test, vectorized over points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        x, y = pts[:, 0][:, None], pts[:, 1][:, None]
        y1, y2 = v[None, :, 1], w[None, :, 1]
        x1, x2 = v[None, :, 0], w[None, :, 0]
        crosses = (y1 <= y) != (y2 <= y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        hits = crosses & (x < xint)
        return np.sum(hits, axis=1) % 2 == 1

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict:
        out = {
            "schema": 1,
            "chart": self.chart.to_json(),
            "vertices": [[float(a), float(b)] for a, b in self.vertices],
        }
        if self.analytic is not None:
            out["analytic"] = self.analytic.to_json()
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Domain2D":
        if not isinstance(data, dict) or "chart" not in data:
            raise UsageError("domain JSON must contain a 'chart' object")
        if data.get("schema", 1) != 1:
            raise UsageError(f"unsupported domain schema {data.get('schema')!r}")
        chart = ConformalChart.from_json(data["chart"])
        if "shape" in data:
            return _domain_from_shape(chart, data["shape"], name=data.get("name", ""))
        if "vertices" not in data:
            raise UsageError("domain JSON needs 'vertices' or a 'shape' descriptor")
        analytic = None
        if "analytic" in data:
            a = dict(data["analytic"])
            kind = a.pop("kind")
            analytic = AnalyticBoundary(kind=kind, params=a)
        return cls(chart=chart, vertices=np.asarray(data["vertices"], dtype=float),
                   analytic=analytic, name=data.get("name", ""))

    @classmethod
    def load(cls, path: str) -> "Domain2D":
        import json
        import os

        if not os.path.exists(path):
            raise UsageError(f"domain file not found: {path}")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"domain file {path} is not valid JSON: {exc}") from exc
        return cls.from_json(data)


def _signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def _check_simple(v: np.ndarray) -> None:
    """Reject self-intersecting polylines (O(M^2) segment crossing test)."""
    m = len(v)
    if m > 4096:
        return  # guard the quadratic test; construction paths keep M modest
    a = v
    b = np.roll(v, -1, axis=0)
    d = b - a
    for i in range(m):
        js = np.arange(i + 2, m if i > 0 else m - 1)
        if len(js) == 0:
            continue
        r = d[i]
        s = d[js]
        qp = a[js] - a[i]
        denom = r[0] * s[:, 1] - r[1] * s[:, 0]
        num_t = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
        num_u = qp[:, 0] * r[1] - qp[:, 1] * r[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num_t / denom
            u = num_u / denom
        crossing = (np.abs(denom) > 1e-15) & (t > 1e-12) & (t < 1 - 1e-12) \
            & (u > 1e-12) & (u < 1 - 1e-12)
        if np.any(crossing):
            j = int(js[np.argmax(crossing)])
            raise GeometryError(f"polyline self-intersects (segments {i} and {j})")


# ---------------------------------------------------------------------------
# named constructors
# ---------------------------------------------------------------------------
def _circle_points(center, radius, n) -> np.ndarray:
    th = 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def disk_domain(chart: ConformalChart, center=(0.0, 0.0), radius: float = 1.0,
                n: int = 256, name: str = "") -> Domain2D:
    """Euclidean circle of given chart-coordinate center and radius."""
    if radius <= 0:
        raise UsageError("radius must be positive")
    verts = _circle_points(center, radius, n)
    return Domain2D(chart, verts, analytic=AnalyticBoundary("circle", {"radius": radius}),
                    name=name)


def hyperbolic_ball(radius_hyp: float, n: int = 256, center=(0.0, 0.0), name: str = "") -> Domain2D:
    """Geodesic ball in the Poincare disk (a Euclidean circle in coordinates).

    The ball of hyperbolic radius rho centered at the origin is the Euclidean
    circle of radius tanh(rho / 2); off-center balls are its Mobius images,
    which are again Euclidean circles.
    """
    if radius_hyp <= 0:
        raise UsageError("hyperbolic radius must be positive")
    chart = ConformalChart.poincare_disk()
    r_e = math.tanh(radius_hyp / 2.0)
    verts = _circle_points((0.0, 0.0), r_e, n)
    c = complex(float(center[0]), float(center[1]))
    if abs(c) > 0:
        if abs(c) >= 1:
            raise GeometryError("center must lie in the open unit disk")
        z = verts[:, 0] + 1j * verts[:, 1]
        w = (z + c) / (1.0 + np.conj(c) * z)
        verts = np.column_stack([w.real, w.imag])
        # a Mobius image of a circle is a circle; recover its Euclidean radius
        cen, rad = _circle_through(verts[0], verts[n // 3], verts[2 * n // 3])
        analytic = AnalyticBoundary("circle", {"radius": rad})
    else:
        analytic = AnalyticBoundary("circle", {"radius": r_e})
    return Domain2D(chart, verts, analytic=analytic, name=name)


def spherical_cap(R: float, geodesic_radius: float, n: int = 256, name: str = "") -> Domain2D:
    """Geodesic ball about the chart origin of the radius-R sphere."""
    if not 0 < geodesic_radius < math.pi * R:
        raise UsageError("geodesic radius must lie in (0, pi R)")
    chart = ConformalChart.stereographic_sphere(R)
    r_e = R * math.tan(geodesic_radius / (2.0 * R))
    verts = _circle_points((0.0, 0.0), r_e, n)
    return Domain2D(chart, verts, analytic=AnalyticBoundary("circle", {"radius": r_e}),
                    name=name)


def rectangle_domain(width: float = 1.0, height: float = 1.0,
                     chart: Optional[ConformalChart] = None, corner=(0.0, 0.0),
                     name: str = "") -> Domain2D:
    if width <= 0 or height <= 0:
        raise UsageError("rectangle sides must be positive")
    chart = chart or ConformalChart.euclidean()
    x0, y0 = corner
    verts = np.array([[x0, y0], [x0 + width, y0], [x0 + width, y0 + height], [x0, y0 + height]])
    return Domain2D(chart, verts, name=name)


def unit_square(name: str = "unit square") -> Domain2D:
    return rectangle_domain(1.0, 1.0, name=name)


def ellipse_domain(chart: ConformalChart, a: float, b: float, center=(0.0, 0.0),
                   n: int = 256, name: str = "") -> Domain2D:
    if a <= 0 or b <= 0:
        raise UsageError("semi-axes must be positive")
    th = 2 * np.pi * np.arange(n) / n
    verts = np.column_stack([center[0] + a * np.cos(th), center[1] + b * np.sin(th)])
    return Domain2D(chart, verts,
                    analytic=AnalyticBoundary("ellipse", {"a": a, "b": b, "center": tuple(center)}),
                    name=name)


def _domain_from_shape(chart: ConformalChart, shape: dict, name: str = "") -> Domain2D:
    kind = shape.get("kind")
    n = int(shape.get("n", 256))
    if kind == "disk":
        d = disk_domain(chart, center=tuple(shape.get("center", (0.0, 0.0))),
                        radius=float(shape["radius"]), n=n, name=name)
        d.chart = chart
        return d
    if kind == "hyperbolic_ball":
        if chart.model != POINCARE:
            raise UsageError("hyperbolic_ball shape requires a poincare_disk chart")
        rad = shape.get("radius")
        if rad is None:
            rad = float(shape["diameter"]) / 2.0
        return hyperbolic_ball(float(rad), n=n, center=tuple(shape.get("center", (0.0, 0.0))),
                               name=name)
    if kind == "spherical_cap":
        if chart.model != SPHERE:
            raise UsageError("spherical_cap shape requires a stereographic_sphere chart")
        return spherical_cap(chart.radius, float(shape["geodesic_radius"]), n=n, name=name)
    if kind == "rectangle":
        return rectangle_domain(float(shape.get("width", 1.0)), float(shape.get("height", 1.0)),
                                chart=chart, corner=tuple(shape.get("corner", (0.0, 0.0))),
                                name=name)
    if kind == "ellipse":
        return ellipse_domain(chart, float(shape["a"]), float(shape["b"]),
                              center=tuple(shape.get("center", (0.0, 0.0))), n=n, name=name)
    raise UsageError(f"unknown shape kind {kind!r}")


def _circle_through(a, b, c) -> Tuple[np.ndarray, float]:
    cen = circumcenter3(ConformalChart.euclidean(), a, b, c)
    if cen is None:
        raise GeometryError("collinear points do not define a circle")
    return cen, float(np.linalg.norm(np.asarray(a) - cen))


# ---------------------------------------------------------------------------
# curvature profiles and convexity certificates
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CurvatureProfile:
    """Geodesic curvature of the boundary sampled at polyline vertices."""

    kappa: np.ndarray          # geodesic curvature w.r.t. the target chart
    kappa_flat: np.ndarray     # flat (coordinate) curvature
    corner_mask: np.ndarray    # vertices where curvature is undefined
    turning_angle: np.ndarray
    points: np.ndarray
    metric_label: str

    def smooth_min(self) -> Tuple[float, np.ndarray]:
        ok = ~self.corner_mask
        if not np.any(ok):
            raise GeometryError("all boundary vertices are corners; no smooth samples")
        i = int(np.argmin(np.where(ok, self.kappa, np.inf)))
        return float(self.kappa[i]), self.points[i]


@dataclass(frozen=True)
class ConvexityCertificate:
    metric_label: str
    min_geodesic_curvature: float
    worst_point: np.ndarray
    threshold: float
    passed: bool
    corner_indices: np.ndarray
    reflex_corners: int

    def __bool__(self) -> bool:
        return self.passed


def geodesic_curvature_profile(domain: Domain2D,
                               target_chart: Optional[ConformalChart] = None) -> CurvatureProfile:
    """Boundary geodesic curvature with respect to ``target_chart``.

    Flat curvature comes from the analytic descriptor when present, else from
    the circumscribed circle of each three consecutive vertices (second-order
    accurate for smooth boundaries).  The conformal transform
    ``kappa_chart = e^{-phi} (kappa_flat + dphi/dN)`` lifts it to the chart
    metric, with N the flat outward unit normal.
    """
    chart = target_chart or domain.chart
    v = domain.vertices
    prev_pts = np.roll(v, 1, axis=0)
    next_pts = np.roll(v, -1, axis=0)

    e_prev = v - prev_pts
    e_next = next_pts - v
    cross = e_prev[:, 0] * e_next[:, 1] - e_prev[:, 1] * e_next[:, 0]
    dots = np.einsum("ij,ij->i", e_prev, e_next)
    turning = np.arctan2(cross, dots)
    corner_mask = np.abs(turning) > CORNER_TURNING_ANGLE

    if domain.analytic is not None:
        kappa_flat = domain.analytic.flat_curvature(v)
    else:
        # signed curvature of the circumscribed circle through each triple
        area2 = cross  # twice the signed triangle area of (prev, v, next)
        l1 = np.linalg.norm(e_prev, axis=1)
        l2 = np.linalg.norm(e_next, axis=1)
        l3 = np.linalg.norm(next_pts - prev_pts, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa_flat = 2.0 * area2 / (l1 * l2 * l3)
        kappa_flat = np.where(np.isfinite(kappa_flat), kappa_flat, 0.0)

    tangent = next_pts - prev_pts
    tn = np.linalg.norm(tangent, axis=1)
    tangent = tangent / tn[:, None]
    normal_out = np.column_stack([tangent[:, 1], -tangent[:, 0]])

    phi = chart.phi
    gphi = phi.grad(v)
    dphi_dN = np.einsum("ij,ij->i", gphi, normal_out)
    kappa = np.exp(-phi.fn(v)) * (kappa_flat + dphi_dN)
    label = chart.model if chart.phi_extra is None else chart.model + "+phi"
    return CurvatureProfile(kappa=kappa, kappa_flat=kappa_flat, corner_mask=corner_mask,
                            turning_angle=turning, points=v, metric_label=label)


def _certify(domain: Domain2D, chart: ConformalChart, threshold: float,
             tol: float, label: str) -> ConvexityCertificate:
    prof = geodesic_curvature_profile(domain, chart)
    corner_indices = np.nonzero(prof.corner_mask)[0]
    reflex = int(np.sum(prof.corner_mask & (prof.turning_angle < 0)))
    if corner_indices.size == prof.points.shape[0]:
        # pure polygon: no smooth samples anywhere, nothing to certify
        kmin, worst = float("nan"), np.full(2, np.nan)
    else:
        kmin, worst = prof.smooth_min()
    # corners leave the curvature criterion unverifiable there, so any corner
    # blocks certification; the smooth minimum is still reported
    passed = corner_indices.size == 0 and kmin >= threshold - tol
    return ConvexityCertificate(
        metric_label=label,
        min_geodesic_curvature=kmin,
        worst_point=worst,
        threshold=threshold,
        passed=bool(passed),
        corner_indices=corner_indices,
        reflex_corners=reflex,
    )


def is_horoconvex(domain: Domain2D, tol: float = 1e-8) -> ConvexityCertificate:
    """Certify geodesic curvature >= 1 in the hyperbolic metric.

    Horoconvexity means every boundary point admits an enclosing horocycle;
    for smooth boundaries this is exactly hyperbolic geodesic curvature >= 1.
    """
    if domain.chart.model != POINCARE:
        raise UsageError("horoconvexity is defined for poincare_disk domains")
    return _certify(domain, domain.chart, threshold=1.0, tol=tol, label="poincare_disk")


def is_convex_wrt(domain: Domain2D, target_chart: ConformalChart,
                  tol: float = 1e-8) -> ConvexityCertificate:
    """Certify geodesic convexity with respect to ``target_chart``'s metric."""
    return _certify(domain, target_chart, threshold=0.0, tol=tol,
                    label=target_chart.model)


# ---------------------------------------------------------------------------
# diameter / circumradius / Jung-type bound
# ---------------------------------------------------------------------------
def diameter(domain: Domain2D, target_chart: Optional[ConformalChart] = None) -> float:
    """Geodesic diameter: max pairwise distance over boundary vertices.

    The metric defaults to the domain's own chart; passing another chart
    measures the same coordinate region under a different metric (the
    hyperbolic/spherical comparison needs exactly this).
    """
    chart = target_chart or domain.chart
    v = domain.vertices
    best = 0.0
    chunk = 512
    for i in range(0, len(v), chunk):
        block = v[i:i + chunk]
        d = distance(chart, block[:, None, :], v[None, :, :])
        best = max(best, float(np.max(d)))
    return best


def circumradius(domain: Domain2D,
                 target_chart: Optional[ConformalChart] = None) -> Tuple[float, np.ndarray]:
    """Minimal enclosing geodesic ball of the boundary vertices.

    Returns (radius, center).  A subgradient phase (geodesic steps toward the
    farthest point, 200 iterations, movement tolerance 1e-9) is followed by a
    support-set polish on at most three support points, which pins the radius
    to the optimum well below the 1e-6 contract.
    """
    chart = target_chart or domain.chart
    pts = domain.vertices
    c = pts.mean(axis=0)
    if chart.model == POINCARE and np.linalg.norm(c) >= 1.0:
        c = 0.99 * c / np.linalg.norm(c)

    trace = []
    for k in range(200):
        d = distance(chart, c, pts)
        i = int(np.argmax(d))
        step = 1.0 / (k + 2.0)
        c_new = geodesic_point(chart, c, pts[i], step)
        move = float(np.linalg.norm(c_new - c))
        trace.append((k, float(d[i]), move))
        c = c_new
        if move < 1e-9:
            break

    try:
        c, r = _polish_meb(chart, pts, c)
    except NumericalError as err:
        err.trace = trace + err.trace
        raise
    return r, c


def _ball_of_support(chart, pts, idx):
    """Smallest ball determined by 1-3 support points (None if degenerate)."""
    sub = pts[list(idx)]
    if len(sub) == 1:
        return sub[0], 0.0
    if len(sub) == 2:
        c = geodesic_point(chart, sub[0], sub[1], 0.5)
        return c, float(np.max(distance(chart, c, sub)))
    c = circumcenter3(chart, sub[0], sub[1], sub[2])
    if c is None:
        return None
    return c, float(np.max(distance(chart, c, sub)))


def _polish_meb(chart, pts, c0, max_pivots=64):
    d0 = distance(chart, c0, pts)
    order = np.argsort(d0)[::-1]
    support = [int(order[0]), int(order[1])] if len(pts) > 1 else [int(order[0])]
    best = None
    for pivot in range(max_pivots):
        cand = _ball_of_support(chart, pts, support)
        if cand is None:
            # drop the least extreme support point and retry
            support = support[:-1] if len(support) > 2 else [support[0]]
            cand = _ball_of_support(chart, pts, support)
            if cand is None:
                raise NumericalError("enclosing-ball support set degenerated")
        c, r = cand
        d = distance(chart, c, pts)
        j = int(np.argmax(d))
        if d[j] <= r * (1 + 1e-12) + 1e-13:
            return c, max(r, float(d[j]))
        best = None
        # add the violator; keep the minimal enclosing sub-ball of <= 3 points
        trial_pts = list(dict.fromkeys(support + [j]))
        import itertools

        for size in (2, 3):
            for combo in itertools.combinations(trial_pts, min(size, len(trial_pts))):
                cand = _ball_of_support(chart, pts, list(combo))
                if cand is None:
                    continue
                cc, rr = cand
                dd = float(np.max(distance(chart, cc, pts[trial_pts])))
                if dd <= rr * (1 + 1e-10) + 1e-12:
                    if best is None or rr < best[2]:
                        best = (list(combo), cc, rr)
            if best is not None:
                break
        if best is None:
            raise NumericalError("enclosing-ball pivot found no enclosing support subset",
                                 trace=[(pivot, support, j)])
        support = best[0]
    raise NumericalError("enclosing-ball polish did not converge",
                         trace=[(max_pivots, support)])


def dekster_min_diameter(circumradius_hyp: float) -> float:
    """Jung-type lower bound in the hyperbolic plane.

    A set of hyperbolic circumradius C has diameter at least
    ``2 arcsinh( (sqrt(3)/2) sinh C )``; the bound degenerates to the
    Euclidean Jung constant sqrt(3) as C -> 0.
    """
    if circumradius_hyp < 0:
        raise UsageError("circumradius must be nonnegative")
    return 2.0 * math.asinh(math.sqrt(3.0) / 2.0 * math.sinh(circumradius_hyp))
