"""Log-concavity diagnostics for ground states and the barrier-operator algebra.

The discrete side reconstructs v = log u1 together with its gradient and
Hessian by a least-squares local polynomial fit over each vertex's 2-ring
patch, then converts the flat Hessian to the Hessian of a chosen conformal
connection.  Verdicts always exclude a boundary collar: near a convex
boundary Hess(log u1) diverges to -infinity, so the collar hides nothing —
genuine violations live in the bulk.

The algebraic side houses the barrier operator for constant-curvature
connections, its closed form along the family rho(t) = t rho + (1-t),
V(t) = t V, and the pointwise sufficient condition
Hess(V - lambda rho) > 2K (V - lambda rho) g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .domains import Domain2D
from .errors import NumericalError, UsageError
from .fields import ScalarField
from .geometry import (ConformalChart, SymMatrix2, chart_hessian_components,
                       correct_hessian_components, sym_eigmax_dir, sym_eigvals)
from .mesh import TriMesh

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
DROP_FRACTION_INCONCLUSIVE = 0.10
TOL_CONCAVITY_REL = 1e-3
QUAD_PATCH_RTOL = 1e-9


# ---------------------------------------------------------------------------
# discrete Hessian fields
# ---------------------------------------------------------------------------
@dataclass
class LogHessianField:
    """v = log u1 with fitted derivatives at retained interior vertices."""

    points: np.ndarray           # (M, 2)
    vertex_indices: np.ndarray   # (M,) into the mesh
    v: np.ndarray                # (M,)
    grad_flat: np.ndarray        # (M, 2) coordinate gradient of v
    hess_flat: np.ndarray        # (M, 3) coordinate Hessian (h11, h12, h22)
    hess_conn: np.ndarray        # (M, 3) connection Hessian components
    conf_factor: np.ndarray      # (M,) e^{2 phi} of the connection chart
    connection_chart: ConformalChart
    exclusion_margin: float
    dropped: int                 # rank-deficient / underflowed fit points
    n_candidates: int
    h_max: float

    @property
    def dropped_fraction(self) -> float:
        return self.dropped / max(self.n_candidates, 1)

    def metric_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of Hess v relative to the connection metric, ascending."""
        return sym_eigvals(self.hess_conn) / self.conf_factor[:, None]

    def save_csv(self, path: str) -> str:
        data = np.column_stack([self.points, self.v, self.grad_flat, self.hess_conn])
        np.savetxt(path, data, delimiter=",",
                   header="x,y,v,v1,v2,h11,h12,h22", comments="")
        return path


def _rings(mesh: TriMesh, depth: int) -> List[np.ndarray]:
    one = mesh.vertex_neighbors()
    rings = []
    for i, nbrs in enumerate(one):
        patch = set(nbrs)
        for _ in range(depth - 1):
            grown = set(patch)
            for j in patch:
                grown.update(one[j])
            patch = grown
        patch.discard(i)
        rings.append(np.fromiter(sorted(patch), dtype=np.int64))
    return rings


def _fit_quadratic(mesh: TriMesh, values: np.ndarray, fit_idx: np.ndarray,
                   valid: np.ndarray, depth: int = 2,
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares local model on each ``depth``-ring patch.

    The model is a full cubic and only the quadratic part is read off: the
    cubic columns soak up the third-order Taylor terms that would otherwise
    alias into the Hessian at first order in h.  Returns (grad (M,2),
    hess (M,3), ok (M,) bool, resid (M,)); a vertex fails if fewer than 10
    valid neighbors remain or the system is rank deficient.  ``resid`` is the
    max patch misfit relative to the data scale: it is ~machine eps exactly
    when the samples really are a polynomial of degree <= 3.
    """
    rings = _rings(mesh, depth)
    M = len(fit_idx)
    grad = np.zeros((M, 2))
    hess = np.zeros((M, 3))
    ok = np.zeros(M, dtype=bool)
    resid = np.full(M, np.inf)
    verts = mesh.vertices
    for row, i in enumerate(fit_idx):
        nbrs = rings[i]
        nbrs = nbrs[valid[nbrs]]
        if len(nbrs) < 10:
            continue
        d = verts[nbrs] - verts[i]
        dx, dy = d[:, 0], d[:, 1]
        A = np.column_stack([
            np.ones(len(nbrs)), dx, dy,
            0.5 * dx ** 2, dx * dy, 0.5 * dy ** 2,
            dx ** 3 / 6.0, 0.5 * dx ** 2 * dy, 0.5 * dx * dy ** 2, dy ** 3 / 6.0,
        ])
        rhs = values[nbrs] - values[i]
        coef, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
        if rank < 10:
            continue
        grad[row] = coef[1:3]
        hess[row] = (coef[3], coef[4], coef[5])
        ok[row] = True
        scale = float(np.max(np.abs(rhs)))
        resid[row] = float(np.max(np.abs(A @ coef - rhs))) / (scale or 1.0)
    return grad, hess, ok, resid


def _log_derivatives(mesh: TriMesh, values: np.ndarray, v_all: np.ndarray,
                     fit_idx: np.ndarray, valid: np.ndarray,
                     ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient and Hessian of v = log(values) at the fit vertices.

    A direct fit of v is kept only where the patch residual shows the samples
    really are a low-degree polynomial (then it is exact).  Anywhere else the
    log inherits unbounded higher derivatives near the zero set of ``values``
    and the patch model under-resolves them, so the derivatives come from a
    fit of ``values`` itself -- uniformly smooth all the way to the boundary --
    via grad v = grad u / u and Hess v = Hess u / u - grad v (x) grad v.
    """
    grad_v, hess_v, ok_v, resid_v = _fit_quadratic(mesh, v_all, fit_idx, valid)
    grad_u, hess_u, ok_u, _ = _fit_quadratic(
        mesh, values, fit_idx, np.ones(len(values), dtype=bool), depth=3)
    use_v = ok_v & (resid_v <= QUAD_PATCH_RTOL)
    u_c = values[fit_idx][:, None]
    gv = grad_u / u_c
    hv = hess_u / u_c - np.column_stack([
        gv[:, 0] ** 2, gv[:, 0] * gv[:, 1], gv[:, 1] ** 2])
    grad = np.where(use_v[:, None], grad_v, gv)
    hess = np.where(use_v[:, None], hess_v, hv)
    return grad, hess, use_v | ok_u


def _retained_vertices(mesh: TriMesh, margin: float, valid: np.ndarray) -> np.ndarray:
    dist = mesh.boundary_distance()
    keep = (~mesh.boundary_mask) & (dist >= margin) & valid
    return np.nonzero(keep)[0]


def default_margin(mesh: TriMesh) -> float:
    return max(2.0 * mesh.h_max, mesh.domain.euclidean_extent() / 50.0
               if mesh.domain is not None else 0.0)


def log_hessian_field(result, mesh: Optional[TriMesh] = None,
                      connection: Optional[ConformalChart] = None,
                      margin: Optional[float] = None) -> LogHessianField:
    """Fit v = log u1 and its derivatives; convert to a connection Hessian.

    ``result`` is an EigenResult or a plain vertex-value array (the latter
    needs an explicit mesh).  Vertices closer to the boundary than ``margin``
    (default max(2 h_max, extent/50), never below 2 h_max) are excluded.
    """
    if hasattr(result, "vectors"):
        values = result.vectors[:, 0]
        mesh = mesh or result.mesh
    else:
        values = np.asarray(result, dtype=float)
    if mesh is None:
        raise UsageError("log_hessian_field needs a mesh when given raw values")
    if connection is None:
        connection = mesh.domain.chart if mesh.domain is not None else None
    if connection is None:
        raise UsageError("a connection chart is required")
    h_max = mesh.h_max
    if margin is None:
        margin = default_margin(mesh)
    elif margin < 2.0 * h_max:
        raise UsageError(f"margin {margin:.4g} is below 2*h_max = {2 * h_max:.4g}")

    floor = 1e-8 * float(np.max(values))
    valid = values > floor
    with np.errstate(divide="ignore", invalid="ignore"):
        v_all = np.where(valid, np.log(np.maximum(values, 1e-300)), 0.0)

    fit_idx = _retained_vertices(mesh, margin, valid)
    if len(fit_idx) == 0:
        raise UsageError(f"margin {margin:.4g} excludes every interior vertex")
    grad, hess, ok = _log_derivatives(mesh, values, v_all, fit_idx, valid)
    dropped = int(np.sum(~ok))
    fit_idx, grad, hess = fit_idx[ok], grad[ok], hess[ok]
    if len(fit_idx) == 0:
        raise NumericalError("every candidate vertex was rank deficient")
    pts = mesh.vertices[fit_idx]

    hess_conn = correct_hessian_components(connection, pts, hess, grad)
    conf = np.exp(2.0 * connection.phi.fn(pts))
    return LogHessianField(points=pts, vertex_indices=fit_idx, v=v_all[fit_idx],
                           grad_flat=grad, hess_flat=hess, hess_conn=hess_conn,
                           conf_factor=conf, connection_chart=connection,
                           exclusion_margin=margin, dropped=dropped,
                           n_candidates=dropped + len(fit_idx), h_max=h_max)


def power_hessian_field(values: np.ndarray, mesh: TriMesh, exponent: float,
                        connection: Optional[ConformalChart] = None,
                        margin: Optional[float] = None) -> LogHessianField:
    """Same fitting machinery applied to w = values^exponent (flat by default)."""
    values = np.asarray(values, dtype=float)
    connection = connection or ConformalChart.euclidean()
    floor = 1e-8 * float(np.max(values))
    w = np.where(values > floor, np.power(np.maximum(values, 0.0), exponent), np.nan)
    h_max = mesh.h_max
    if margin is None:
        margin = default_margin(mesh)
    elif margin < 2.0 * h_max:
        raise UsageError(f"margin {margin:.4g} is below 2*h_max = {2 * h_max:.4g}")
    valid = np.isfinite(w)
    fit_idx = _retained_vertices(mesh, margin, valid)
    if len(fit_idx) == 0:
        raise UsageError(f"margin {margin:.4g} excludes every interior vertex")
    w_safe = np.where(valid, w, 0.0)
    grad_w, hess_w, ok_w, resid_w = _fit_quadratic(mesh, w_safe, fit_idx, valid)
    grad_u, hess_u, ok_u, _ = _fit_quadratic(
        mesh, values, fit_idx, np.ones(len(values), dtype=bool))
    # Same patch-certification split as for the log field: fractional powers
    # of a function vanishing on the boundary are not patch-resolvable there,
    # the function itself is.
    use_w = ok_w & (resid_w <= QUAD_PATCH_RTOL)
    u_c = values[fit_idx][:, None]
    gw = exponent * u_c ** (exponent - 1.0) * grad_u
    hw = (exponent * u_c ** (exponent - 1.0) * hess_u
          + exponent * (exponent - 1.0) * u_c ** (exponent - 2.0)
          * np.column_stack([grad_u[:, 0] ** 2, grad_u[:, 0] * grad_u[:, 1],
                             grad_u[:, 1] ** 2]))
    grad = np.where(use_w[:, None], grad_w, gw)
    hess = np.where(use_w[:, None], hess_w, hw)
    ok = use_w | ok_u
    dropped = int(np.sum(~ok))
    fit_idx, grad, hess = fit_idx[ok], grad[ok], hess[ok]
    if len(fit_idx) == 0:
        raise NumericalError("every candidate vertex was rank deficient")
    pts = mesh.vertices[fit_idx]
    hess_conn = correct_hessian_components(connection, pts, hess, grad)
    conf = np.exp(2.0 * connection.phi.fn(pts))
    return LogHessianField(points=pts, vertex_indices=fit_idx, v=w_safe[fit_idx],
                           grad_flat=grad, hess_flat=hess, hess_conn=hess_conn,
                           conf_factor=conf, connection_chart=connection,
                           exclusion_margin=margin, dropped=dropped,
                           n_candidates=dropped + len(fit_idx), h_max=h_max)


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ConcavityReport:
    verdict: str                 # "concave" | "violated" | "inconclusive-margin"
    max_hess_eig: float          # max over vertices of top eig of Hess v + b g
    worst_point: np.ndarray
    worst_direction: np.ndarray  # unit w.r.t. the connection metric
    b_used: str
    tol_used: float
    exclusion_margin: float
    n_points: int
    dropped_fraction: float
    metric_label: str

    def __bool__(self) -> bool:
        return self.verdict == "concave"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "max_hess_eig": self.max_hess_eig,
            "worst_point": [float(c) for c in self.worst_point],
            "worst_direction": [float(c) for c in self.worst_direction],
            "b": self.b_used,
            "tol": self.tol_used,
            "margin": self.exclusion_margin,
            "n_points": self.n_points,
            "dropped_fraction": self.dropped_fraction,
            "metric": self.metric_label,
        }


def concavity_report(field: LogHessianField, b: Union[float, ScalarField] = 0.0,
                     tol_rel: float = TOL_CONCAVITY_REL) -> ConcavityReport:
    """Extremal eigenvalue of Hess v + b*g over the retained vertices.

    Eigenvalues are taken relative to the connection metric, so adding b*g
    shifts them by b.  The verdict threshold scales with the field's own
    magnitude to separate fit noise from genuine violation.
    """
    rel = field.metric_eigenvalues()
    if np.isscalar(b):
        b_vals = np.full(len(field.points), float(b))
        b_desc = repr(float(b))
    else:
        b_vals = b.fn(field.points)
        b_desc = b.name or b.to_expression_string()
    shifted = rel[:, 1] + b_vals
    scale = float(np.max(np.abs(rel))) if len(rel) else 1.0
    tol = tol_rel * max(scale, 1e-300)
    i = int(np.argmax(shifted))
    direction = sym_eigmax_dir(field.hess_conn[i])
    direction = direction / math.sqrt(field.conf_factor[i])
    if field.dropped_fraction > DROP_FRACTION_INCONCLUSIVE:
        verdict = "inconclusive-margin"
    elif shifted[i] <= tol:
        verdict = "concave"
    else:
        verdict = "violated"
    label = field.connection_chart.model
    return ConcavityReport(verdict=verdict, max_hess_eig=float(shifted[i]),
                           worst_point=field.points[i], worst_direction=direction,
                           b_used=b_desc, tol_used=tol,
                           exclusion_margin=field.exclusion_margin,
                           n_points=len(field.points),
                           dropped_fraction=field.dropped_fraction,
                           metric_label=label)


def eq35_residual(field: LogHessianField, problem, lam: float) -> dict:
    """Pointwise residual of |grad v|^2 + Delta v - (V - lambda rho), flat form.

    With flat-chart coefficients the ground-state log satisfies
    |grad v|^2 + Delta_flat v = V_flat - lambda rho_flat, so the fitted
    derivatives must reproduce it up to fit error.
    """
    pts = field.points
    lap = field.hess_flat[:, 0] + field.hess_flat[:, 2]
    grad2 = np.einsum("ij,ij->i", field.grad_flat, field.grad_flat)
    rhs = problem.V.fn(pts) - lam * problem.rho.fn(pts)
    r = grad2 + lap - rhs
    return {
        "mean_abs": float(np.mean(np.abs(r))),
        "max_abs": float(np.max(np.abs(r))),
        "scale": float(np.mean(np.abs(rhs)) + 1e-300),
    }


# ---------------------------------------------------------------------------
# barrier operator (constant-curvature connections)
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BarrierState:
    """All pointwise data the barrier operator consumes.

    Vector/matrix components are written in an orthonormal frame of the
    connection metric at the point, so the metric there is the identity and
    ``X`` must be a Euclidean unit vector.  ``K`` is the constant curvature
    of the connection; on space forms the curvature-derivative terms vanish
    and the curvature enters only through K itself.
    """

    point: np.ndarray
    X: np.ndarray
    b: float
    grad_b: np.ndarray
    lap_b: float
    grad_v: np.ndarray
    hess_v: SymMatrix2
    lam: float
    rho_XX: float
    V_XX: float
    K: float
    V_val: Optional[float] = None
    rho_val: Optional[float] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if abs(float(X @ X) - 1.0) > 1e-8:
            raise UsageError("X must be a unit vector in the connection metric")


def barrier_state_from_chart(chart: ConformalChart, **kw) -> BarrierState:
    """Build a BarrierState, taking K from a constant-curvature chart."""
    if chart.phi_extra is not None:
        raise UsageError("barrier operator requires a constant-curvature connection")
    return BarrierState(K=chart.curvature, **kw)


def barrier_operator(state: BarrierState, use_eq35: bool = False) -> float:
    """The comparison-function operator at one point.

    -2 b^2 + 2 <grad b, grad v> - 2K (|grad v|^2 + Delta v - v_X^2 - v_XX)
    + Delta b - lambda rho_XX + V_XX, with Delta v optionally eliminated via
    the ground-state identity Delta v = V - lambda rho - |grad v|^2.
    """
    gv = np.asarray(state.grad_v, dtype=float)
    gb = np.asarray(state.grad_b, dtype=float)
    X = np.asarray(state.X, dtype=float)
    v_X = float(gv @ X)
    v_XX = state.hess_v.quad(X)
    grad_v2 = float(gv @ gv)
    if use_eq35:
        if state.V_val is None or state.rho_val is None:
            raise UsageError("eq-3.5 elimination needs V_val and rho_val on the state")
        lap_v = state.V_val - state.lam * state.rho_val - grad_v2
    else:
        lap_v = state.hess_v.trace()
    return (-2.0 * state.b ** 2 + 2.0 * float(gb @ gv)
            - 2.0 * state.K * (grad_v2 + lap_v - v_X ** 2 - v_XX)
            + state.lap_b - state.lam * state.rho_XX + state.V_XX)


def barrier_path_closed_form(t: float, lam: float, K: float, rho: float,
                             rho_XX: float, V: float, V_XX: float, v_X: float) -> float:
    """Barrier value at b = 0, v_XX = 0 along rho(t) = t rho + (1-t), V(t) = t V."""
    return (t * lam * (2.0 * K * rho - rho_XX) + 2.0 * K * v_X ** 2
            + 2.0 * K * lam * (1.0 - t) + t * (V_XX - 2.0 * K * V))


# ---------------------------------------------------------------------------
# the pointwise sufficient condition
# ---------------------------------------------------------------------------
def _chart_for_curvature(K: float, domain: Optional[Domain2D] = None) -> ConformalChart:
    if domain is not None and domain.chart.phi_extra is None:
        if abs(domain.chart.curvature - K) <= 1e-12 * max(1.0, abs(K)):
            return domain.chart
    if K > 0:
        return ConformalChart.stereographic_sphere(1.0 / math.sqrt(K))
    if K == 0:
        return ConformalChart.euclidean()
    if abs(K + 1.0) <= 1e-12:
        return ConformalChart.poincare_disk()
    raise UsageError("negative curvature connections are supported only at K = -1")


def interior_samples(domain: Domain2D, n: int) -> np.ndarray:
    """Deterministic sunflower-pattern interior sample points."""
    c = domain.vertices.mean(axis=0)
    r_out = float(np.max(np.linalg.norm(domain.vertices - c, axis=1)))
    n_cand = max(4 * n, 64)
    k = np.arange(1, n_cand + 1)
    r = r_out * np.sqrt(k / n_cand)
    th = k * GOLDEN_ANGLE
    cand = np.column_stack([c[0] + r * np.cos(th), c[1] + r * np.sin(th)])
    cand = cand[domain.contains(cand)]
    if len(cand) == 0:
        raise NumericalError("no interior sample points found")
    if len(cand) <= n:
        return cand
    # candidates are radius-ordered; stride so the kept set still spans the
    # whole domain instead of its innermost part
    return cand[np.linspace(0, len(cand) - 1, n).round().astype(int)]


def check_thm41_condition(V: ScalarField, rho: ScalarField, lambda_t: float,
                          K: float, domain: Domain2D,
                          samples: int = 400) -> Tuple[bool, float, np.ndarray]:
    """Sampled check of Hess(V - lambda rho) > 2K (V - lambda rho) g.

    Both sides are compared through the minimum eigenvalue of
    Hess W - 2 K W g relative to the metric, W = V - lambda_t rho, with the
    connection Hessian built from flat derivatives of the fields.  Returns
    (holds, worst margin, worst point); the margin is the sampled minimum.
    """
    chart = _chart_for_curvature(K, domain)
    W = V + (-float(lambda_t)) * rho
    pts = interior_samples(domain, samples)
    H = chart_hessian_components(chart, W, pts)
    conf = np.exp(2.0 * chart.phi.fn(pts))
    margins = sym_eigvals(H)[:, 0] / conf - 2.0 * K * W.fn(pts)
    i = int(np.argmin(margins))
    return bool(margins[i] > 0.0), float(margins[i]), pts[i]


# ---------------------------------------------------------------------------
# continuity sweep over the deformation family
# ---------------------------------------------------------------------------
@dataclass
class SweepResult:
    rows: List[dict]             # per-t scalars, ordered by t
    reports: List[ConcavityReport]
    flagged_t: Optional[float]   # first t with a violated verdict

    def to_csv(self, path: str) -> str:
        with open(path, "w") as fh:
            fh.write("t,lambda1,lambda2,gap,max_hess_eig,verdict\n")
            for row in self.rows:
                fh.write("%.17g,%.17g,%.17g,%.17g,%.17g,%s\n" % (
                    row["t"], row["lambda1"], row["lambda2"], row["gap"],
                    row["max_hess_eig"], row["verdict"]))
        return path

    def to_json(self) -> dict:
        return {"rows": self.rows, "flagged_t": self.flagged_t}


def continuity_sweep(base_problem, t_grid: Sequence[float],
                     connection: Optional[ConformalChart] = None,
                     b: Union[float, ScalarField] = 0.0,
                     h_target: Optional[float] = None,
                     margin: Optional[float] = None) -> SweepResult:
    """Solve the family rho(t) = t rho + (1-t), V(t) = t V and track concavity.

    One mesh is shared across the whole family (only coefficients change), so
    trajectories are smooth in t.  The first t whose report says "violated"
    is flagged; an empty flag plus concave endpoints is the numerical analogue
    of the continuity argument's conclusion.
    """
    from .eigensolver import WeightedProblem, assemble_problem, solve_lowest
    from .mesh import triangulate

    t_grid = [float(t) for t in t_grid]
    if t_grid != sorted(t_grid):
        raise UsageError("t_grid must be sorted ascending")
    if t_grid[0] != 0.0 or t_grid[-1] != 1.0:
        raise UsageError("t_grid must include 0 and 1")

    domain = base_problem.domain
    rho_rel = base_problem.rho_rel
    if rho_rel is None:
        if domain.chart.model == "euclidean_plane" and domain.chart.phi_extra is None:
            rho_rel = base_problem.rho
        else:
            raise UsageError("continuity_sweep needs a problem built from a relative "
                             "weight (use WeightedProblem.from_chart)")
    connection = connection or domain.chart
    if h_target is None:
        h_target = domain.euclidean_extent() / 25.0
    mesh = triangulate(domain, h_target)

    one = ScalarField.constant(1.0)
    rows: List[dict] = []
    reports: List[ConcavityReport] = []
    flagged: Optional[float] = None
    for t in t_grid:
        rho_rel_t = (t * rho_rel + (1.0 - t) * one) if t != 1.0 else rho_rel
        prob_t = WeightedProblem.from_chart(domain, rho_tilde=rho_rel_t)
        if t != 0.0:
            V_t = t * base_problem.V
            prob_t = WeightedProblem(domain=domain, V=prob_t.V + V_t, rho=prob_t.rho,
                                     rho_rel=prob_t.rho_rel)
        system = assemble_problem(prob_t, mesh)
        result = solve_lowest(system, k=2)
        field = log_hessian_field(result, connection=connection, margin=margin)
        report = concavity_report(field, b=b)
        rows.append({
            "t": t,
            "lambda1": result.lambda1,
            "lambda2": result.lambda2,
            "gap": result.gap,
            "max_hess_eig": report.max_hess_eig,
            "verdict": report.verdict,
        })
        reports.append(report)
        if flagged is None and report.verdict == "violated":
            flagged = t
    return SweepResult(rows=rows, reports=reports, flagged_t=flagged)
