"""Torsion problem on spherical caps and Kennington power concavity.

Projecting the sphere's torsion problem Delta u + 1 = 0 stereographically
turns it into the flat Poisson problem Delta u + e^{2 phi} = 0, with the
chart's conformal factor as right-hand side.  When rho^beta = (e^{2 phi})^beta
is concave on the image of the domain - which for the unit sphere happens
exactly on |x|^2 < 1/(1 + 4 beta) - Kennington's theorem makes
u^{beta/(1+2 beta)} concave, so in particular every level set of u is convex
and connected.  This module solves the projected problem, evaluates the
closed-form Hessian eigenvalues of rho^beta, exposes the circumradius
threshold 2 arctan(1/(1+4 beta)), and runs the discrete concavity check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse.csgraph as csgraph
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .concavity import ConcavityReport, LogHessianField, concavity_report, power_hessian_field
from .domains import AnalyticBoundary, Domain2D, _circle_through, circumradius, is_convex_wrt, spherical_cap
from .errors import NumericalError, UsageError
from .fields import ScalarField
from .geometry import SPHERE, ConformalChart, distance
from .mesh import TriMesh, assemble, evaluate_at_midpoints, load_vector, triangulate


@dataclass
class TorsionSolution:
    u: np.ndarray
    mesh: TriMesh
    chart: ConformalChart
    beta: float = 1.0
    residual: float = 0.0

    @property
    def max_value(self) -> float:
        return float(np.max(self.u))

    def to_json(self) -> dict:
        return {
            "max_u": self.max_value,
            "residual": self.residual,
            "h": self.mesh.h_max,
            "n_vertices": self.mesh.n_vertices,
            "beta": self.beta,
        }

    def save_fields_csv(self, path: str) -> str:
        data = np.column_stack([self.mesh.vertices, self.u])
        np.savetxt(path, data, delimiter=",", header="x,y,u", comments="")
        return path


def recenter_to_pole(domain: Domain2D) -> Domain2D:
    """Rotate the sphere so the domain's circumcenter sits at the chart origin.

    The chart projects from the pole antipodal to the origin, so after this
    rotation the domain surrounds the projection pole's antipode and stays
    well inside the coordinate disk.  Rotations act on the stereographic
    coordinate z (as a complex number) by z -> (z - c) / (1 + conj(c) z / R^2),
    which sends the circumcenter c to 0; the map is checked to preserve a
    sample of pairwise geodesic distances.
    """
    if domain.chart.model != SPHERE:
        raise UsageError("recentering rotates the sphere; the chart must be "
                         "stereographic_sphere")
    R = domain.chart.radius
    _, center = circumradius(domain)
    if float(np.hypot(*center)) <= 1e-12 * max(1.0, domain.euclidean_extent()):
        return domain
    c = complex(center[0], center[1])
    z = domain.vertices[:, 0] + 1j * domain.vertices[:, 1]
    w = (z - c) / (1.0 + np.conj(c) * z / R**2)
    verts = np.column_stack([w.real, w.imag])
    k = min(8, len(verts) // 2)
    old = distance(domain.chart, domain.vertices[:k], domain.vertices[k:2 * k])
    new = distance(domain.chart, verts[:k], verts[k:2 * k])
    if not np.allclose(old, new, rtol=0.0, atol=1e-10 * max(1.0, float(np.max(old)))):
        raise NumericalError("sphere recentering failed to preserve distances")
    analytic = None
    if domain.analytic is not None and domain.analytic.kind == "circle":
        n = len(verts)
        _, rad = _circle_through(verts[0], verts[n // 3], verts[2 * n // 3])
        analytic = AnalyticBoundary("circle", {"radius": float(rad)})
    return Domain2D(domain.chart, verts, analytic=analytic, name=domain.name)


def solve_torsion(domain: Domain2D, h_target: Optional[float] = None,
                  rhs: ScalarField | float | None = None,
                  beta: float = 1.0, check_convexity: bool = True) -> TorsionSolution:
    """P1 solve of Delta u + rhs = 0, u = 0 on the boundary, in the flat chart.

    The default right-hand side is the chart's conformal factor, which makes
    u the metric-level torsion function (Delta_chart u + 1 = 0).  Spherical
    domains are first recentered so their circumcenter sits at the chart
    origin.  The algebraic residual of the linear solve is certified <= 1e-10.
    """
    if domain.chart.model == SPHERE:
        domain = recenter_to_pole(domain)
    chart = domain.chart
    if check_convexity:
        cert = is_convex_wrt(domain, chart)
        if not cert:
            raise UsageError(
                f"torsion domain must be convex in its chart; min curvature "
                f"{cert.min_geodesic_curvature:.4g}, reflex corners {cert.reflex_corners}")
    if h_target is None:
        h_target = domain.euclidean_extent() / 24.0
    mesh = triangulate(domain, h_target)

    if rhs is None:
        phi = chart.phi
        rhs_field = ScalarField.from_callable(lambda pts: np.exp(2.0 * phi.fn(pts)),
                                              name="conformal_factor")
    elif np.isscalar(rhs):
        rhs_field = ScalarField.constant(float(rhs))
    else:
        rhs_field = rhs

    system = assemble(mesh)
    f_q = evaluate_at_midpoints(mesh, rhs_field)
    load = load_vector(mesh, f_q)[system.index_map]
    try:
        lu = spla.splu(system.A.tocsc())
    except RuntimeError as exc:
        raise NumericalError(f"stiffness factorization failed: {exc}") from exc
    u_int = lu.solve(load)
    res = float(np.linalg.norm(system.A @ u_int - load) / max(np.linalg.norm(load), 1e-300))
    if res > 1e-10:
        raise NumericalError(f"torsion solve residual {res:.3e} exceeds 1e-10")
    if np.min(u_int) <= 0.0:
        raise NumericalError("torsion solution is not positive in the interior")

    u = np.zeros(mesh.n_vertices)
    u[system.index_map] = u_int
    return TorsionSolution(u=u, mesh=mesh, chart=chart, beta=beta, residual=res)


def center_value(sol: TorsionSolution, patch_factor: float = 5.0) -> float:
    """Superconvergent estimate of u at the chart origin.

    A least-squares quadratic over the vertices within ``patch_factor * h`` of
    the origin averages out the O(h^2) interpolation roughness of single
    nodal values; the recovered constant term is what radial-oracle
    comparisons should use.
    """
    V = sol.mesh.vertices
    r = np.linalg.norm(V, axis=1)
    m = r <= patch_factor * sol.mesh.h_target
    if int(np.sum(m)) < 8:
        raise NumericalError(f"only {int(np.sum(m))} vertices within the "
                             f"recovery patch; decrease h or widen the patch")
    X = np.column_stack([np.ones(int(m.sum())), V[m, 0], V[m, 1],
                         V[m, 0] ** 2, V[m, 0] * V[m, 1], V[m, 1] ** 2])
    coef, *_ = np.linalg.lstsq(X, sol.u[m], rcond=None)
    return float(coef[0])


def kennington_exponent(beta: float) -> float:
    return beta / (1.0 + 2.0 * beta)


def power_concavity_check(sol: TorsionSolution, beta: float = 1.0,
                          margin: Optional[float] = None) -> ConcavityReport:
    """Discrete concavity verdict for w = u^{beta/(1+2 beta)} in the flat chart."""
    if beta < 1.0:
        raise UsageError("beta must be >= 1")
    field = power_field(sol, beta, margin=margin)
    return concavity_report(field)


def power_field(sol: TorsionSolution, beta: float,
                margin: Optional[float] = None) -> LogHessianField:
    exponent = kennington_exponent(beta)
    return power_hessian_field(sol.u, sol.mesh, exponent,
                               connection=ConformalChart.euclidean(), margin=margin)


def rho_beta_hessian_eigs(x, beta: float):
    """Closed-form flat-Hessian eigenvalues of rho^beta, rho = 4/(1+|x|^2)^2.

    e1 = -4^{1+beta} beta / (1+s)^{1+2 beta}            (tangential)
    e2 = 4^{1+beta} beta ((1+4 beta) s - 1) / (1+s)^{2(1+beta)}   (radial)

    with s = |x|^2; both are negative exactly when s < 1/(1+4 beta).
    """
    if beta < 1.0:
        raise UsageError("beta must be >= 1")
    x = np.asarray(x, dtype=float)
    s = float(x[0] ** 2 + x[1] ** 2) if x.ndim == 1 else np.einsum("...i,...i->...", x, x)
    e1 = -(4.0 ** (1.0 + beta)) * beta / (1.0 + s) ** (1.0 + 2.0 * beta)
    e2 = (4.0 ** (1.0 + beta)) * beta * ((1.0 + 4.0 * beta) * s - 1.0) \
        / (1.0 + s) ** (2.0 * (1.0 + beta))
    return e1, e2


def circumradius_threshold(beta: float) -> float:
    """Spherical circumradius below which rho^beta is concave on the image.

    2 arctan(1/(1+4 beta)): a geodesic ball of this radius about the chart
    origin projects into the coordinate disk |x| < 1/(1+4 beta), inside the
    region where both Hessian eigenvalues of rho^beta are negative.
    """
    if beta < 1.0:
        raise UsageError("beta must be >= 1")
    return 2.0 * math.atan(1.0 / (1.0 + 4.0 * beta))


def cap_for_beta(beta: float, fraction: float = 0.9, n: int = 256) -> Domain2D:
    """Unit-sphere cap comfortably inside the concavity threshold."""
    if not 0.0 < fraction <= 1.0:
        raise UsageError("fraction must lie in (0, 1]")
    return spherical_cap(1.0, fraction * circumradius_threshold(beta), n=n,
                         name=f"cap_beta_{beta:g}")


# ---------------------------------------------------------------------------
# level-set diagnostics
# ---------------------------------------------------------------------------
def level_set_components(sol: TorsionSolution, n_levels: int = 10) -> dict:
    """Count mesh-connected components of each superlevel set {u >= c}.

    Concavity of any positive power of u forces every superlevel set to be
    connected; one component per level is the discrete signature.
    """
    mesh, u = sol.mesh, sol.u
    edges = mesh.edges()
    levels = np.linspace(0.0, sol.max_value, n_levels + 2)[1:-1]
    counts = []
    for c in levels:
        keep = u >= c
        if not np.any(keep):
            counts.append(0)
            continue
        sub_edges = edges[keep[edges[:, 0]] & keep[edges[:, 1]]]
        idx = np.nonzero(keep)[0]
        remap = -np.ones(mesh.n_vertices, dtype=np.int64)
        remap[idx] = np.arange(len(idx))
        n = len(idx)
        if len(sub_edges):
            rows = remap[sub_edges[:, 0]]
            cols = remap[sub_edges[:, 1]]
            adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            ncomp, _ = csgraph.connected_components(adj, directed=False)
        else:
            ncomp = n
        counts.append(int(ncomp))
    return {
        "levels": [float(c) for c in levels],
        "components": counts,
        "all_connected": all(c == 1 for c in counts),
    }


def level_curve_curvature(field: LogHessianField, grad_floor: float = 0.1) -> dict:
    """Signed curvature of the level curves of the fitted field.

    kappa = -(w_xx w_y^2 - 2 w_x w_y w_xy + w_yy w_x^2) / |grad w|^3, positive
    when superlevel sets are convex; vertices where |grad w| falls below
    ``grad_floor`` times its maximum (the flat top around the max) are skipped.
    """
    g = field.grad_flat
    H = field.hess_flat
    gnorm = np.linalg.norm(g, axis=1)
    mask = gnorm >= grad_floor * float(np.max(gnorm))
    if not np.any(mask):
        raise NumericalError("gradient floor excluded every vertex")
    wx, wy = g[mask, 0], g[mask, 1]
    wxx, wxy, wyy = H[mask, 0], H[mask, 1], H[mask, 2]
    num = wxx * wy**2 - 2.0 * wx * wy * wxy + wyy * wx**2
    kappa = -num / gnorm[mask] ** 3
    i = int(np.argmin(kappa))
    return {
        "kappa": kappa,
        "points": field.points[mask],
        "min_kappa": float(kappa[i]),
        "min_point": field.points[mask][i],
        "n_checked": int(np.sum(mask)),
    }
