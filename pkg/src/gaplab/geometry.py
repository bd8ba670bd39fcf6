"""Conformal charts on 2D model geometries and conformal-change formulas.

Everything is computed in a single flat coordinate chart carrying a conformal
metric ``g = e^{2 phi} (dx1^2 + dx2^2)``.  Three base models are supported:

* ``euclidean_plane`` — phi = 0;
* ``poincare_disk`` — phi = log(2 / (1 - |x|^2)) on the open unit disk,
  constant curvature -1;
* ``stereographic_sphere`` — phi = log(2 R^2 / (R^2 + |x|^2)), the
  stereographic chart of the radius-R sphere, constant curvature 1/R^2.

An optional extra conformal deformation ``phi_extra`` multiplies the base
metric by ``e^{2 phi_extra}``.  The change-of-metric formulas implemented here
(Hessian, Laplacian, Schrodinger normal form, boundary principal curvature)
are exactly the ones a conformal rescaling induces; they are exercised against
independent geodesic/finite-difference oracles in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import sympy as sp

from .errors import GeometryError, NumericalError, UsageError
from .fields import X1, X2, ScalarField, _as_points, parse_expression

EUCLIDEAN = "euclidean_plane"
POINCARE = "poincare_disk"
SPHERE = "stereographic_sphere"
_MODELS = (EUCLIDEAN, POINCARE, SPHERE)

_MODEL_ALIASES = {
    "euclidean": EUCLIDEAN,
    "euclideanplane": EUCLIDEAN,
    "plane": EUCLIDEAN,
    "poincaredisk": POINCARE,
    "disk": POINCARE,
    "hyperbolic": POINCARE,
    "stereographicsphere": SPHERE,
    "sphere": SPHERE,
}


# ---------------------------------------------------------------------------
# small symmetric matrices
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SymMatrix2:
    """A 2x2 symmetric matrix with entries (a11, a12, a22)."""

    a11: float
    a12: float
    a22: float

    def eig2(self) -> Tuple[float, float]:
        """Closed-form eigenvalues, ascending."""
        m = 0.5 * (self.a11 + self.a22)
        d = math.hypot(0.5 * (self.a11 - self.a22), self.a12)
        return (m - d, m + d)

    def trace(self) -> float:
        return self.a11 + self.a22

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def quad(self, x) -> float:
        """Quadratic form x^T A x."""
        x = np.asarray(x, dtype=float)
        return float(self.a11 * x[0] ** 2 + 2 * self.a12 * x[0] * x[1] + self.a22 * x[1] ** 2)

    @classmethod
    def from_components(cls, comp) -> "SymMatrix2":
        return cls(float(comp[0]), float(comp[1]), float(comp[2]))


def sym_eigvals(comp: np.ndarray) -> np.ndarray:
    """Vectorized eigenvalues of symmetric components (..., 3), ascending."""
    m = 0.5 * (comp[..., 0] + comp[..., 2])
    d = np.hypot(0.5 * (comp[..., 0] - comp[..., 2]), comp[..., 1])
    return np.stack([m - d, m + d], axis=-1)


def sym_eigmax_dir(comp: np.ndarray) -> np.ndarray:
    """Unit eigenvector for the largest eigenvalue of (h11, h12, h22)."""
    lam = sym_eigvals(comp)[..., 1]
    vx = comp[..., 1]
    vy = lam - comp[..., 0]
    deg = np.hypot(vx, vy) < 1e-300
    vx = np.where(deg, 1.0, vx)
    vy = np.where(deg, 0.0, vy)
    n = np.hypot(vx, vy)
    return np.stack([vx / n, vy / n], axis=-1)


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------
@dataclass
class ConformalChart:
    """A conformally flat coordinate chart ``g = e^{2 phi} dx^2``."""

    model: str
    radius: Optional[float] = None
    phi_extra: Optional[ScalarField] = None
    _phi: ScalarField = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        key = str(self.model).replace("_", "").replace("-", "").lower()
        model = _MODEL_ALIASES.get(key, self.model)
        if model not in _MODELS:
            raise UsageError(f"unknown chart model {self.model!r}; expected one of {_MODELS}")
        self.model = model
        if model == SPHERE:
            if self.radius is None or not (self.radius > 0):
                raise UsageError("stereographic_sphere chart requires a positive radius R")
            self.radius = float(self.radius)
        else:
            self.radius = None
        base = self._base_phi_expr()
        phi = ScalarField.from_expression(base, name="phi") if base != 0 else ScalarField.constant(0.0)
        if self.phi_extra is not None:
            phi = phi + self.phi_extra
        self._phi = phi

    # -- constructors -------------------------------------------------------
    @classmethod
    def euclidean(cls, phi_extra: Optional[ScalarField] = None) -> "ConformalChart":
        return cls(EUCLIDEAN, phi_extra=phi_extra)

    @classmethod
    def poincare_disk(cls, phi_extra: Optional[ScalarField] = None) -> "ConformalChart":
        return cls(POINCARE, phi_extra=phi_extra)

    @classmethod
    def stereographic_sphere(cls, R: float, phi_extra: Optional[ScalarField] = None) -> "ConformalChart":
        return cls(SPHERE, radius=R, phi_extra=phi_extra)

    def _base_phi_expr(self):
        s = X1**2 + X2**2
        if self.model == EUCLIDEAN:
            return 0
        if self.model == POINCARE:
            return sp.log(2 / (1 - s))
        R = sp.Float(self.radius)
        return sp.log(2 * R**2 / (R**2 + s))

    # -- basic queries --------------------------------------------------------
    @property
    def phi(self) -> ScalarField:
        """Total log-conformal factor (base model + extra deformation)."""
        return self._phi

    @property
    def curvature(self) -> float:
        """Gaussian curvature of the base model (0, -1, or 1/R^2).

        Raises for deformed charts, whose curvature is not constant.
        """
        if self.phi_extra is not None:
            raise UsageError("curvature of a deformed chart is not constant")
        if self.model == EUCLIDEAN:
            return 0.0
        if self.model == POINCARE:
            return -1.0
        return 1.0 / self.radius**2

    def check_points(self, pts: np.ndarray) -> None:
        if self.model == POINCARE:
            r2 = np.einsum("...i,...i->...", pts, pts)
            if np.any(r2 >= 1.0):
                bad = np.asarray(pts).reshape(-1, 2)[np.argmax(np.atleast_1d(r2))]
                raise GeometryError(f"point {bad} lies outside the open unit disk")

    # -- serialization --------------------------------------------------------
    def to_json(self) -> dict:
        out = {"model": self.model}
        if self.model == SPHERE:
            out["R"] = self.radius
        if self.phi_extra is not None:
            out["phi"] = self.phi_extra.to_expression_string()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ConformalChart":
        if not isinstance(data, dict) or "model" not in data:
            raise UsageError("chart JSON must be an object with a 'model' key")
        phi_extra = None
        if data.get("phi"):
            phi_extra = ScalarField.from_expression(parse_expression(data["phi"]))
        return cls(data["model"], radius=data.get("R"), phi_extra=phi_extra)


# ---------------------------------------------------------------------------
# conformal-change operations
# ---------------------------------------------------------------------------
def conformal_factor(chart: ConformalChart, x):
    """The metric multiplier e^{2 phi(x)} relative to flat coordinates."""
    pts, single = _as_points(x)
    chart.check_points(pts)
    out = np.exp(2.0 * chart.phi.fn(pts))
    return float(out[0]) if single else out


def conformal_hessian(hess_g: SymMatrix2, grad_F, grad_phi, g_at_x: SymMatrix2) -> SymMatrix2:
    """Hessian of F after the conformal change g -> e^{2 phi} g (pure algebra).

    ``Hess_new F = hess_g - dphi (x) dF - dF (x) dphi + <grad phi, grad F>_g g``
    where all gradients are coordinate partials and the inner product is
    taken with the base metric ``g_at_x``.
    """
    gF = np.asarray(grad_F, dtype=float)
    gp = np.asarray(grad_phi, dtype=float)
    G = g_at_x.as_matrix()
    inner = float(gp @ np.linalg.solve(G, gF))
    return SymMatrix2(
        hess_g.a11 - 2.0 * gp[0] * gF[0] + inner * g_at_x.a11,
        hess_g.a12 - (gp[0] * gF[1] + gp[1] * gF[0]) + inner * g_at_x.a12,
        hess_g.a22 - 2.0 * gp[1] * gF[1] + inner * g_at_x.a22,
    )


def chart_hessian_components(chart: ConformalChart, F: ScalarField, pts: np.ndarray) -> np.ndarray:
    """Coordinate components (h11, h12, h22) of the chart-connection Hessian.

    For ``g = e^{2 phi} dx^2`` the Levi-Civita Hessian of F in flat
    coordinates is ``Hess_flat F - dphi (x) dF - dF (x) dphi +
    (grad phi . grad F) I`` with flat gradients throughout (the identity in
    the last term because flat coordinates make the base metric Euclidean).
    """
    pts = np.asarray(pts, dtype=float)
    chart.check_points(pts)
    Hf = F.hess(pts)
    gF = F.grad(pts)
    gp = chart.phi.grad(pts)
    return correct_hessian_components(chart, pts, Hf, gF, grad_phi=gp)


def correct_hessian_components(chart: ConformalChart, pts: np.ndarray, hess_flat: np.ndarray,
                               grad_flat: np.ndarray, grad_phi: Optional[np.ndarray] = None) -> np.ndarray:
    """Apply the flat -> chart connection correction to raw Hessian components."""
    if grad_phi is None:
        grad_phi = chart.phi.grad(pts)
    dot = np.einsum("...i,...i->...", grad_phi, grad_flat)
    out = np.array(hess_flat, copy=True, dtype=float)
    out[..., 0] += -2 * grad_phi[..., 0] * grad_flat[..., 0] + dot
    out[..., 1] += -(grad_phi[..., 0] * grad_flat[..., 1] + grad_phi[..., 1] * grad_flat[..., 0])
    out[..., 2] += -2 * grad_phi[..., 1] * grad_flat[..., 1] + dot
    return out


def chart_hessian(chart: ConformalChart, F: ScalarField, x) -> SymMatrix2:
    """Hessian of F with respect to the chart's Levi-Civita connection at x."""
    pts, _ = _as_points(x)
    comp = chart_hessian_components(chart, F, pts)
    return SymMatrix2.from_components(comp[0])


@dataclass(frozen=True)
class LaplacianCoeffs:
    """Coefficients expressing the curved Laplacian in flat terms:

    ``Delta_chart F = multiplier * (Delta_flat F + drift . grad_flat F)``
    with ``multiplier = e^{-2 phi}`` and ``drift = (n - 2) grad phi``.
    """

    multiplier: Callable[[np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray], np.ndarray]
    dim: int

    def apply(self, F: ScalarField, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        lap = F.laplacian(pts)
        dotted = np.einsum("...i,...i->...", self.drift(pts), F.grad(pts))
        return self.multiplier(pts) * (lap + dotted)


def conformal_laplacian_coeffs(chart: ConformalChart, n: int = 2) -> LaplacianCoeffs:
    if n < 2:
        raise UsageError("dimension must be >= 2")

    def mult(pts):
        chart.check_points(pts)
        return np.exp(-2.0 * chart.phi.fn(pts))

    def drift(pts):
        if n == 2:
            return np.zeros(np.asarray(pts).shape)
        return (n - 2) * chart.phi.grad(pts)

    return LaplacianCoeffs(multiplier=mult, drift=drift, dim=n)


def schrodinger_transform(chart: ConformalChart, rho_tilde: ScalarField | float = 1.0,
                          n: int = 2) -> Tuple[ScalarField, ScalarField]:
    """Schrodinger normal form of the conformally deformed eigenproblem.

    Rewrites the weighted eigenvalue problem of the metric
    ``e^{2 phi} g_flat`` as ``-Delta_flat u + V u = lambda rho u`` with

    ``V = ((n-2)^2 / 4) |grad phi|^2 + ((n-2)/2) Delta_flat phi`` and
    ``rho = rho_tilde * e^{2 phi}``.

    In two dimensions V vanishes identically: a conformal change only moves
    the weight.
    """
    if np.isscalar(rho_tilde):
        rho_tilde = ScalarField.constant(float(rho_tilde))
    phi = chart.phi
    if n == 2:
        V = ScalarField.constant(0.0, name="V=0")
    elif phi.expr is not None:
        g1, g2 = sp.diff(phi.expr, X1), sp.diff(phi.expr, X2)
        lap = sp.diff(g1, X1) + sp.diff(g2, X2)
        Vexpr = sp.Rational((n - 2) ** 2, 4) * (g1**2 + g2**2) + sp.Rational(n - 2, 2) * lap
        V = ScalarField.from_expression(Vexpr, name="V")
    else:
        c1, c2 = (n - 2) ** 2 / 4.0, (n - 2) / 2.0

        def val(pts):
            g = phi.grad(pts)
            return c1 * np.einsum("...i,...i->...", g, g) + c2 * phi.laplacian(pts)

        V = ScalarField.from_callable(val, name="V")

    if phi.expr is not None and rho_tilde.expr is not None:
        rho = ScalarField.from_expression(rho_tilde.expr * sp.exp(2 * phi.expr), name="rho")
    else:
        exp2phi = ScalarField.from_callable(
            lambda pts: np.exp(2.0 * phi.fn(pts)),
            grad_fn=lambda pts: 2.0 * np.exp(2.0 * phi.fn(pts))[..., None] * phi.grad(pts),
            hess_fn=None,
        )
        rho = rho_tilde * exp2phi
    return V, rho


def principal_curvature_transform(chart: ConformalChart, x, kappa: float, dphi_dN: float) -> float:
    """Boundary geodesic curvature under the conformal change g -> e^{2 phi} g.

    ``kappa`` is the curvature with respect to the base (flat) metric at the
    boundary point x, ``dphi_dN`` the flat outward-normal derivative of phi;
    the curved-metric curvature is ``e^{-phi} (kappa + dphi_dN)``.
    """
    pts, _ = _as_points(x)
    chart.check_points(pts)
    return float(math.exp(-chart.phi.value(pts[0])) * (kappa + dphi_dN))


# ---------------------------------------------------------------------------
# distances, embeddings, geodesics
# ---------------------------------------------------------------------------
def _require_base_model(chart: ConformalChart, what: str) -> None:
    if chart.phi_extra is not None:
        raise UsageError(f"{what} is only available for the undeformed base models")


def distance(chart: ConformalChart, p, q):
    """Geodesic distance between points (broadcasts over leading axes)."""
    _require_base_model(chart, "geodesic distance")
    P = np.asarray(p, dtype=float)
    Q = np.asarray(q, dtype=float)
    if P.shape[-1:] != (2,) or Q.shape[-1:] != (2,):
        raise UsageError(f"points must have trailing dimension 2, "
                         f"got {P.shape} and {Q.shape}")
    singleP, singleQ = P.ndim == 1, Q.ndim == 1
    chart.check_points(P.reshape(-1, 2))
    chart.check_points(Q.reshape(-1, 2))
    if chart.model == EUCLIDEAN:
        out = np.linalg.norm(P - Q, axis=-1)
    elif chart.model == POINCARE:
        d2 = np.einsum("...i,...i->...", P - Q, P - Q)
        den = (1.0 - np.einsum("...i,...i->...", P, P)) * (1.0 - np.einsum("...i,...i->...", Q, Q))
        out = np.arccosh(1.0 + np.maximum(0.0, 2.0 * d2 / den))
    else:
        R = chart.radius
        A = _embed(chart, P)
        B = _embed(chart, Q)
        chord = np.linalg.norm(A - B, axis=-1)
        out = 2.0 * R * np.arcsin(np.clip(chord / (2.0 * R), -1.0, 1.0))
    if singleP and singleQ:
        return float(out if np.ndim(out) == 0 else out[0])
    return out


def _embed(chart: ConformalChart, pts: np.ndarray) -> np.ndarray:
    """Model-space embedding: plane -> z=0, disk -> hyperboloid, sphere -> R^3."""
    pts = np.asarray(pts, dtype=float)
    s = np.einsum("...i,...i->...", pts, pts)
    if chart.model == EUCLIDEAN:
        return np.concatenate([pts, np.zeros(pts.shape[:-1] + (1,))], axis=-1)
    if chart.model == POINCARE:
        den = (1.0 - s)[..., None]
        xy = 2.0 * pts / den
        t = ((1.0 + s) / (1.0 - s))[..., None]
        return np.concatenate([xy, t], axis=-1)
    R = chart.radius
    den = (R**2 + s)[..., None]
    xy = 2.0 * R**2 * pts / den
    z = (R * (s - R**2) / (R**2 + s))[..., None]
    return np.concatenate([xy, z], axis=-1)


def _unembed(chart: ConformalChart, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if chart.model == EUCLIDEAN:
        return y[..., :2]
    if chart.model == POINCARE:
        return y[..., :2] / (1.0 + y[..., 2])[..., None]
    R = chart.radius
    return R * y[..., :2] / (R - y[..., 2])[..., None]


def _lorentz(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] - a[..., 2] * b[..., 2]


def geodesic_point(chart: ConformalChart, p, q, t: float) -> np.ndarray:
    """Point at parameter t in [0, 1] along the geodesic from p to q."""
    _require_base_model(chart, "geodesic interpolation")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if chart.model == EUCLIDEAN:
        return (1 - t) * p + t * q
    a = _embed(chart, p)
    b = _embed(chart, q)
    if chart.model == POINCARE:
        d = math.acosh(max(1.0, -float(_lorentz(a, b))))
        if d < 1e-14:
            return p.copy()
        y = (math.sinh((1 - t) * d) * a + math.sinh(t * d) * b) / math.sinh(d)
        y = y / math.sqrt(max(1e-300, -float(_lorentz(y, y))))
        return _unembed(chart, y)
    R = chart.radius
    cosang = float(np.dot(a, b)) / R**2
    ang = math.acos(min(1.0, max(-1.0, cosang)))
    if ang < 1e-14:
        return p.copy()
    y = (math.sin((1 - t) * ang) * a + math.sin(t * ang) * b) / math.sin(ang)
    y = y * (R / np.linalg.norm(y))
    return _unembed(chart, y)


def circumcenter3(chart: ConformalChart, a, b, c) -> Optional[np.ndarray]:
    """Model-space circumcenter of three points, or None when degenerate."""
    _require_base_model(chart, "circumcenter")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if chart.model == EUCLIDEAN:
        d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-14 * max(1.0, np.abs([a, b, c]).max()) ** 2:
            return None
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
        return np.array([ux, uy])
    A, B, C = _embed(chart, a), _embed(chart, b), _embed(chart, c)
    u, v = A - B, A - C
    w = np.cross(u, v)
    if chart.model == POINCARE:
        w = np.array([w[0], w[1], -w[2]])
        norm2 = float(_lorentz(w, w))
        if norm2 >= -1e-28:
            return None  # equidistant locus meets the boundary: no hyperbolic center
        y = w / math.sqrt(-norm2)
        if y[2] < 0:
            y = -y
        return _unembed(chart, y)
    R = chart.radius
    n = np.linalg.norm(w)
    if n < 1e-20:
        return None
    y = w / n * R
    # two antipodal candidates; compare chords in the embedding (unembedding
    # the far candidate can hit the projection pole), keep the nearer center
    if np.linalg.norm(-y - A) < np.linalg.norm(y - A):
        y = -y
    if y[2] > R * (1.0 - 1e-12):
        return None  # center at the projection pole: not representable
    return _unembed(chart, y)


# ---------------------------------------------------------------------------
# Mobius recentering of hyperbolic domains
# ---------------------------------------------------------------------------
def _mobius_apply(z: np.ndarray, center: complex, target: complex) -> np.ndarray:
    w = (z - center) / (1.0 - np.conj(center) * z)
    return (w + target) / (1.0 + np.conj(target) * w)


def mobius_recenter(domain, target=(0.0, 0.0)):
    """Disk automorphism carrying the domain's hyperbolic circumcenter to target.

    Returns a new domain over the same Poincare chart; all pairwise hyperbolic
    distances are preserved (the map is an isometry).
    """
    from .domains import circumradius  # local import to avoid a module cycle

    chart = domain.chart
    if chart.model != POINCARE:
        raise UsageError("mobius_recenter requires a poincare_disk chart")
    _require_base_model(chart, "mobius recentering")
    if np.max(np.sum(domain.vertices ** 2, axis=1)) >= (1.0 - 1e-12) ** 2:
        raise GeometryError("domain touches the unit circle; recentering is ill-posed")
    _, center = circumradius(domain)
    z = domain.vertices[:, 0] + 1j * domain.vertices[:, 1]
    c = complex(center[0], center[1])
    t = complex(float(target[0]), float(target[1]))
    if abs(t) >= 1.0:
        raise GeometryError("target center must lie in the open unit disk")
    w = _mobius_apply(z, c, t)
    verts = np.column_stack([w.real, w.imag])
    return domain.with_vertices(verts)
