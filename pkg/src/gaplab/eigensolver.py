"""Lowest Dirichlet eigenpairs of -Delta u + V u = lambda rho u on a mesh.

The solver is deterministic shift-invert block iteration: factor A - sigma*B
once with a sparse LU (sigma = 0 while A is safely positive definite, a
Gershgorin-based negative shift otherwise), push a fixed starting block
through the inverse, B-orthonormalize via a Cholesky of the small Gram
matrix, and take Rayleigh-Ritz values.  Convergence is declared on explicit
residual norms ||A u - lambda B u|| / ||B u|| <= 1e-9, so a returned result
is certified rather than assumed.  No randomness anywhere: repeated runs are
bit-identical.

``fundamental_gap`` wraps two solves at spacings h and h/2 with Richardson
extrapolation (P1 eigenvalue error is O(h^2), so (4*g2 - g1)/3 cancels the
leading term).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .domains import Domain2D
from .errors import NumericalError, UsageError
from .fields import ScalarField, parse_expression
from .geometry import schrodinger_transform
from .mesh import (AssembledSystem, TriMesh, assemble, interpolate_at_midpoints,
                   mass_with_coefficient, stiffness_with_coefficient, triangulate)

RESIDUAL_TOL = 1e-9
MAX_ITERATIONS = 500


@dataclass
class WeightedProblem:
    """Dirichlet problem -Delta u + V u = lambda rho u in flat coordinates.

    ``rho`` is the *total* flat weight (for a conformal metric with relative
    weight rho_tilde this is rho_tilde * e^{2 phi}); ``from_chart`` builds
    that product and remembers the relative weight for family deformations.
    """

    domain: Domain2D
    V: ScalarField = field(default_factory=lambda: ScalarField.constant(0.0))
    rho: ScalarField = field(default_factory=lambda: ScalarField.constant(1.0))
    bc: str = "dirichlet"
    rho_rel: Optional[ScalarField] = None
    name: str = "problem"

    def __post_init__(self):
        if self.bc not in ("dirichlet", "neumann"):
            raise UsageError(f"unsupported boundary condition {self.bc!r}")

    @property
    def chart(self):
        return self.domain.chart

    @classmethod
    def from_chart(cls, domain: Domain2D, rho_tilde: ScalarField | float = 1.0,
                   name: str = "problem") -> "WeightedProblem":
        """Laplace-Beltrami weight of the domain's chart times a relative weight."""
        if np.isscalar(rho_tilde):
            rho_tilde = ScalarField.constant(float(rho_tilde))
        V, rho = schrodinger_transform(domain.chart, rho_tilde=rho_tilde)
        return cls(domain=domain, V=V, rho=rho, rho_rel=rho_tilde, name=name)

    @classmethod
    def from_json(cls, payload: dict) -> "WeightedProblem":
        if payload.get("schema", 1) != 1:
            raise UsageError(f"unsupported problem schema {payload.get('schema')!r}")
        if "domain" not in payload:
            raise UsageError("problem JSON needs a 'domain' object")
        domain = Domain2D.from_json(payload["domain"])
        rho_rel: ScalarField | float = 1.0
        if "rho" in payload:
            rho_rel = ScalarField.from_expression(parse_expression(payload["rho"]), name="rho")
        prob = cls.from_chart(domain, rho_tilde=rho_rel, name=payload.get("name", "problem"))
        if "V" in payload:
            extra = ScalarField.from_expression(parse_expression(payload["V"]), name="V")
            prob = cls(domain=domain, V=prob.V + extra, rho=prob.rho,
                       rho_rel=prob.rho_rel, name=prob.name)
        return prob

    @classmethod
    def load(cls, path: str) -> "WeightedProblem":
        if not os.path.exists(path):
            raise UsageError(f"problem file not found: {path}")
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"problem file {path} is not valid JSON: {exc}") from exc
        return cls.from_json(payload)


@dataclass
class EigenResult:
    values: np.ndarray          # ascending
    vectors: np.ndarray         # (N, k) on the full mesh, zero on the boundary
    residuals: np.ndarray       # ||A u - lambda B u|| / ||B u|| per pair
    iterations: int
    mesh: TriMesh
    system: AssembledSystem

    @property
    def lambda1(self) -> float:
        return float(self.values[0])

    @property
    def lambda2(self) -> float:
        return float(self.values[1])

    @property
    def gap(self) -> float:
        return float(self.values[1] - self.values[0])

    @property
    def u1(self) -> np.ndarray:
        return self.vectors[:, 0]

    @property
    def u2(self) -> np.ndarray:
        return self.vectors[:, 1]

    @property
    def residual1(self) -> float:
        return float(self.residuals[0])

    @property
    def residual2(self) -> float:
        return float(self.residuals[1])

    @property
    def mesh_h(self) -> float:
        return self.mesh.h_max

    def to_json(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2 if len(self.values) > 1 else None,
            "gap": self.gap if len(self.values) > 1 else None,
            "residuals": [float(r) for r in self.residuals],
            "h": self.mesh_h,
            "n_vertices": self.mesh.n_vertices,
            "iterations": self.iterations,
        }

    def save_fields_csv(self, path: str) -> str:
        cols = [self.mesh.vertices[:, 0], self.mesh.vertices[:, 1]]
        cols.extend(self.vectors[:, j] for j in range(self.vectors.shape[1]))
        names = ["x", "y"] + [f"u{j + 1}" for j in range(self.vectors.shape[1])]
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header=",".join(names), comments="")
        return path


def _start_block(n: int, m: int) -> np.ndarray:
    """Fixed, full-rank starting block (no RNG: runs must be reproducible)."""
    X = np.ones((n, m))
    X[0, 0] += 1e-3
    idx = np.arange(n)
    for j in range(1, m):
        X[:, j] = np.cos(np.pi * j * (idx + 0.5) / n)
    return X


def _gershgorin_min(A) -> float:
    diag = A.diagonal()
    absA = abs(A)
    radii = np.asarray(absA.sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radii))


def solve_lowest(system: AssembledSystem, k: int = 2, tol: float = RESIDUAL_TOL,
                 max_iter: int = MAX_ITERATIONS) -> EigenResult:
    """Lowest ``k`` eigenpairs of A u = lambda B u by shift-invert block iteration."""
    if k not in (1, 2, 3):
        raise UsageError("k must be 1, 2, or 3")
    A, B = system.A, system.B
    n = A.shape[0]
    m = k + 2
    if n < m:
        raise UsageError(f"mesh has only {n} active vertices; need at least {m}")

    # A is positive definite whenever V >= 0 (every in-scope run).  Only a
    # genuinely negative potential can push eigenvalues below zero; then shift
    # by a safe lower estimate of the pencil spectrum so the factored matrix
    # stays definite: lambda_min(A, B) >= max(min V / min rho, gersh(A)/max||B row||).
    sigma = 0.0
    vmin = 0.0 if system.V_q is None else float(np.min(system.V_q))
    if vmin < 0.0:
        rho_min = float(np.min(system.rho_q)) if system.rho_q is not None else 1.0
        est_v = vmin / max(rho_min, 1e-300)
        gmin = _gershgorin_min(A)
        b_row_max = float(np.max(np.asarray(abs(B).sum(axis=1)).ravel()))
        est_g = gmin / max(b_row_max, 1e-300) if gmin < 0.0 else 0.0
        sigma = 1.1 * min(0.0, max(est_v, est_g))
    M = (A - sigma * B).tocsc() if sigma != 0.0 else A.tocsc()
    try:
        lu = spla.splu(M)
    except RuntimeError as exc:
        raise NumericalError(f"sparse factorization failed: {exc}") from exc

    X = _start_block(n, m)
    history = []
    theta = np.zeros(m)
    theta_prev = np.full(m, np.inf)
    res = np.full(k, np.inf)
    its = 0
    for its in range(1, max_iter + 1):
        Y = lu.solve(B @ X)
        G = Y.T @ (B @ Y)
        G = 0.5 * (G + G.T)
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            Y += 1e-8 * _start_block(n, m)
            G = Y.T @ (B @ Y)
            G = 0.5 * (G + G.T)
            L = np.linalg.cholesky(G + 1e-14 * np.trace(G) * np.eye(m))
        Q = np.linalg.solve(L, Y.T).T           # B-orthonormal columns
        H = Q.T @ (A @ Q)
        H = 0.5 * (H + H.T)
        theta, S = np.linalg.eigh(H)
        X = Q @ S

        R = A @ X[:, :k] - (B @ X[:, :k]) * theta[:k]
        Bnorm = np.linalg.norm(B @ X[:, :k], axis=0)
        res = np.linalg.norm(R, axis=0) / np.maximum(Bnorm, 1e-300)
        history.append([float(r) for r in res])
        theta_change = np.abs(theta[:k] - theta_prev[:k]) / np.maximum(np.abs(theta[:k]), 1e-300)
        theta_prev = theta.copy()
        if np.all(res <= tol) and np.all(theta_change <= 1e-10):
            break
    else:
        raise NumericalError(
            f"eigeniteration did not reach residual {tol:g} in {max_iter} iterations",
            trace=history[-25:])

    values = theta[:k].copy()
    if k > 1 and not values[0] < values[1]:
        raise NumericalError(f"lambda1 is not simple: {values[:2]}")

    full = np.zeros((system.mesh.n_vertices, k))
    for j in range(k):
        v = X[:, j].copy()
        flip = (np.sum(v) < 0) if j == 0 else (v[np.argmax(np.abs(v))] < 0)
        if flip:
            v = -v
        full[system.index_map, j] = v
    u1max = float(np.max(np.abs(full[:, 0])))
    if np.any(full[:, 0] < -1e-8 * u1max):
        raise NumericalError("computed ground state changes sign in the interior")
    full[:, 0] = np.abs(full[:, 0])
    return EigenResult(values=values, vectors=full, residuals=res,
                       iterations=its, mesh=system.mesh, system=system)


def assemble_problem(problem: WeightedProblem, mesh: TriMesh) -> AssembledSystem:
    return assemble(mesh, V=problem.V, rho=problem.rho,
                    dirichlet=problem.bc == "dirichlet")


def solve_problem(problem: WeightedProblem, h_target: float, k: int = 2,
                  tol: float = RESIDUAL_TOL, mesh: Optional[TriMesh] = None) -> EigenResult:
    if mesh is None:
        mesh = triangulate(problem.domain, h_target)
    system = assemble_problem(problem, mesh)
    return solve_lowest(system, k=k, tol=tol)


@dataclass
class GapResult:
    lambda1: float               # Richardson-extrapolated values
    lambda2: float
    gap: float
    gap_coarse: float
    gap_fine: float
    h_coarse: float
    h_fine: float
    coarse: EigenResult
    fine: EigenResult

    def to_json(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "gap": self.gap_fine,
            "extrapolated_gap": self.gap,
            "gap_coarse": self.gap_coarse,
            "gap_fine": self.gap_fine,
            "h": self.h_fine,
            "h_coarse": self.h_coarse,
            "h_fine": self.h_fine,
            "residuals": [float(r) for r in self.fine.residuals],
            "n_vertices_fine": self.fine.mesh.n_vertices,
        }


def fundamental_gap(problem: WeightedProblem, h_target: float,
                    tol: float = RESIDUAL_TOL) -> GapResult:
    """Gap lambda2 - lambda1 with h -> h/2 Richardson extrapolation."""
    coarse = solve_problem(problem, h_target, k=2, tol=tol)
    fine = solve_problem(problem, 0.5 * h_target, k=2, tol=tol)
    g1, g2 = coarse.gap, fine.gap
    return GapResult(
        lambda1=float((4.0 * fine.values[0] - coarse.values[0]) / 3.0),
        lambda2=float((4.0 * fine.values[1] - coarse.values[1]) / 3.0),
        gap=float((4.0 * g2 - g1) / 3.0),
        gap_coarse=float(g1), gap_fine=float(g2),
        h_coarse=h_target, h_fine=0.5 * h_target,
        coarse=coarse, fine=fine)


def rayleigh_lower_bound(problem: WeightedProblem, mesh: TriMesh,
                         lambda1_unit: float) -> float:
    """Lower bound lambda1 >= (lambda1 at rho=1 + min V) / max rho."""
    mids = mesh.vertices[mesh.triangles].mean(axis=1)
    samples = np.vstack([mesh.vertices, mids])
    rho_max = float(np.max(problem.rho.fn(samples)))
    v_min = float(np.min(problem.V.fn(samples)))
    return (lambda1_unit + min(v_min, 0.0)) / rho_max


# ---------------------------------------------------------------------------
# cross-checks built from the first eigenfunction
# ---------------------------------------------------------------------------
def ratio_residual(result: EigenResult, system: Optional[AssembledSystem] = None) -> dict:
    """Weak-form residual of the eigenfunction ratio w = u2 / u1.

    w satisfies div(u1^2 grad w) + Gamma rho u1^2 w = 0 with natural boundary
    conditions, so K_{u1^2} w = Gamma M_{rho u1^2} w must hold at every vertex
    whose stencil stays clear of the layer where u1 underflows.  The relative
    residual is measured in the dual norm induced by (K + Gamma M)^{-1}: the
    rowwise l2 ratio does not contract under refinement (the per-row
    consistency error of an interpolant scales exactly like the row values),
    while the dual norm decays at first order; the l2 ratio is kept as a
    diagnostic.
    """
    system = system or result.system
    mesh = result.mesh
    u1, u2 = result.vectors[:, 0], result.vectors[:, 1]
    gamma = result.gap
    floor = 1e-8 * float(np.max(u1))
    keep_v = u1 > floor
    keep_t = np.all(keep_v[mesh.triangles], axis=1)
    excluded_fraction = 1.0 - float(np.mean(keep_v))
    if np.mean(keep_t) < 0.5:
        raise NumericalError("ground state underflows on most of the mesh")

    tris = mesh.triangles[keep_t]
    sub = TriMesh(vertices=mesh.vertices, triangles=tris,
                  boundary_mask=mesh.boundary_mask, h_target=mesh.h_target,
                  domain=mesh.domain)
    u1sq_q = interpolate_at_midpoints(sub, u1) ** 2
    rho_q = system.rho_q[keep_t]
    K = stiffness_with_coefficient(sub, u1sq_q)
    M = mass_with_coefficient(sub, rho_q * u1sq_q)

    w = np.zeros(mesh.n_vertices)
    w[keep_v] = u2[keep_v] / u1[keep_v]

    # rows with a complete stencil: every incident triangle was kept
    incident_all = np.zeros(mesh.n_vertices, dtype=int)
    incident_kept = np.zeros(mesh.n_vertices, dtype=int)
    np.add.at(incident_all, mesh.triangles.ravel(), 1)
    np.add.at(incident_kept, tris.ravel(), 1)
    rows = (incident_all == incident_kept) & (incident_all > 0)

    idx = np.nonzero(rows)[0]
    r = (K @ w - gamma * (M @ w))[idx]
    b = (gamma * (M @ w))[idx]
    try:
        lu = spla.splu((K + gamma * M).tocsc()[idx][:, idx])
    except RuntimeError as exc:
        raise NumericalError(f"residual dual-norm factorization failed: {exc}") from exc
    num = math.sqrt(max(float(r @ lu.solve(r)), 0.0))
    den = math.sqrt(max(float(b @ lu.solve(b)), 0.0))
    return {
        "relative_residual": num / max(den, 1e-300),
        "l2_row_residual": float(np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300)),
        "rows_checked": int(idx.size),
        "excluded_vertex_fraction": excluded_fraction,
        "bulk_exclusion_warning": bool(excluded_fraction > 0.20),
        "gamma": float(gamma),
    }


def drift_neumann_spectrum(result: EigenResult, k: int = 2) -> np.ndarray:
    """Low eigenvalues of the u1^2-drift operator with natural boundary data.

    The weak form int u1^2 grad u . grad xi = mu int rho u1^2 u xi over ALL
    vertices symmetrizes the drift equation -Delta u + <grad u, grad f> =
    mu rho u with f = -2 log u1.  mu1 = 0 (constants); mu2 reproduces the
    fundamental gap of the Dirichlet problem.
    """
    mesh = result.mesh
    u1 = result.vectors[:, 0]
    u1sq_q = interpolate_at_midpoints(mesh, u1) ** 2
    K = stiffness_with_coefficient(mesh, u1sq_q)
    M = mass_with_coefficient(mesh, result.system.rho_q * u1sq_q)

    # u1 vanishes on the boundary, so boundary rows of M are small but
    # nonzero; keep all rows and shift the factorization past the zero mode.
    tau = 0.1 * max(float(result.values[0]), 1.0)
    try:
        lu = spla.splu((K + tau * M).tocsc())
    except RuntimeError as exc:
        raise NumericalError(f"drift operator factorization failed: {exc}") from exc

    n = K.shape[0]
    m = k + 2
    X = _start_block(n, m)
    prev = np.full(m, np.inf)
    theta = prev
    for _ in range(MAX_ITERATIONS):
        Y = lu.solve(M @ X)
        G = Y.T @ (M @ Y)
        G = 0.5 * (G + G.T)
        L = np.linalg.cholesky(G + 1e-15 * np.trace(G) * np.eye(m))
        Q = np.linalg.solve(L, Y.T).T
        H = Q.T @ (K @ Q)
        H = 0.5 * (H + H.T)
        theta, S = np.linalg.eigh(H)
        X = Q @ S
        rel = np.abs(theta - prev) / np.maximum(np.abs(theta), 1.0)
        prev = theta
        if np.all(rel[:k] < 1e-12):
            break
    return theta[:k]


def drift_neumann_mu2(result: EigenResult) -> float:
    """Second Neumann eigenvalue of the drift form; equals the gap in theory."""
    theta = drift_neumann_spectrum(result, k=2)
    if abs(theta[0]) > 1e-6 * max(1.0, abs(theta[1])):
        raise NumericalError(f"drift spectrum lost the constant mode: mu1 = {theta[0]:.3e}")
    return float(theta[1])
