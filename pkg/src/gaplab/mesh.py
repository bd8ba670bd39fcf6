"""Triangulation and P1 finite-element assembly in flat chart coordinates.

Meshing is a batched Delaunay-refinement scheme: the boundary polyline is
resampled at the target spacing, scipy's Delaunay (qhull) retriangulates the
point set each round, encroached boundary subsegments are split at their
midpoints, and circumcenters of low-quality or oversized interior triangles
are inserted until every interior triangle has all angles >= 20 degrees and
no edge longer than 1.5 * h_target.  No randomness anywhere: rounds insert
candidates in canonical order, so repeated runs produce identical meshes.

Assembly is plain P1 on the flat chart.  Curvature never appears in the
stiffness matrix — in two dimensions the Dirichlet energy is conformally
invariant — so a curved-geometry problem is just a weighted flat problem,
with the geometry carried entirely by the weight and potential coefficients.
Coefficient integrals use the three-edge-midpoint rule (exact through
quadratic integrands).  Dirichlet conditions are imposed by row/column
elimination onto interior vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sparse
from scipy.spatial import Delaunay, cKDTree

from .domains import Domain2D
from .errors import NumericalError, UsageError
from .fields import ScalarField

MIN_ANGLE_DEG = 20.0
SIZE_FACTOR = 1.5  # h_max <= SIZE_FACTOR * h_target


@dataclass
class TriMesh:
    vertices: np.ndarray        # (N, 2)
    triangles: np.ndarray       # (T, 3) CCW, interior triangles only
    boundary_mask: np.ndarray   # (N,) True for vertices on the domain polyline
    h_target: float
    domain: Optional[Domain2D] = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_vertex_flags(self) -> np.ndarray:
        return self.boundary_mask

    @property
    def h_max(self) -> float:
        return self.max_edge()

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def area(self) -> float:
        return float(np.sum(self.triangle_areas()))

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.stack([
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ], axis=1)

    def max_edge(self) -> float:
        return float(np.max(self.edge_lengths()))

    def min_angle_deg(self) -> float:
        return float(np.min(_triangle_angles(self.vertices, self.triangles)))

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def vertex_neighbors(self) -> list:
        """Adjacency lists (1-ring) for every vertex."""
        nbrs = [set() for _ in range(self.n_vertices)]
        for a, b in self.edges():
            nbrs[a].add(int(b))
            nbrs[b].add(int(a))
        return [sorted(s) for s in nbrs]

    def boundary_distance(self) -> np.ndarray:
        """Distance from each vertex to the nearest boundary vertex."""
        tree = cKDTree(self.vertices[self.boundary_mask])
        d, _ = tree.query(self.vertices)
        return d

    # -- export ---------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary": self.boundary_mask.astype(int).tolist(),
            "h_target": self.h_target,
        }

    def save_csv(self, prefix: str) -> Tuple[str, str]:
        vpath, tpath = f"{prefix}_vertices.csv", f"{prefix}_triangles.csv"
        header = "x,y,boundary"
        data = np.column_stack([self.vertices, self.boundary_mask.astype(float)])
        np.savetxt(vpath, data, delimiter=",", header=header, comments="")
        np.savetxt(tpath, self.triangles, fmt="%d", delimiter=",",
                   header="v0,v1,v2", comments="")
        return vpath, tpath


def _triangle_angles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """All interior angles in degrees, shape (T, 3)."""
    p = vertices[triangles]
    L = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
    ], axis=1)
    a2, b2, c2 = L[:, 0] ** 2, L[:, 1] ** 2, L[:, 2] ** 2
    with np.errstate(invalid="ignore"):
        cos0 = (b2 + c2 - a2) / (2 * L[:, 1] * L[:, 2])
        cos1 = (a2 + c2 - b2) / (2 * L[:, 0] * L[:, 2])
        cos2 = (a2 + b2 - c2) / (2 * L[:, 0] * L[:, 1])
    cosines = np.clip(np.stack([cos0, cos1, cos2], axis=1), -1.0, 1.0)
    return np.degrees(np.arccos(cosines))


def _resample_boundary(domain: Domain2D, h: float) -> np.ndarray:
    out = []
    v = domain.vertices
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        seg = np.linalg.norm(b - a)
        m = max(1, int(math.ceil(seg / h - 1e-12)))
        for k in range(m):
            out.append(a + (k / m) * (b - a))
    return np.asarray(out)


def _circumcenters(p: np.ndarray) -> np.ndarray:
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    d = 2.0 * (a[:, 0] * (b[:, 1] - c[:, 1]) + b[:, 0] * (c[:, 1] - a[:, 1])
               + c[:, 0] * (a[:, 1] - b[:, 1]))
    d = np.where(np.abs(d) < 1e-300, np.nan, d)
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    cc = np.einsum("ij,ij->i", c, c)
    ux = (aa * (b[:, 1] - c[:, 1]) + bb * (c[:, 1] - a[:, 1]) + cc * (a[:, 1] - b[:, 1])) / d
    uy = (aa * (c[:, 0] - b[:, 0]) + bb * (a[:, 0] - c[:, 0]) + cc * (b[:, 0] - a[:, 0])) / d
    return np.column_stack([ux, uy])


def triangulate(domain: Domain2D, h_target: float, max_rounds: int = 120) -> TriMesh:
    """Quality-triangulate the domain polygon at spacing ``h_target``.

    Postconditions: boundary vertices lie on the input polyline, all interior
    triangles have angles >= 20 degrees and edges <= 1.5 * h_target, and the
    triangle union is exactly the polygon (mesh area equals polygon area).
    """
    if not (h_target > 0):
        raise UsageError("h_target must be positive")
    if h_target >= domain.euclidean_extent():
        raise UsageError(
            f"h_target={h_target} cannot resolve a domain of extent {domain.euclidean_extent():.3g}")

    pts = _resample_boundary(domain, h_target)
    nb = len(pts)
    boundary = [True] * nb
    segments = [(i, (i + 1) % nb) for i in range(nb)]
    pts = list(map(np.asarray, pts))
    size_max = SIZE_FACTOR * h_target
    history = []

    for rnd in range(max_rounds):
        P = np.asarray(pts)
        tri = Delaunay(P)
        simplices = tri.simplices.copy()
        p = P[simplices]
        areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                       - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        flip = areas < 0
        simplices[flip] = simplices[flip][:, ::-1]
        areas = np.abs(areas)
        scale = domain.euclidean_extent()
        simplices = simplices[areas > 1e-14 * scale**2]

        centroids = P[simplices].mean(axis=1)
        inside = domain.contains(centroids)
        interior_tris = simplices[inside]

        # --- constraint conformity -------------------------------------------
        edge_set = set()
        for t in simplices:
            for i, j in ((0, 1), (1, 2), (2, 0)):
                a, b = int(t[i]), int(t[j])
                edge_set.add((a, b) if a < b else (b, a))
        missing = [s for s in segments
                   if (min(s), max(s)) not in edge_set]

        # --- encroachment ------------------------------------------------------
        seg_arr = np.asarray(segments)
        mids = 0.5 * (P[seg_arr[:, 0]] + P[seg_arr[:, 1]])
        rads = 0.5 * np.linalg.norm(P[seg_arr[:, 0]] - P[seg_arr[:, 1]], axis=1)
        tree = cKDTree(P)
        encroached = []
        hits = tree.query_ball_point(mids, rads * (1.0 - 1e-12))
        for si, hit in enumerate(hits):
            endpoints = {int(seg_arr[si, 0]), int(seg_arr[si, 1])}
            if any(h not in endpoints for h in hit):
                encroached.append(si)
        to_split = sorted(set(encroached) | {segments.index(s) for s in missing})

        if to_split:
            new_segments = []
            for si, seg in enumerate(segments):
                if si in to_split:
                    i, j = seg
                    mid = 0.5 * (P[i] + P[j])
                    pts.append(mid)
                    boundary.append(True)
                    k = len(pts) - 1
                    new_segments.extend([(i, k), (k, j)])
                else:
                    new_segments.append(seg)
            segments = new_segments
            history.append((rnd, "split", len(to_split)))
            continue

        # --- quality -------------------------------------------------------------
        angles = _triangle_angles(P, interior_tris)
        pp = P[interior_tris]
        longest = np.max(np.stack([
            np.linalg.norm(pp[:, 2] - pp[:, 1], axis=1),
            np.linalg.norm(pp[:, 0] - pp[:, 2], axis=1),
            np.linalg.norm(pp[:, 1] - pp[:, 0], axis=1),
        ], axis=1), axis=1)
        bad = (np.min(angles, axis=1) < MIN_ANGLE_DEG) | (longest > 0.97 * size_max)
        if not np.any(bad):
            return _finalize(domain, P, interior_tris, np.asarray(boundary), h_target)

        order = np.lexsort((interior_tris[bad][:, 2], interior_tris[bad][:, 1],
                            interior_tris[bad][:, 0]))
        cand = _circumcenters(pp[bad])[order]
        cand = cand[np.all(np.isfinite(cand), axis=1)]

        # candidates that encroach a boundary segment split it instead
        if len(cand):
            d_mid = np.linalg.norm(cand[:, None, :] - mids[None, :, :], axis=2)
            enc = d_mid < rads[None, :] * (1.0 - 1e-12)
            enc_any = np.any(enc, axis=1)
            seg_hits = sorted(set(np.nonzero(enc)[1].tolist()))
            cand = cand[~enc_any]
        else:
            seg_hits = []

        if len(cand):
            cand = cand[domain.contains(cand)]
        if len(cand):
            # never insert on top of an existing vertex: the degenerate pair
            # would survive as a zero-width crack once slivers are filtered
            d_exist, _ = tree.query(cand)
            cand = cand[d_exist > 1e-9 * scale]
        if len(cand) > 1:
            # thin the batch so concurrent insertions keep their distance
            # (cocircular fans produce many near-identical circumcenters)
            pairs = cKDTree(cand).query_pairs(0.7 * h_target, output_type="ndarray")
            if len(pairs):
                pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
                keep = np.ones(len(cand), dtype=bool)
                for i, j in pairs:
                    if keep[i] and keep[j]:
                        keep[j] = False
                cand = cand[keep]

        progress = False
        if seg_hits:
            new_segments = []
            for si, seg in enumerate(segments):
                if si in seg_hits:
                    i, j = seg
                    mid = 0.5 * (P[i] + P[j])
                    pts.append(mid)
                    boundary.append(True)
                    k = len(pts) - 1
                    new_segments.extend([(i, k), (k, j)])
                else:
                    new_segments.append(seg)
            segments = new_segments
            progress = True
        for c in cand:
            pts.append(c)
            boundary.append(False)
            progress = True
        history.append((rnd, "insert", int(len(cand)), int(len(seg_hits))))
        if not progress:
            raise NumericalError(
                f"refinement stalled with {int(np.sum(bad))} low-quality triangles",
                trace=history)

    raise NumericalError(f"refinement did not converge in {max_rounds} rounds",
                         trace=history)


def _finalize(domain, P, interior_tris, boundary, h_target) -> TriMesh:
    used = np.unique(interior_tris)
    remap = -np.ones(len(P), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = P[used]
    tris = remap[interior_tris]
    tris = tris[np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))]
    mesh = TriMesh(vertices=verts, triangles=tris.astype(np.int64),
                   boundary_mask=boundary[used], h_target=h_target, domain=domain)

    poly_area = abs(domain.polygon_area())
    if abs(mesh.area() - poly_area) > 1e-9 * max(1.0, poly_area):
        raise NumericalError(
            f"mesh area {mesh.area():.12g} does not match polygon area {poly_area:.12g}")
    if mesh.min_angle_deg() < MIN_ANGLE_DEG - 1e-9:
        raise NumericalError(f"minimum angle {mesh.min_angle_deg():.3f} deg below "
                             f"{MIN_ANGLE_DEG} after refinement")
    if mesh.max_edge() > SIZE_FACTOR * h_target * (1 + 1e-9):
        raise NumericalError(f"max edge {mesh.max_edge():.6g} exceeds "
                             f"{SIZE_FACTOR}*h_target")
    # the complex boundary (edges in exactly one triangle) must be exactly the
    # flagged polygon boundary; anything else is an interior crack or hole
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    topo = np.zeros(mesh.n_vertices, dtype=bool)
    topo[uniq[counts == 1].ravel()] = True
    if np.any(counts > 2) or np.any(topo != mesh.boundary_mask):
        raise NumericalError("triangulation has a crack or hole (topological "
                             "boundary differs from the polygon boundary)")
    return mesh


# ---------------------------------------------------------------------------
# P1 assembly
# ---------------------------------------------------------------------------
@dataclass
class AssembledSystem:
    """Stiffness+potential matrix A and weighted mass B for -div grad u + V u = lambda rho u.

    ``A``/``B`` are the interior (Dirichlet-eliminated) blocks; the full
    matrices over all vertices are kept for weak-form diagnostics.
    """

    mesh: TriMesh
    A: sparse.csr_matrix
    B: sparse.csr_matrix
    A_full: sparse.csr_matrix
    B_full: sparse.csr_matrix
    index_map: np.ndarray  # matrix row -> global vertex index
    rho_q: np.ndarray      # (T, 3) weight at edge midpoints (m01, m12, m20)
    V_q: np.ndarray

    @property
    def n_active(self) -> int:
        return len(self.index_map)


def _edge_midpoints(mesh: TriMesh) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    return np.stack([
        0.5 * (p[:, 0] + p[:, 1]),
        0.5 * (p[:, 1] + p[:, 2]),
        0.5 * (p[:, 2] + p[:, 0]),
    ], axis=1)  # (T, 3, 2)


def _basis_gradients(mesh: TriMesh):
    p = mesh.vertices[mesh.triangles]
    areas = mesh.triangle_areas()
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    rot = lambda e: np.stack([-e[:, 1], e[:, 0]], axis=1)
    denom = (2.0 * areas)[:, None]
    return np.stack([rot(e0) / denom, rot(e1) / denom, rot(e2) / denom], axis=1), areas


def stiffness_with_coefficient(mesh: TriMesh, c_q: Optional[np.ndarray] = None) -> sparse.csr_matrix:
    """Assemble int c grad u . grad w with c given at edge midpoints (T, 3)."""
    grads, areas = _basis_gradients(mesh)
    cbar = np.ones(len(areas)) if c_q is None else np.mean(c_q, axis=1)
    gij = np.einsum("tid,tjd->tij", grads, grads)
    local = (cbar * areas)[:, None, None] * gij
    return _scatter(mesh, local)


def mass_with_coefficient(mesh: TriMesh, c_q: np.ndarray) -> sparse.csr_matrix:
    """Assemble int c u w with the edge-midpoint rule, c at midpoints (T, 3)."""
    areas = mesh.triangle_areas()
    c01, c12, c20 = c_q[:, 0], c_q[:, 1], c_q[:, 2]
    T = len(areas)
    local = np.empty((T, 3, 3))
    local[:, 0, 0] = c01 + c20
    local[:, 1, 1] = c01 + c12
    local[:, 2, 2] = c12 + c20
    local[:, 0, 1] = local[:, 1, 0] = c01
    local[:, 1, 2] = local[:, 2, 1] = c12
    local[:, 0, 2] = local[:, 2, 0] = c20
    local *= (areas / 12.0)[:, None, None]
    return _scatter(mesh, local)


def load_vector(mesh: TriMesh, f_q: np.ndarray) -> np.ndarray:
    """Assemble int f w for P1 test functions, f at edge midpoints (T, 3)."""
    areas = mesh.triangle_areas()
    T = len(areas)
    local = np.empty((T, 3))
    local[:, 0] = f_q[:, 0] + f_q[:, 2]
    local[:, 1] = f_q[:, 0] + f_q[:, 1]
    local[:, 2] = f_q[:, 1] + f_q[:, 2]
    local *= (areas / 6.0)[:, None]
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


def _scatter(mesh: TriMesh, local: np.ndarray) -> sparse.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    M = sparse.coo_matrix((local.ravel(), (rows, cols)),
                          shape=(mesh.n_vertices, mesh.n_vertices))
    return M.tocsr()


def evaluate_at_midpoints(mesh: TriMesh, f: ScalarField | float) -> np.ndarray:
    mids = _edge_midpoints(mesh)
    if np.isscalar(f):
        return np.full(mids.shape[:2], float(f))
    return f.fn(mids.reshape(-1, 2)).reshape(mids.shape[:2])


def interpolate_at_midpoints(mesh: TriMesh, vertex_values: np.ndarray) -> np.ndarray:
    u = vertex_values[mesh.triangles]
    return np.stack([
        0.5 * (u[:, 0] + u[:, 1]),
        0.5 * (u[:, 1] + u[:, 2]),
        0.5 * (u[:, 2] + u[:, 0]),
    ], axis=1)


def assemble(mesh: TriMesh, V: ScalarField | float | None = None,
             rho: ScalarField | float | None = None,
             dirichlet: bool = True) -> AssembledSystem:
    """Assemble the generalized eigensystem for the flat-chart weak form.

    A = stiffness + V-mass, B = rho-mass; both exactly symmetric.  The weight
    must be strictly positive at every quadrature point.  With ``dirichlet``
    the boundary rows/columns are eliminated; otherwise every vertex stays
    active (natural boundary conditions).
    """
    V_q = evaluate_at_midpoints(mesh, 0.0 if V is None else V)
    rho_q = evaluate_at_midpoints(mesh, 1.0 if rho is None else rho)
    if np.any(~np.isfinite(rho_q)) or np.any(rho_q <= 0):
        t, m = np.unravel_index(int(np.argmin(rho_q)), rho_q.shape)
        bad_pt = _edge_midpoints(mesh)[t, m]
        raise UsageError(f"weight rho is not strictly positive at quadrature point {bad_pt}")
    if np.any(~np.isfinite(V_q)):
        raise UsageError("potential V is not finite at some quadrature point")

    A_full = stiffness_with_coefficient(mesh)
    if np.any(V_q != 0.0):
        A_full = (A_full + mass_with_coefficient(mesh, V_q)).tocsr()
    B_full = mass_with_coefficient(mesh, rho_q)

    if dirichlet:
        active = np.nonzero(~mesh.boundary_mask)[0]
        A = A_full[active][:, active].tocsr()
        B = B_full[active][:, active].tocsr()
    else:
        active = np.arange(mesh.n_vertices)
        A, B = A_full.tocsr(), B_full.tocsr()
    return AssembledSystem(mesh=mesh, A=A, B=B, A_full=A_full.tocsr(),
                           B_full=B_full.tocsr(), index_map=active,
                           rho_q=rho_q, V_q=V_q)


def export_matrix(M: sparse.spmatrix, path: str) -> str:
    """Write a sparse matrix in MatrixMarket coordinate text format."""
    from scipy.io import mmwrite

    mmwrite(path, M.tocoo())
    return path if path.endswith(".mtx") else path + ".mtx"
