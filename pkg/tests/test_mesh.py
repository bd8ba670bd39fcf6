"""Triangulation quality and P1 assembly."""

import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from scipy.io import mmread

from gaplab import ConformalChart, disk_domain, triangulate, unit_square
from gaplab.errors import UsageError
from gaplab.fields import ScalarField
from gaplab.mesh import (
    assemble,
    evaluate_at_midpoints,
    export_matrix,
    interpolate_at_midpoints,
    load_vector,
    mass_with_coefficient,
    stiffness_with_coefficient,
)


def shoelace(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ---------------------------------------------------------------------------
# triangulation
# ---------------------------------------------------------------------------
def test_coarse_square():
    mesh = triangulate(unit_square(), 0.5)
    assert mesh.n_triangles >= 8
    assert abs(mesh.area() - 1.0) < 1e-12
    assert mesh.euler_characteristic() == 1
    on_edge = np.minimum.reduce([
        np.abs(mesh.vertices[:, 0]), np.abs(1 - mesh.vertices[:, 0]),
        np.abs(mesh.vertices[:, 1]), np.abs(1 - mesh.vertices[:, 1]),
    ])
    assert np.all(on_edge[mesh.boundary_mask] < 1e-12)
    assert np.all(on_edge[~mesh.boundary_mask] > 1e-12)


def test_disk_area_matches_polygon():
    dom = disk_domain(ConformalChart.euclidean(), radius=1.0, n=256)
    mesh = triangulate(dom, 0.05)
    assert abs(mesh.area() - shoelace(dom.vertices)) < 1e-9
    assert abs(mesh.area() - math.pi) < 1e-3


@pytest.mark.parametrize("dom,h", [
    (unit_square(), 0.1),
    (disk_domain(ConformalChart.euclidean(), radius=1.0, n=256), 0.08),
])
def test_quality_bounds(dom, h):
    mesh = triangulate(dom, h)
    assert mesh.min_angle_deg() >= 20.0 - 1e-9
    assert mesh.h_max <= 1.5 * h * (1 + 1e-9)
    assert np.all(mesh.triangle_areas() > 0)


def test_halving_h_roughly_quadruples_triangles():
    coarse = triangulate(unit_square(), 0.2)
    fine = triangulate(unit_square(), 0.1)
    ratio = fine.n_triangles / coarse.n_triangles
    assert 3.0 <= ratio <= 6.0


def test_triangulate_argument_errors():
    with pytest.raises(UsageError):
        triangulate(unit_square(), 0.0)
    with pytest.raises(UsageError):
        triangulate(unit_square(), 5.0)  # cannot resolve the domain


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
def test_stiffness_annihilates_constants():
    mesh = triangulate(unit_square(), 0.2)
    sys = assemble(mesh, V=0.0, rho=1.0)
    row_sums = np.asarray(sys.A_full @ np.ones(mesh.n_vertices))
    assert np.max(np.abs(row_sums)) < 1e-13 * spla.norm(sys.A_full, np.inf)


def test_constant_potential_adds_mass():
    mesh = triangulate(unit_square(), 0.2)
    base = assemble(mesh, V=0.0, rho=1.0)
    shifted = assemble(mesh, V=3.7, rho=1.0)
    diff = shifted.A - (base.A + 3.7 * base.B)
    assert abs(diff).max() < 1e-12 * abs(shifted.A).max()


def test_matrices_symmetric_and_B_positive_definite():
    dom = disk_domain(ConformalChart.euclidean(), radius=1.0, n=128)
    mesh = triangulate(dom, 0.15)
    sys = assemble(mesh, V=ScalarField.from_expression("x1*x2"), rho=ScalarField.from_expression("1 + x1^2"))
    assert abs(sys.A - sys.A.T).max() < 1e-14 * abs(sys.A).max()
    assert abs(sys.B - sys.B.T).max() == 0.0
    np.linalg.cholesky(sys.B.toarray())  # raises if not SPD


def test_linear_patch_is_harmonic():
    mesh = triangulate(unit_square(), 0.17)
    sys = assemble(mesh, V=0.0, rho=1.0)
    u = 0.3 + 1.4 * mesh.vertices[:, 0] - 0.7 * mesh.vertices[:, 1]
    resid = np.asarray(sys.A_full @ u)[~mesh.boundary_mask]
    assert np.max(np.abs(resid)) < 1e-12 * spla.norm(sys.A_full, np.inf) * np.max(np.abs(u))


def test_midpoint_rule_exact_for_quadratics():
    mesh = triangulate(unit_square(), 0.21)
    c_q = evaluate_at_midpoints(mesh, ScalarField.from_expression("x1^2"))
    B = mass_with_coefficient(mesh, c_q)
    assert B.sum() == pytest.approx(1.0 / 3.0, rel=1e-13)   # int_square x^2
    f = load_vector(mesh, np.ones_like(c_q))
    assert f.sum() == pytest.approx(mesh.area(), rel=1e-13)


def test_interpolate_matches_evaluate_for_linears():
    mesh = triangulate(unit_square(), 0.3)
    field = ScalarField.from_expression("2*x1 - x2 + 0.5")
    direct = evaluate_at_midpoints(mesh, field)
    via_vertices = interpolate_at_midpoints(mesh, field.fn(mesh.vertices))
    assert np.allclose(direct, via_vertices, atol=1e-14)


def test_nonpositive_weight_is_rejected_with_location():
    mesh = triangulate(unit_square(), 0.3)
    with pytest.raises(UsageError, match="quadrature point"):
        assemble(mesh, rho=ScalarField.from_expression("x1 - 10"))


def test_dirichlet_elimination_keeps_interior():
    mesh = triangulate(unit_square(), 0.25)
    sys = assemble(mesh, V=0.0, rho=1.0, dirichlet=True)
    n_int = int(np.sum(~mesh.boundary_mask))
    assert sys.A.shape == (n_int, n_int)
    assert np.array_equal(sys.index_map, np.nonzero(~mesh.boundary_mask)[0])
    natural = assemble(mesh, V=0.0, rho=1.0, dirichlet=False)
    assert natural.A.shape == (mesh.n_vertices, mesh.n_vertices)


def test_eigenvalue_converges_second_order_from_above():
    lam_exact = 2 * math.pi ** 2
    errors = []
    for h in (0.1, 0.05, 0.025):
        sys = assemble(triangulate(unit_square(), h))
        lam = spla.eigsh(sys.A, k=1, M=sys.B, sigma=0.0, which="LM")[0][0]
        assert lam > lam_exact          # conforming elements bound from above
        errors.append(lam - lam_exact)
    assert math.log2(errors[0] / errors[1]) > 1.8
    assert math.log2(errors[1] / errors[2]) > 1.8


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------
def test_mesh_export_round_trip(tmp_path):
    mesh = triangulate(unit_square(), 0.4)
    data = mesh.to_json()
    assert len(data["vertices"]) == mesh.n_vertices
    assert len(data["triangles"]) == mesh.n_triangles
    assert data["boundary"].count(1) == int(np.sum(mesh.boundary_mask))

    vpath, tpath = mesh.save_csv(str(tmp_path / "m"))
    verts = np.loadtxt(vpath, delimiter=",", skiprows=1)
    tris = np.loadtxt(tpath, delimiter=",", skiprows=1, dtype=int)
    assert verts.shape == (mesh.n_vertices, 3)
    assert np.array_equal(tris, mesh.triangles)

    sys = assemble(mesh)
    out = export_matrix(sys.A, str(tmp_path / "A.mtx"))
    back = mmread(out)
    assert abs(back.tocsr() - sys.A).max() < 1e-15
