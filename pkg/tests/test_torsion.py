import math

import numpy as np
import pytest

import oracles
from gaplab import (
    ConformalChart,
    cap_for_beta,
    center_value,
    circumradius,
    circumradius_threshold,
    concavity_report,
    disk_domain,
    kennington_exponent,
    level_curve_curvature,
    level_set_components,
    power_concavity_check,
    power_hessian_field,
    recenter_to_pole,
    rho_beta_hessian_eigs,
    solve_torsion,
)
from gaplab.errors import UsageError
from gaplab.torsion import power_field

FLAT = ConformalChart.euclidean()
SPHERE1 = ConformalChart.stereographic_sphere(1.0)


@pytest.fixture(scope="module")
def cap_solution():
    return solve_torsion(cap_for_beta(1.0, fraction=0.9), h_target=0.005)


# ---------------------------------------------------------------------------
# the solver itself
# ---------------------------------------------------------------------------
def test_flat_disk_matches_quarter_parabola():
    disk = disk_domain(FLAT, radius=1.0, n=256)
    errs = []
    for h in (0.12, 0.06):
        sol = solve_torsion(disk, h_target=h)
        exact = oracles.disk_torsion_exact(1.0, sol.mesh.vertices)
        errs.append(float(np.max(np.abs(sol.u - exact))))
        assert sol.residual <= 1e-10
        assert np.min(sol.u[sol.mesh.interior_mask()]) > 0.0
    assert errs[0] <= 2e-3 and errs[1] <= 5e-4
    assert errs[0] / errs[1] >= 3.4          # second-order convergence
    assert center_value(sol) == pytest.approx(0.25, abs=5e-4)


def test_solver_is_linear_in_the_load():
    disk = disk_domain(FLAT, radius=1.0, n=256)
    s1 = solve_torsion(disk, h_target=0.1, rhs=1.0)
    s2 = solve_torsion(disk, h_target=0.1, rhs=2.0)
    assert np.allclose(s2.u, 2.0 * s1.u, rtol=0.0, atol=1e-12 * s1.max_value)


def test_cap_center_value_matches_radial_ode(cap_solution):
    # on a cap the projected problem is radial, so a 1-d two-point solve
    # provides an independent high-accuracy value at the origin
    r_cap = math.tan(0.9 * circumradius_threshold(1.0) / 2.0)
    u0 = oracles.radial_torsion_center(r_cap)
    assert u0 == pytest.approx(0.0317290896, abs=1e-9)
    assert center_value(cap_solution) == pytest.approx(u0, rel=3e-4)


def test_solution_metadata_and_csv(tmp_path, cap_solution):
    data = cap_solution.to_json()
    assert data["beta"] == 1.0
    assert data["max_u"] == cap_solution.max_value
    assert data["n_vertices"] == cap_solution.mesh.n_vertices
    path = cap_solution.save_fields_csv(str(tmp_path / "u.csv"))
    loaded = np.genfromtxt(path, delimiter=",", names=True)
    assert loaded.shape[0] == cap_solution.mesh.n_vertices
    assert set(loaded.dtype.names) == {"x", "y", "u"}


def test_recentering_preserves_distances():
    dom = disk_domain(SPHERE1, center=(0.3, 0.1), radius=0.15, n=192)
    moved = recenter_to_pole(dom)
    _, c_new = circumradius(moved)
    assert float(np.hypot(*c_new)) <= 1e-10
    assert np.max(np.linalg.norm(moved.vertices, axis=1)) \
        < np.max(np.linalg.norm(dom.vertices, axis=1))
    # recentering a centered domain is the identity
    again = recenter_to_pole(moved)
    assert np.array_equal(again.vertices, moved.vertices)
    with pytest.raises(UsageError):
        recenter_to_pole(disk_domain(FLAT, radius=0.5))


def test_offset_cap_solves_like_centered_one():
    centered = solve_torsion(disk_domain(SPHERE1, radius=0.15, n=192),
                             h_target=0.01)
    offset = solve_torsion(disk_domain(SPHERE1, center=(0.3, 0.1),
                                       radius=0.15, n=192), h_target=0.01)
    assert offset.max_value == pytest.approx(centered.max_value, rel=1e-3)
    assert center_value(offset) == pytest.approx(center_value(centered), rel=1e-3)


# ---------------------------------------------------------------------------
# Kennington concavity machinery
# ---------------------------------------------------------------------------
def test_kennington_exponent_values():
    assert kennington_exponent(1.0) == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert kennington_exponent(2.0) == pytest.approx(0.4, rel=1e-15)
    # exponent saturates below 1/2: the power never reaches sqrt(u)
    assert kennington_exponent(1e9) < 0.5


def test_rho_beta_hessian_eigenvalues():
    e1, e2 = rho_beta_hessian_eigs((0.0, 0.0), 1.0)
    assert e1 == pytest.approx(-16.0, rel=1e-14)
    assert e2 == pytest.approx(-16.0, rel=1e-14)
    rng = np.random.default_rng(7)
    for _ in range(50):
        beta = rng.uniform(1.0, 4.0)
        x = rng.uniform(-0.6, 0.6, size=2)

        def rho_b(p, b=beta):
            return (4.0 / (1.0 + p[0] ** 2 + p[1] ** 2) ** 2) ** b

        H = oracles.fd_hess(rho_b, x)
        lo, hi = oracles.eig2x2(H[0, 0], H[0, 1], H[1, 1])
        got = sorted(rho_beta_hessian_eigs(x, beta))
        scale = max(abs(got[0]), abs(got[1]), 1.0)
        assert abs(got[0] - lo) <= 1e-6 * scale
        assert abs(got[1] - hi) <= 1e-6 * scale
    # the radial eigenvalue changes sign exactly at s = 1/(1+4 beta)
    for beta in (1.0, 2.5):
        r_c = math.sqrt(1.0 / (1.0 + 4.0 * beta))
        assert rho_beta_hessian_eigs((0.99 * r_c, 0.0), beta)[1] < 0.0
        assert rho_beta_hessian_eigs((1.01 * r_c, 0.0), beta)[1] > 0.0
    with pytest.raises(UsageError):
        rho_beta_hessian_eigs((0.1, 0.1), 0.5)


def test_circumradius_threshold_profile():
    assert circumradius_threshold(1.0) == pytest.approx(2.0 * math.atan(0.2),
                                                        rel=1e-15)
    assert circumradius_threshold(1.0) == pytest.approx(0.394791, abs=1e-6)
    for beta in (1.0, 3.0, 10.0):
        d = circumradius_threshold(beta)
        assert math.tan(d / 2.0) * (1.0 + 4.0 * beta) == pytest.approx(1.0,
                                                                       rel=1e-14)
    assert circumradius_threshold(1e6) < 1e-5
    with pytest.raises(UsageError):
        circumradius_threshold(0.99)
    with pytest.raises(UsageError):
        cap_for_beta(1.0, fraction=1.5)


def test_cap_power_is_concave(cap_solution):
    report = power_concavity_check(cap_solution, beta=1.0)
    assert report.verdict == "concave"
    assert report.max_hess_eig < -5.0
    assert report.dropped_fraction == 0.0
    with pytest.raises(UsageError):
        power_concavity_check(cap_solution, beta=0.8)


def test_flat_disk_sqrt_is_concave():
    # the classical flat statement: sqrt of the torsion function of a convex
    # domain is concave; on the disk sqrt(u) is a scaled hemisphere with
    # Hessian eigenvalues -1/2 at the center
    sol = solve_torsion(disk_domain(FLAT, radius=1.0, n=256),
                        h_target=0.04, rhs=1.0)
    field = power_hessian_field(sol.u, sol.mesh, 0.5, connection=FLAT)
    report = concavity_report(field)
    assert report.verdict == "concave"
    assert report.max_hess_eig == pytest.approx(-0.5, abs=0.05)


def test_level_sets_connected_and_convex(cap_solution):
    levels = level_set_components(cap_solution, n_levels=10)
    assert levels["all_connected"]
    assert levels["components"] == [1] * 10
    assert len(levels["levels"]) == 10
    curv = level_curve_curvature(power_field(cap_solution, 1.0))
    assert curv["min_kappa"] > 0.0
    assert curv["n_checked"] > 1000
