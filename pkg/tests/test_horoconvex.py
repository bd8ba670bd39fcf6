import math
import warnings

import numpy as np
import pytest

import oracles
from gaplab import (
    ConformalChart,
    diameter,
    disk_domain,
    ellipse_domain,
    hyperbolic_ball,
    is_horoconvex,
    unit_square,
    verify_pipeline,
)
from gaplab.errors import GeometryError, UsageError
from gaplab.horoconvex import (
    D_MAX,
    GAP_COEFFICIENT,
    GAP_CONSTANT,
    R_STAR,
    HoroconvexConfig,
    admissible_radius,
    gap_lower_bound,
    mu_eigenvalues,
    normalized_mu,
    optimal_R,
    rho_hyper_to_sphere,
    rho_sphere_field,
    spherical_hessian_rho,
    step2_margin,
    thresholds,
)

POINCARE = ConformalChart.poincare_disk()


# ---------------------------------------------------------------------------
# the weight and its spherical Hessian
# ---------------------------------------------------------------------------
def test_rho_values_and_structure():
    assert rho_hyper_to_sphere((0.0, 0.0), 0.7) == pytest.approx(1.0, rel=1e-15)
    # R = 1, |x|^2 = 1/2: (1 + 1/2)^2 / (1/2)^2 = 9
    x = (0.5, 0.5)
    assert rho_hyper_to_sphere(x, 1.0) == pytest.approx(9.0, rel=1e-14)
    # the weight is exactly the squared ratio of the two conformal factors
    rng = np.random.default_rng(11)
    pts = rng.uniform(-0.5, 0.5, size=(30, 2))
    R = 0.63
    sphere = ConformalChart.stereographic_sphere(R)
    ratio = np.exp(POINCARE.phi.fn(pts) - sphere.phi.fn(pts)) ** 2
    assert np.allclose(rho_hyper_to_sphere(pts, R), ratio, rtol=1e-13)
    field = rho_sphere_field(R)
    assert np.allclose(field.fn(pts), rho_hyper_to_sphere(pts, R), rtol=1e-12)
    with pytest.raises(GeometryError):
        rho_hyper_to_sphere((1.0, 0.0), R)


def test_spherical_hessian_closed_form_values():
    for R in (0.4, R_STAR, 0.9):
        m = spherical_hessian_rho((0.0, 0.0), R)
        expected = 4.0 * (1.0 + R ** 2) / R ** 2
        assert m.a11 == pytest.approx(expected, rel=1e-14)
        assert m.a22 == pytest.approx(expected, rel=1e-14)
        assert m.a12 == 0.0
    # off-diagonal vanishes on the coordinate axes
    for x in [(0.3, 0.0), (0.0, -0.42), (0.17, 0.0)]:
        assert spherical_hessian_rho(x, 0.6).a12 == 0.0
    with pytest.raises(GeometryError):
        spherical_hessian_rho((0.8, 0.7), 0.6)


def test_spherical_hessian_against_fd_transform():
    """Flat finite differences plus the conformal correction, independently."""
    rng = np.random.default_rng(5)
    for _ in range(50):
        R = rng.uniform(0.3, 0.95)
        x = rng.uniform(-0.4, 0.4, size=2)

        def rho_f(p, R=R):
            s = p[0] ** 2 + p[1] ** 2
            return (R ** 2 + s) ** 2 / (R ** 4 * (1.0 - s) ** 2)

        Hf = oracles.fd_hess(rho_f, x)
        gf = oracles.fd_grad(rho_f, x)
        gphi = -2.0 * x / (R ** 2 + x @ x)   # gradient of log(2R^2/(R^2+s))
        trade = gphi @ gf
        a11 = Hf[0, 0] - 2.0 * gphi[0] * gf[0] + trade
        a12 = Hf[0, 1] - gphi[0] * gf[1] - gphi[1] * gf[0]
        a22 = Hf[1, 1] - 2.0 * gphi[1] * gf[1] + trade
        m = spherical_hessian_rho(x, R)
        scale = max(abs(m.a11), abs(m.a22))
        assert abs(a11 - m.a11) <= 1e-6 * scale
        assert abs(a12 - m.a12) <= 1e-6 * scale
        assert abs(a22 - m.a22) <= 1e-6 * scale


def test_mu_eigenvalues_match_matrix_eigenvalues():
    rng = np.random.default_rng(19)
    assert mu_eigenvalues(0.0, 0.5)[0] == pytest.approx(
        mu_eigenvalues(0.0, 0.5)[1], rel=1e-15)
    for _ in range(100):
        R = rng.uniform(0.2, 0.95)
        r = rng.uniform(0.0, 0.8)
        m = spherical_hessian_rho((r, 0.0), R)
        lo, hi = oracles.eig2x2(m.a11, m.a12, m.a22)
        mu1, mu2 = mu_eigenvalues(r, R)
        assert mu2 >= mu1
        assert abs(lo - mu1) <= 1e-12 * abs(mu1)
        assert abs(hi - mu2) <= 1e-12 * abs(mu2)
    with pytest.raises(UsageError):
        mu_eigenvalues(1.0, 0.5)


def test_normalized_mu_is_mu_over_metric_scale():
    for r, R in [(0.1, 0.7), (0.05, R_STAR), (0.3, 0.9)]:
        K = 1.0 / R ** 2
        rho = rho_hyper_to_sphere((r, 0.0), R)
        conf = (2.0 * R ** 2 / (R ** 2 + r ** 2)) ** 2
        mu1, mu2 = mu_eigenvalues(r, R)
        m1t, m2t = normalized_mu(r, R)
        assert m1t == pytest.approx(mu1 / (K * rho * conf), rel=1e-12)
        assert m2t == pytest.approx(mu2 / (K * rho * conf), rel=1e-12)
    # the tangential eigenvalue never binds: below 2 across the whole range
    rs = np.linspace(0.0, 0.99, 1000)
    for R in (0.3, R_STAR, 0.8, 0.99):
        m1t = (1.0 + R**2) * (R**2 - rs**2) / (R**2 * (1.0 - rs**2))
        assert np.all(m1t < 2.0)


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------
def test_admissible_radius_closed_form_and_bisection():
    r_star = admissible_radius(R_STAR)
    assert r_star == pytest.approx(0.147477, abs=5e-4)
    assert r_star ** 2 == pytest.approx(0.0217494, abs=1e-4)
    # the radial eigenvalue hits the threshold exactly there
    assert normalized_mu(r_star, R_STAR)[1] == pytest.approx(2.0, abs=1e-9)
    for R in (0.3, 0.56, 0.8):
        rb = oracles.bisect(lambda r: normalized_mu(r, R)[1] - 2.0, 0.0, 0.9)
        assert abs(rb - admissible_radius(R)) <= 1e-10
    assert admissible_radius(1e-4) < 1e-4
    with pytest.raises(UsageError):
        admissible_radius(1.0)


def test_optimal_R_is_the_argmax():
    R = optimal_R()          # golden-section confirmation runs inside
    assert R == R_STAR
    assert R == pytest.approx(0.560232, abs=1e-4)
    assert R == pytest.approx(math.sqrt(7.0 - math.sqrt(33.0)) / 2.0, rel=1e-15)
    h = 1e-4
    fd = (admissible_radius(R + h) - admissible_radius(R - h)) / (2 * h)
    assert abs(fd) <= 1e-6
    assert admissible_radius(R) > admissible_radius(R - 0.05)
    assert admissible_radius(R) > admissible_radius(R + 0.05)


def test_gap_lower_bound_constants():
    assert GAP_COEFFICIENT == pytest.approx(32.0 / (3.0 * (7.0 + math.sqrt(33.0))),
                                            rel=1e-15)
    assert GAP_COEFFICIENT == pytest.approx(0.8369582356413142, rel=1e-14)
    assert GAP_CONSTANT == 4.0 / 3.0
    D = 0.4
    assert gap_lower_bound(D) == pytest.approx(
        GAP_COEFFICIENT * math.pi ** 2 / D ** 2 + 4.0 / 3.0, rel=1e-15)
    for bad in (0.0, D_MAX, 0.6, -0.1):
        with pytest.raises(UsageError):
            gap_lower_bound(bad)


def test_step2_margin_profile():
    for R in (0.55, 0.7, 0.9):
        assert step2_margin(0.0, R) == pytest.approx(2.0, rel=1e-15)
    cfg = HoroconvexConfig()
    assert step2_margin(cfg.r_max, cfg.R) == pytest.approx(0.899161, abs=1e-5)
    rs = np.linspace(0.0, 0.2, 40)
    vals = [step2_margin(r, R_STAR) for r in rs]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert min(vals) > 0
    with pytest.raises(UsageError):
        step2_margin(0.1, 0.5)
    with pytest.warns(UserWarning):
        assert step2_margin(0.6, 0.8) <= 0.0


def test_thresholds_dictionary():
    th = thresholds()
    assert th["R"] == pytest.approx(0.560232, abs=1e-4)
    assert th["r_max"] == pytest.approx(0.147477, abs=5e-4)
    assert th["C_max"] == pytest.approx(2.0 * math.atanh(th["r_max"]), rel=1e-14)
    assert th["D_max"] == pytest.approx(0.516474, abs=1e-4)
    # D_max is the Dekster diameter of the admissible circumradius, and has
    # the closed form 2 arcsinh(1 / (2 sqrt(11/3)))
    assert th["D_max"] == pytest.approx(
        2.0 * math.asinh(1.0 / (2.0 * math.sqrt(11.0 / 3.0))), rel=1e-12)
    assert th["curvature_K"] == pytest.approx(1.0 / R_STAR ** 2, rel=1e-15)
    # the bound's coefficient is exactly the reciprocal sup of the weight
    assert th["gap_coefficient"] == pytest.approx(th["inv_rho_max"], rel=1e-13)
    assert th["rho_max"] == pytest.approx(
        rho_hyper_to_sphere((th["r_max"], 0.0), th["R"]), rel=1e-15)


# ---------------------------------------------------------------------------
# the end-to-end pipeline
# ---------------------------------------------------------------------------
def test_pipeline_rejects_wrong_chart_and_large_domains():
    with pytest.raises(UsageError, match="poincare"):
        verify_pipeline(unit_square())
    report = verify_pipeline(hyperbolic_ball(0.3))    # D = 0.6 > D_max
    assert not report.passed
    stage = report.failed_stage()
    assert stage.index == 0 and stage.name == "threshold"
    assert stage.details["diameter"] == pytest.approx(0.6, rel=1e-6)
    assert report.gap is None


def test_pipeline_passes_on_horoconvex_ellipse():
    ell = ellipse_domain(POINCARE, a=0.1, b=0.085, n=192)
    cert = is_horoconvex(ell)
    assert bool(cert) and cert.min_geodesic_curvature > 1.05
    report = verify_pipeline(ell)
    assert report.passed
    assert [st.passed for st in report.stages] == [True] * 7
    assert report.failed_stage() is None
    assert report.gap >= report.bound
    assert report.bound == pytest.approx(gap_lower_bound(report.diameter_hyp),
                                         rel=1e-14)
    data = report.to_json()
    assert data["passed"] is True
    assert len(data["stages"]) == 7
    assert set(data["config"]) == {"R", "r_max", "C_max", "D_max", "rho_max"}


def test_pipeline_recenters_offset_ball():
    # a euclidean disk away from the origin is still a hyperbolic ball; the
    # Mobius stage must bring it into the admissible coordinate ball
    dom = disk_domain(POINCARE, center=(0.1, 0.05), radius=0.07, n=160)
    r_before = float(np.max(np.linalg.norm(dom.vertices, axis=1)))
    report = verify_pipeline(dom)
    assert report.passed
    d1 = report.stages[1].details
    assert d1["diameter_after"] == pytest.approx(d1["diameter_before"], rel=1e-12)
    d2 = report.stages[2].details
    assert d2["max_coordinate_radius"] < r_before
    assert d2["max_coordinate_radius"] <= math.tanh(d2["circumradius"] / 2.0) + 1e-9
    assert report.diameter_hyp == pytest.approx(2.0 * d2["circumradius"], rel=1e-6)


def test_pipeline_gap_beats_bound_on_small_balls():
    # representative of the theorem's sharp regime: gap * D^2 stays above
    # coefficient * pi^2 + (4/3) D^2
    for radius_hyp in (0.15, 0.24):
        report = verify_pipeline(hyperbolic_ball(radius_hyp))
        assert report.passed
        D = report.diameter_hyp
        assert D == pytest.approx(2.0 * radius_hyp, rel=1e-5)
        assert report.gap * D ** 2 >= GAP_COEFFICIENT * math.pi ** 2 \
            + GAP_CONSTANT * D ** 2
