"""Independent reference computations used by the test suite.

Everything in this file is deliberately written from first principles --
power series, bisection, small banded solves, finite differences along
numerically integrated geodesics -- so that the library is never checked
against its own machinery.  Keep this module free of gaplab imports.
"""

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_banded


# ---------------------------------------------------------------------------
# Bessel functions J0, J1 from their power series, zeros by bisection
# ---------------------------------------------------------------------------
def bessel_j0(x: float) -> float:
    """J0 via the alternating series sum_k (-1)^k (x/2)^{2k} / (k!)^2.

    Converges quickly in double precision for the |x| <= 20 range the tests
    use (the first zeros sit below 4).
    """
    q = -0.25 * x * x
    term = 1.0
    total = 1.0
    for k in range(1, 200):
        term *= q / (k * k)
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1e-30):
            break
    return total


def bessel_j1(x: float) -> float:
    """J1 = (x/2) sum_k (-1)^k (x/2)^{2k} / (k! (k+1)!)."""
    q = -0.25 * x * x
    term = 1.0
    total = 1.0
    for k in range(1, 200):
        term *= q / (k * (k + 1))
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1e-30):
            break
    return 0.5 * x * total


def bisect(f, a: float, b: float, tol: float = 1e-15, max_iter: int = 200) -> float:
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise ValueError(f"no sign change on [{a}, {b}]")
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0 or (b - a) < tol:
            return m
        if fa * fm < 0.0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def bessel_j0_first_zero() -> float:
    return bisect(bessel_j0, 2.0, 3.0)


def bessel_j1_first_zero() -> float:
    return bisect(bessel_j1, 3.0, 4.5)


# Frozen oracle outputs (reproduced by test_oracles.py on every run).
J0_FIRST_ZERO = 2.4048255576957724
J1_FIRST_ZERO = 3.8317059702075125
J0_FIRST_ZERO_SQ = 5.783185962946783
J1_FIRST_ZERO_SQ = 14.681970642123895


# ---------------------------------------------------------------------------
# centered finite differences
# ---------------------------------------------------------------------------
def fd_grad(f, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_hess(f, x, h: float = 1e-4) -> np.ndarray:
    """Full 2x2 Hessian from centered second differences."""
    x = np.asarray(x, dtype=float)
    f0 = f(x)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    hxx = (f(x + ex) - 2.0 * f0 + f(x - ex)) / (h * h)
    hyy = (f(x + ey) - 2.0 * f0 + f(x - ey)) / (h * h)
    hxy = (f(x + ex + ey) - f(x + ex - ey) - f(x - ex + ey) + f(x - ex - ey)) / (4.0 * h * h)
    return np.array([[hxx, hxy], [hxy, hyy]])


def eig2x2(a11: float, a12: float, a22: float):
    """Eigenvalues of a symmetric 2x2 matrix, ascending, in closed form."""
    mean = 0.5 * (a11 + a22)
    disc = np.hypot(0.5 * (a11 - a22), a12)
    return mean - disc, mean + disc


# ---------------------------------------------------------------------------
# geodesics of a conformal metric e^{2 phi} (dx^2 + dy^2), and the Hessian in
# geodesic normal coordinates built from them
# ---------------------------------------------------------------------------
def geodesic_endpoint(grad_phi, x0, v0, t: float, steps: int = 24) -> np.ndarray:
    """Integrate gamma'' = -2 (grad phi . gamma') gamma' + |gamma'|^2 grad phi.

    Classical RK4 with fixed step; the right-hand side is the geodesic
    equation of the metric e^{2 phi} delta written out via its Christoffel
    symbols.
    """
    def acc(p, v):
        gp = np.asarray(grad_phi(p), dtype=float)
        return -2.0 * float(gp @ v) * v + float(v @ v) * gp

    p = np.asarray(x0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    dt = t / steps
    for _ in range(steps):
        k1p, k1v = v, acc(p, v)
        k2p, k2v = v + 0.5 * dt * k1v, acc(p + 0.5 * dt * k1p, v + 0.5 * dt * k1v)
        k3p, k3v = v + 0.5 * dt * k2v, acc(p + 0.5 * dt * k2p, v + 0.5 * dt * k2v)
        k4p, k4v = v + dt * k3v, acc(p + dt * k3p, v + dt * k3v)
        p = p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return p


def normal_coords_hessian(phi, grad_phi, F, x, h: float = 1e-4) -> np.ndarray:
    """Hessian of F at x w.r.t. e^{2 phi} delta, via normal-coordinate stencils.

    Second differences of F along unit-speed geodesics through x; the frame
    {e1, e2} is orthonormal for the conformal metric, so chart vectors are
    scaled by e^{-phi(x)}.
    """
    x = np.asarray(x, dtype=float)
    s = np.exp(-phi(x))
    e1 = np.array([s, 0.0])
    e2 = np.array([0.0, s])
    e12 = (e1 + e2) / np.sqrt(2.0)

    def second_along(v):
        fp = F(geodesic_endpoint(grad_phi, x, v, h))
        fm = F(geodesic_endpoint(grad_phi, x, v, -h))
        return (fp - 2.0 * F(x) + fm) / (h * h)

    h11 = second_along(e1)
    h22 = second_along(e2)
    h12 = second_along(e12) - 0.5 * (h11 + h22)
    return np.array([[h11, h12], [h12, h22]])


# ---------------------------------------------------------------------------
# radial torsion two-point boundary value problem
# ---------------------------------------------------------------------------
def radial_torsion_profile(r_cap: float, f=None, n: int = 4001):
    """Solve (s u')' / s = -f(s) on [0, r_cap], u'(0) = 0, u(r_cap) = 0.

    Uniform-grid conservative finite differences; at the axis the regular
    solution behaves like u0 + c s^2 with Laplacian 4c, giving the one-sided
    closure 4 (u1 - u0)/d^2 = -f(0).  Returns (grid, u) including the
    boundary node.
    """
    if f is None:
        f = lambda s: 4.0 / (1.0 + s * s) ** 2
    d = r_cap / (n - 1)
    s = np.linspace(0.0, r_cap, n)
    m = n - 1                      # unknowns u_0 .. u_{n-2}
    ab = np.zeros((3, m))          # banded (upper, diag, lower)
    rhs = -np.array([f(si) for si in s[:m]])
    ab[1, 0] = -4.0 / d ** 2
    ab[0, 1] = 4.0 / d ** 2
    sp = s[1:m] + 0.5 * d
    sm = s[1:m] - 0.5 * d
    ab[1, 1:] = -(sp + sm) / (s[1:m] * d ** 2)
    ab[0, 2:] = sp[:-1] / (s[1:m - 1] * d ** 2)
    ab[2, 0:m - 1] = sm / (s[1:m] * d ** 2)
    u = solve_banded((1, 1), ab, rhs)
    return s, np.append(u, 0.0)


def radial_torsion_center(r_cap: float, f=None, n: int = 4001) -> float:
    """u(0) of the radial problem, Richardson-extrapolated over n and 2n-1."""
    _, coarse = radial_torsion_profile(r_cap, f, n)
    _, fine = radial_torsion_profile(r_cap, f, 2 * n - 1)
    return (4.0 * fine[0] - coarse[0]) / 3.0


# ---------------------------------------------------------------------------
# radial geodesic distances by quadrature
# ---------------------------------------------------------------------------
def poincare_radial_distance(x: float) -> float:
    val, _ = quad(lambda t: 2.0 / (1.0 - t * t), 0.0, x)
    return val


def sphere_radial_distance(x: float, R: float = 1.0) -> float:
    val, _ = quad(lambda t: 2.0 * R * R / (R * R + t * t), 0.0, x)
    return val


# ---------------------------------------------------------------------------
# closed-form fixtures reused across test modules
# ---------------------------------------------------------------------------
def square_eigenfunction(pts: np.ndarray) -> np.ndarray:
    """First Dirichlet eigenfunction of the unit square (unnormalized)."""
    pts = np.atleast_2d(pts)
    return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])


def square_log_hessian(pts: np.ndarray) -> np.ndarray:
    """Hessian entries (h11, h12, h22) of log of the square eigenfunction."""
    pts = np.atleast_2d(pts)
    h11 = -np.pi ** 2 / np.sin(np.pi * pts[:, 0]) ** 2
    h22 = -np.pi ** 2 / np.sin(np.pi * pts[:, 1]) ** 2
    return np.stack([h11, np.zeros(len(pts)), h22], axis=1)


def disk_torsion_exact(a: float, pts: np.ndarray) -> np.ndarray:
    """Flat torsion function of the disk of radius a with unit load."""
    pts = np.atleast_2d(pts)
    s = pts[:, 0] ** 2 + pts[:, 1] ** 2
    return 0.25 * (a * a - s)
