"""Kernels of the macroscopic equation on [0, 1].

Conventions
-----------
* Neumann Green's function G_λ = (λ - Δ_N)^{-1} on [0, 1] and the resolvent
  density V_ρ = ρ G_ρ.
* Jump kernel q of the spectral fractional Laplacian |Δ|^{3/4}, an image sum
  of the free-space kernel K(d) = C |d|^{-5/2} with C = 3 / (2^{5/2} √π).
* Boundary kernel g(u, u'; v) = Σ_{n,n'} W(u+v+2n, u'+v+2n'), where W is
  homogeneous of degree -5/2, and the absorption rate
  b(u; v) = ∫ g(u, u'; v) du' = √π Σ_n |u+v+2n|^{-3/2}.

Every kernel has at least two evaluation routes, used for cross-checks.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from heatchain.params import ModelParams

Q_CONST = 3.0 / (2.0**2.5 * math.sqrt(math.pi))
W_THETA_PREF = 5.0 * special.gamma(0.25) ** 2 / (32.0 * math.pi)
W_HYP_PREF = 3.0 * math.sqrt(math.pi) / 2.0**3.5


class KernelDomainError(ValueError):
    """Raised at singular or out-of-domain kernel arguments."""


# ---------------------------------------------------------------------------
# Green's function and V_ρ


def _check_lambda(lam):
    if np.any(np.asarray(lam) <= 0):
        raise KernelDomainError("λ must be positive")


def green_images(lam, u, v, n_img=None):
    """Truncated image sum Σ_k [g(u-v+2k) + g(u+v+2k)], g(x) = e^{-√λ|x|}/(2√λ).

    Returns (value, tail_bound).  The default truncation makes the geometric
    tail smaller than 1e-17 of the value.
    """
    _check_lambda(lam)
    s = math.sqrt(lam)
    if n_img is None:
        n_img = int(math.ceil(20.0 / s)) + 2
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    k = np.arange(-n_img, n_img + 1).reshape((-1,) + (1,) * u.ndim)
    val = (np.exp(-s * np.abs(u - v + 2 * k)) + np.exp(-s * np.abs(u + v + 2 * k))).sum(axis=0) / (2 * s)
    # each neglected term is at most e^{-s(2|k|-2)}/(2s); geometric ratio e^{-2s}
    r = math.exp(-2 * s)
    tail = 4 * math.exp(-s * (2 * n_img)) / (2 * s) / (1 - r)
    return val, tail


def green_resummed(lam, u, v):
    """Image sum summed in closed form; stable for all λ > 0."""
    _check_lambda(lam)
    s = np.sqrt(lam)
    u, v = np.asarray(u, float), np.asarray(v, float)

    def folded(x):
        # Σ_k e^{-s|x+2k|} for x in [0, 2]
        return (np.exp(-s * x) + np.exp(-s * (2.0 - x))) / (-np.expm1(-2.0 * s))

    return (folded(np.abs(u - v)) + folded(u + v)) / (2.0 * s)


def green_cosine(lam, u, v, n_cos=4096):
    """Cosine series Σ c_m(u)c_m(v)/(λ + (mπ)²) with two Kummer subtractions.

    Returns (value, tail_bound).  The m^{-2} and m^{-4} parts are summed in
    closed form (Bernoulli polynomials on [0, 2π]); the remainder decays
    like m^{-6}.
    """
    _check_lambda(lam)
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    m = np.arange(1, n_cos + 1, dtype=float).reshape((-1,) + (1,) * u.ndim)
    mp2 = (m * math.pi) ** 2

    def cos_sum2(x):
        # Σ_{m≥1} cos(mx)/m²
        x = np.mod(x, 2 * math.pi)
        return math.pi**2 / 6 - math.pi * x / 2 + x * x / 4

    def cos_sum4(x):
        # Σ_{m≥1} cos(mx)/m⁴
        x = np.mod(x, 2 * math.pi)
        return math.pi**4 / 90 - math.pi**2 * x**2 / 12 + math.pi * x**3 / 12 - x**4 / 48

    xm, xp = math.pi * np.abs(u - v), math.pi * (u + v)
    s2 = (cos_sum2(xm) + cos_sum2(xp)) / math.pi**2
    s4 = -lam * (cos_sum4(xm) + cos_sum4(xp)) / math.pi**4
    corr = lam * lam * ((np.cos(m * xm) + np.cos(m * xp)) / (mp2 * mp2 * (lam + mp2))).sum(axis=0)
    tail = 2 * lam * lam / (5 * math.pi**6 * n_cos**5)
    return 1.0 / lam + s2 + s4 + corr, tail


def green_function(lam, u, v, method="images"):
    """G_λ(u, v) by the chosen route ('images', 'cosine' or 'resummed')."""
    if method == "images":
        return green_images(lam, u, v)[0]
    if method == "cosine":
        return green_cosine(lam, u, v)[0]
    if method == "resummed":
        return green_resummed(lam, u, v)
    raise ValueError(f"unknown method {method!r}")


def resolvent_density(rho, u, v):
    """V_ρ(u, v) = ρ G_ρ(u, v), a probability density in u."""
    return rho * green_resummed(rho, u, v)


# ---------------------------------------------------------------------------
# Jump kernel q


def _abs_power_image_sum(a, power, n_img):
    """Σ_{n∈Z} |a + 2n|^{-power} with |n| ≤ n_img plus a midpoint tail estimate.

    Returns (value, error bound of the tail estimate).
    """
    a = np.asarray(a, dtype=float)
    n = np.arange(-n_img, n_img + 1).reshape((-1,) + (1,) * a.ndim)
    core = (np.abs(a + 2 * n) ** -power).sum(axis=0)
    k = power - 1.0
    tail = ((a + 2 * n_img + 1) ** -k + (2 * n_img + 1 - a) ** -k) / (2 * k)
    err = power * (2 * n_img - 1) ** -(power + 1) / 6.0
    return core + tail, err


def _abs_power_zeta(a, power):
    """Σ_{n∈Z} |a + 2n|^{-power} through the Hurwitz zeta function."""
    a = np.mod(np.asarray(a, dtype=float), 2.0)
    return 2.0**-power * (special.zeta(power, a / 2.0) + special.zeta(power, 1.0 - a / 2.0))


def _q_args(u, up):
    u, up = np.broadcast_arrays(np.asarray(u, float), np.asarray(up, float))
    if np.any(u == up):
        raise KernelDomainError("q(u, u') is singular at u = u'")
    return u, up


def jump_kernel_q(u, up, n_img=2000, with_error=False):
    """q(u, u') by truncated image sums with an analytic tail."""
    u, up = _q_args(u, up)
    s1, e1 = _abs_power_image_sum(u + up, 2.5, n_img)
    s2, e2 = _abs_power_image_sum(u - up, 2.5, n_img)
    val = Q_CONST * (s1 + s2)
    return (val, Q_CONST * (e1 + e2)) if with_error else val


def jump_kernel_q_zeta(u, up):
    """q(u, u') via Hurwitz zeta (independent route)."""
    u, up = _q_args(u, up)
    return Q_CONST * (_abs_power_zeta(u + up, 2.5) + _abs_power_zeta(u - up, 2.5))


def _periodic_even(phi):
    """Even, 2-periodic extension of a function on [0, 1]."""

    def ext(w):
        m = np.mod(w, 2.0)
        return phi(np.where(m <= 1.0, m, 2.0 - m))

    return ext


def _image_kernel(d):
    """Σ_{n≠0} K(d + 2n) for d in [-1, 1] (smooth there)."""
    return Q_CONST * 2.0**-2.5 * (special.zeta(2.5, 1.0 + d / 2.0) + special.zeta(2.5, 1.0 - d / 2.0))


def fractional_laplacian_pv(phi, u, eps=1e-4, d2phi=None, epsrel=1e-11):
    """∫_0^1 q(u', u)[φ(u') - φ(u)] du' by principal-value quadrature.

    The integral is unfolded onto the even 2-periodic extension Φ of φ and
    centred at u, so the only singularity is d = u' - u = 0.  The pair
    Φ(u+d) + Φ(u-d) - 2φ(u) is integrated in d = s² on [ε, 1]; the core
    [0, ε] contributes 2C√ε φ''(u) analytically.  The smooth image part is
    integrated directly.  For a cosine mode c_ℓ the result is -(πℓ)^{3/2} c_ℓ.
    """
    Phi = _periodic_even(phi)
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.empty_like(uu)
    se = math.sqrt(eps)
    for i, x in enumerate(uu):
        f0 = float(phi(np.asarray(x)))
        if d2phi is not None:
            curv = float(d2phi(np.asarray(x)))
        else:
            hh = 1e-3
            curv = float(Phi(np.asarray(x + hh)) + Phi(np.asarray(x - hh)) - 2 * f0) / hh**2

        def sym(s, x=x, f0=f0):
            d = s * s
            return 2.0 * Q_CONST * (Phi(np.asarray(x + d)) + Phi(np.asarray(x - d)) - 2 * f0) / s**4

        def img(d, x=x, f0=f0):
            return _image_kernel(d) * (Phi(np.asarray(x + d)) - f0)

        main = integrate.quad(sym, se, 1.0, epsabs=1e-10, epsrel=epsrel, limit=400)[0]
        rest = integrate.quad(img, -1.0, 1.0, epsabs=1e-13, epsrel=epsrel, limit=400)[0]
        out[i] = main + rest + 2.0 * Q_CONST * se * curv
    return out if np.ndim(u) else out[0]


def q_mode_eigenvalue(ell: int, n_nodes: int = 24, eps: float = 1e-4) -> float:
    """Rayleigh quotient -<c_ℓ, Lc_ℓ> of the q-operator on the cosine mode ℓ."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    u, w = 0.5 * (x + 1.0), 0.5 * w
    k = math.pi * ell
    phi = lambda y: math.sqrt(2.0) * np.cos(k * y)  # noqa: E731
    d2 = lambda y: -k * k * math.sqrt(2.0) * np.cos(k * y)  # noqa: E731
    Lphi = fractional_laplacian_pv(phi, u, eps=eps, d2phi=d2)
    return float(-np.sum(w * phi(u) * Lphi) / np.sum(w * phi(u) ** 2))


# ---------------------------------------------------------------------------
# W and g


def W_theta(u, up, epsrel=1e-13):
    """W(u, u') from its θ-integral (adaptive quadrature)."""
    u, up = abs(float(u)), abs(float(up))
    if u == 0 and up == 0:
        raise KernelDomainError("W is singular at the origin")

    def f(t):
        s, c = math.sin(t), math.cos(t)
        return (math.sin(2 * t) ** 2 / ((u * s) ** 2 + (up * c) ** 2)) ** 1.25

    peak = math.atan2(up, u) if u > 0 else math.pi / 2
    pts = [peak] if 0 < peak < math.pi / 2 else None
    val = integrate.quad(f, 0.0, math.pi / 2, points=pts, epsabs=0, epsrel=epsrel, limit=500)[0]
    return W_THETA_PREF * val


def hypergeometric_series(a, b, c, z, rtol=1e-16, max_terms=10**6):
    """Gauss 2F1(a, b; c; z) by its power series for 0 ≤ z < 1.

    Truncates once the remaining terms, bounded geometrically by
    t_k z/(1 - z) (valid when the term ratio is below z), fall under rtol.
    Returns (value, terms used).
    """
    if not 0 <= z < 1:
        raise KernelDomainError("series route needs 0 <= z < 1")
    total, term = 1.0, 1.0
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * z
        total += term
        ratio_ok = (a + k + 1) * (b + k + 1) <= (c + k + 1) * (k + 2)
        if ratio_ok and term * z / (1 - z) < rtol * abs(total):
            return total, k + 1
    raise RuntimeError("hypergeometric series did not converge")


def W_hypergeometric(u, up):
    """W(u, u') = 3√π/(2^{7/2} u^{5/2}) F(5/4, 7/4; 7/2; 1 - (u'/u)²), u' ≤ u."""
    u, up = abs(float(u)), abs(float(up))
    hi, lo = max(u, up), min(u, up)
    if hi == 0:
        raise KernelDomainError("W is singular at the origin")
    F, _ = hypergeometric_series(1.25, 1.75, 3.5, 1.0 - (lo / hi) ** 2)
    return W_HYP_PREF * hi**-2.5 * F


def W_kernel(x, y):
    """Vectorized W for the lattice sums (library 2F1)."""
    x, y = np.abs(np.asarray(x, float)), np.abs(np.asarray(y, float))
    hi, lo = np.maximum(x, y), np.minimum(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        return W_HYP_PREF * hi**-2.5 * special.hyp2f1(1.25, 1.75, 3.5, 1.0 - (lo / hi) ** 2)


_GL40 = np.polynomial.legendre.leggauss(40)


def _lattice_tail(a, b, N):
    """(1/4)∫ W over the plane minus the box covered by the (2N+1)² cells.

    W is homogeneous of degree -5/2, so in polar coordinates the radial
    integral is 2 r_box(φ)^{-1/2} w(φ); the angle integral is split at the
    box corners and the axes.
    """
    L, R = a - 2 * N - 1, a + 2 * N + 1
    D, U = b - 2 * N - 1, b + 2 * N + 1
    corners = [math.atan2(y, x) % (2 * math.pi) for x, y in ((R, U), (L, U), (L, D), (R, D))]
    breaks = sorted(set(corners + [0.0, math.pi / 2, math.pi, 1.5 * math.pi, 2 * math.pi]))
    xg, wg = _GL40
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        ph = 0.5 * (hi + lo) + 0.5 * (hi - lo) * xg
        c, s = np.cos(ph), np.sin(ph)
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(c > 0, R / c, np.where(c < 0, L / c, np.inf))
            ty = np.where(s > 0, U / s, np.where(s < 0, D / s, np.inf))
        rb = np.minimum(tx, ty)
        total += 0.5 * (hi - lo) * np.sum(wg * W_kernel(c, s) * 2.0 / np.sqrt(rb))
    return 0.25 * total


def boundary_kernel_g(u, up, v, n_box=20, with_error=False):
    """g(u, u'; v) = Σ_{n,n'} W(u+v+2n, u'+v+2n').

    Box sums at N, 2N, 4N plus the continuum tail, extrapolated with the
    error exponents 5/2 and 9/2 of the cell-midpoint rule.  The returned
    error estimate is the change from the two-level extrapolation.
    """
    a, b = float(u) + v, float(up) + v
    if v not in (0, 1):
        raise KernelDomainError("v must be 0 or 1")
    if math.isclose(math.remainder(a, 2.0), 0.0, abs_tol=1e-15) and math.isclose(
        math.remainder(b, 2.0), 0.0, abs_tol=1e-15
    ):
        raise KernelDomainError("g is singular when u = u' = v")
    Nmax = 4 * n_box
    n = np.arange(-Nmax, Nmax + 1)
    Wv = W_kernel(a + 2 * n[:, None], b + 2 * n[None, :])
    levels = []
    for N in (n_box, 2 * n_box, 4 * n_box):
        sl = slice(Nmax - N, Nmax + N + 1)
        levels.append(Wv[sl, sl].sum() + _lattice_tail(a, b, N))
    r = np.asarray(levels)
    p1, p2 = 2.0**2.5, 2.0**4.5
    e1 = (p1 * r[1:] - r[:-1]) / (p1 - 1)
    val = (p2 * e1[1] - e1[0]) / (p2 - 1)
    return (val, abs(val - e1[1])) if with_error else val


def boundary_kernel_g_quadrature(u, up, v, epsrel=1e-12):
    """∫_0^∞ V_ρ(u,v) V_ρ(u',v) ρ^{-3/4} dρ with ρ = s⁴ (integrand 4 V V ds)."""
    dist = abs(u - v) + abs(up - v)
    if dist == 0:
        raise KernelDomainError("g is singular when u = u' = v")
    smax = math.sqrt(80.0 / min(dist, 2.0))

    def f(s):
        rho = s**4
        return 4.0 * resolvent_density(rho, u, v) * resolvent_density(rho, up, v)

    return integrate.quad(f, 0.0, smax, epsabs=0, epsrel=epsrel, limit=500)[0]


def absorption_rate_b(u, v, c_bd=1.0, n_img=4000):
    """b(u; v) = c_bd √π Σ_n |u+v+2n|^{-3/2} (c_bd defaults to 1)."""
    u = np.asarray(u, dtype=float)
    if v not in (0, 1):
        raise KernelDomainError("v must be 0 or 1")
    if np.any(u == v):
        raise KernelDomainError("b(u; v) is singular at u = v")
    s, _ = _abs_power_image_sum(u + v, 1.5, n_img)
    return c_bd * math.sqrt(math.pi) * s


def absorption_rate_b_zeta(u, v, c_bd=1.0):
    u = np.asarray(u, dtype=float)
    if np.any(u == v):
        raise KernelDomainError("b(u; v) is singular at u = v")
    return c_bd * math.sqrt(math.pi) * _abs_power_zeta(u + v, 1.5)


# ---------------------------------------------------------------------------
# Integral formulas


def quartic_integral_one(a, b):
    """π / ((2a)^{3/2} b^{1/2}) = ∫_0^∞ dλ / (a² + b²λ⁴)."""
    return math.pi / ((2 * a) ** 1.5 * math.sqrt(b))


def quartic_integral_two(a1, b1, a2, b2):
    """Closed form of ∫_0^∞ dλ / ((a1² + b1²λ⁴)(a2² + b2²λ⁴))."""
    num = math.pi * (a1 * b2 + a2 * b1 + math.sqrt(a1 * b1 * a2 * b2))
    den = 2**1.5 * (a1 * a2) ** 1.5 * (math.sqrt(a1 * b2) + math.sqrt(a2 * b1)) * (a1 * b2 + a2 * b1)
    return num / den


@dataclass
class FormulaCheck:
    name: str
    computed: float
    expected: float
    tolerance: float

    @property
    def error(self) -> float:
        return abs(self.computed - self.expected) / abs(self.expected)

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _quad_inf(f):
    # split at 1 and map the tail with λ = 1/t to keep quad on finite ranges
    head = integrate.quad(f, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)[0]
    tail = integrate.quad(lambda t: f(1.0 / t) / (t * t), 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)[0]
    return head + tail


def integral_formulas_selftest(grid=((1.0, 1.0), (0.5, 2.0), (3.0, 0.7), (2.0, 5.0))) -> list[FormulaCheck]:
    checks = []
    for a, b in grid:
        q = _quad_inf(lambda x, a=a, b=b: 1.0 / (a * a + b * b * x**4))
        checks.append(FormulaCheck(f"quartic_one(a={a},b={b})", q, quartic_integral_one(a, b), 1e-10))
    for a1, b1, a2, b2 in ((1.0, 1.0, 2.0, 1.0), (0.5, 2.0, 1.5, 0.3)):
        q = _quad_inf(lambda x: 1.0 / ((a1**2 + b1**2 * x**4) * (a2**2 + b2**2 * x**4)))
        checks.append(FormulaCheck(f"quartic_two({a1},{b1},{a2},{b2})", q, quartic_integral_two(a1, b1, a2, b2), 1e-8))
    q = 2.0 * _quad_inf(lambda x: x * x / (1.0 + x**4)) / (2.0 * math.pi)
    checks.append(FormulaCheck("residue_v2_over_1pv4", q, 2.0**-1.5, 1e-10))
    return checks


# ---------------------------------------------------------------------------
# Rate decomposition and tables


@dataclass
class RateDecomposition:
    u: np.ndarray
    rate: np.ndarray  # r(u_i, u_j), NaN on the diagonal
    b0: np.ndarray
    b1: np.ndarray
    min_value: float
    min_location: tuple
    nonnegative: bool
    params: dict = field(default_factory=dict)


def rate_sign_report(grid, params: ModelParams, n_box=20) -> RateDecomposition:
    """Tabulate r(u,u') = c_bulk q(u',u) - c_bd Σ_v g(u,u';v) off the diagonal."""
    u = np.asarray(grid, dtype=float)
    m = u.size
    r = np.full((m, m), np.nan)
    for i in range(m):
        for j in range(i + 1, m):
            gsum = boundary_kernel_g(u[i], u[j], 0, n_box) + boundary_kernel_g(u[i], u[j], 1, n_box)
            r[i, j] = r[j, i] = params.c_bulk * jump_kernel_q(u[j], u[i]) - params.c_bd * gsum
    k = np.nanargmin(r)
    i, j = divmod(int(k), m)
    return RateDecomposition(
        u=u,
        rate=r,
        b0=absorption_rate_b(u, 0, params.c_bd),
        b1=absorption_rate_b(u, 1, params.c_bd),
        min_value=float(r[i, j]),
        min_location=(float(u[i]), float(u[j])),
        nonnegative=bool(np.nanmin(r) >= 0),
        params={"gamma": params.gamma, "gamma_tilde": params.gamma_tilde},
    )


def clustered_grid(m: int) -> np.ndarray:
    """Interior Chebyshev points on (0, 1), clustered near both ends."""
    k = np.arange(m)
    return 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / m))


@dataclass
class KernelTable:
    """Tabulated kernels with truncation metadata."""

    u: np.ndarray
    rho: np.ndarray
    g_u: np.ndarray
    V: np.ndarray  # (rho, u, v) for v in {0, 1}
    q: np.ndarray  # (u, u), NaN on diagonal
    W: np.ndarray  # (u, u)
    b: np.ndarray  # (u, v)
    g: np.ndarray  # (g_u, g_u, v)
    meta: dict = field(default_factory=dict)

    def normalization_errors(self, n_nodes: int = 0) -> np.ndarray:
        """max_v |∫_0^1 V_ρ(u,v) du - 1| for each tabulated ρ (adaptive quadrature)."""
        errs = np.empty(self.rho.size)
        for i, rho in enumerate(self.rho):
            worst = 0.0
            for v in (0.0, 1.0):
                val = integrate.quad(lambda x: resolvent_density(rho, x, v), 0.0, 1.0, points=[v] if 0 < v < 1 else None,
                                     epsabs=1e-14, epsrel=1e-13, limit=400)[0]
                worst = max(worst, abs(val - 1.0))
            errs[i] = worst
        return errs

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in sorted(self.meta.items()):
            buf.write(f"# {k}: {json.dumps(v)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kernel", "i", "j", "k", "x1", "x2", "x3", "value"])
        for a, rho in enumerate(self.rho):
            for i, x in enumerate(self.u):
                for v in (0, 1):
                    w.writerow(["V", a, i, v, repr(float(rho)), repr(float(x)), v, repr(float(self.V[a, i, v]))])
        for i, x in enumerate(self.u):
            for j, y in enumerate(self.u):
                w.writerow(["q", i, j, "", repr(float(x)), repr(float(y)), "", repr(float(self.q[i, j]))])
                w.writerow(["W", i, j, "", repr(float(x)), repr(float(y)), "", repr(float(self.W[i, j]))])
            for v in (0, 1):
                w.writerow(["b", i, v, "", repr(float(x)), v, "", repr(float(self.b[i, v]))])
        for i, x in enumerate(self.g_u):
            for j, y in enumerate(self.g_u):
                for v in (0, 1):
                    w.writerow(["g", i, j, v, repr(float(x)), repr(float(y)), v, repr(float(self.g[i, j, v]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "KernelTable":
        meta, body = {}, []
        for line in text.splitlines():
            if line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                meta[k] = json.loads(v)
            else:
                body.append(line)
        rows = list(csv.DictReader(body))
        rho = np.asarray(meta["rho_grid"], float)
        u = np.asarray(meta["u_grid"], float)
        gu = np.asarray(meta["g_grid"], float)
        V = np.empty((rho.size, u.size, 2))
        q = np.empty((u.size, u.size))
        W = np.empty_like(q)
        b = np.empty((u.size, 2))
        g = np.empty((gu.size, gu.size, 2))
        for r in rows:
            i, j, val = int(r["i"]), int(r["j"]), float(r["value"])
            kind = r["kernel"]
            if kind == "V":
                V[i, j, int(r["k"])] = val
            elif kind == "q":
                q[i, j] = val
            elif kind == "W":
                W[i, j] = val
            elif kind == "b":
                b[i, j] = val
            elif kind == "g":
                g[i, j, int(r["k"])] = val
        return cls(u, rho, gu, V, q, W, b, g, meta)


def build_kernel_table(u_grid=None, rho_grid=None, g_grid=None, n_box=20) -> KernelTable:
    """Evaluate all kernels on grids; defaults are 65 clustered u points,
    33 log-spaced ρ in [1e-2, 1e4] and a 9-point grid for the costly g."""
    u = clustered_grid(65) if u_grid is None else np.asarray(u_grid, float)
    rho = np.logspace(-2, 4, 33) if rho_grid is None else np.asarray(rho_grid, float)
    gu = clustered_grid(9) if g_grid is None else np.asarray(g_grid, float)
    V = np.stack([np.stack([resolvent_density(r, u, v) for v in (0.0, 1.0)], axis=-1) for r in rho])
    U, UP = np.meshgrid(u, u, indexing="ij")
    off = U != UP
    q = np.full(U.shape, np.nan)
    q[off] = jump_kernel_q(U[off], UP[off])
    W = W_kernel(U, UP)
    b = np.stack([absorption_rate_b(u, 0), absorption_rate_b(u, 1)], axis=-1)
    g = np.empty((gu.size, gu.size, 2))
    for i in range(gu.size):
        for j in range(i, gu.size):
            for v in (0, 1):
                g[i, j, v] = g[j, i, v] = boundary_kernel_g(gu[i], gu[j], v, n_box)
    meta = {
        "u_grid": u.tolist(),
        "rho_grid": rho.tolist(),
        "g_grid": gu.tolist(),
        "q_image_terms": 2000,
        "b_image_terms": 4000,
        "g_box_levels": [n_box, 2 * n_box, 4 * n_box],
        "b_includes_c_bd": False,
        "format": "long CSV: kernel,i,j,k,x1,x2,x3,value",
    }
    return KernelTable(u, rho, gu, V, q, W, b, g, meta)
