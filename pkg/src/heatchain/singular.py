"""Half-line singular integral operators built from the Hilbert transform.

    𝔗f(ρ)  = 2 ∫_0^∞ ρ [f(ρ') - f(ρ)] / ((ρ - ρ')(ρ + ρ')) dρ'
    𝔗*g(ρ) = 2 ∫_0^∞ [ρ' g(ρ') - ρ g(ρ)] / ((ρ' - ρ)(ρ' + ρ)) dρ'

𝔗 is π times the Hilbert transform of the even extension, 𝔗* is -π times the
Hilbert transform of the odd extension.  On samples the transform is the
band-limited one: the discrete kernel 2/(πn) on odd offsets n, whose symbol is
exactly -i sign(ξ) below the Nyquist frequency.  It is applied as a linear
convolution through a zero-padded FFT.  The 1/ρ far field of 𝔗f is kept as
samples out to PAD·L and as a multipole series beyond, so compositions see
the whole output and not only its restriction to [0, L].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal, special

PAD = 4
MAX_MULTIPOLES = 40


class TruncationWarning(UserWarning):
    pass


@dataclass
class FarField:
    """Continuation of a function beyond its grid: samples on (L, PAD·L) and
    coefficients c_m of Σ c_m ρ^{-(2m+1)} further out."""

    samples: np.ndarray
    coeffs: np.ndarray


@dataclass
class HalfLineFunction:
    values: np.ndarray  # samples at ρ_k = k h, k = 0..M-1
    L: float
    far: FarField | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 4:
            raise ValueError("need a 1-d sample array with at least 4 points")

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return self.L / (self.M - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.M) * self.h

    @classmethod
    def sample(cls, f, L, M):
        rho = np.linspace(0.0, L, M)
        return cls(np.asarray(f(rho), dtype=float), float(L))

    def inner(self, other: "HalfLineFunction") -> float:
        """Trapezoid inner product on [0, L]."""
        w = np.full(self.M, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return float(np.sum(w * self.values * other.values))

    def norm(self, include_far=True) -> float:
        """L² norm on the half line, including the far field when present."""
        v = self.values
        total = self.h * (0.5 * v[0] ** 2 + np.sum(v[1:] ** 2))
        if include_far and self.far is not None:
            s = self.far.samples
            total += self.h * np.sum(s**2)
            K = self.M + s.size
            c = self.far.coeffs
            # Σ_{k≥K} h (Σ_m c_m (k h)^{-2m-1})² by Hurwitz zeta sums
            X = K * self.h
            for i, ci in enumerate(c):
                for j, cj in enumerate(c):
                    p = 2 * (i + j) + 2
                    total += ci * cj * self.h * X**-p * _scaled_hurwitz(p, K)
        return math.sqrt(total)

    def __add__(self, other):
        return HalfLineFunction(self.values + other.values, self.L)

    def __mul__(self, a):
        return HalfLineFunction(a * self.values, self.L)

    __rmul__ = __mul__


def _kernel(n):
    out = np.zeros(n.shape)
    odd = n % 2 != 0
    out[odd] = 2.0 / (np.pi * n[odd])
    return out


def discrete_hilbert(x, first, out_idx):
    """(H x)_j = Σ_k κ_{j-k} x_k with κ_n = 2/(πn) for odd n.

    ``x`` holds samples at indices first, first+1, ...; the result is
    returned at the integer indices ``out_idx`` (a contiguous range).
    """
    x = np.asarray(x, float)
    lo, hi = int(out_idx[0]), int(out_idx[-1])
    nmin, nmax = lo - (first + x.size - 1), hi - first
    kern = _kernel(np.arange(nmin, nmax + 1))
    full = signal.fftconvolve(x, kern)
    # full[t] pairs x index first+a with kernel offset nmin+b, t = a + b
    start = lo - first - nmin
    return full[start : start + (hi - lo + 1)]


def _check_decay(f: HalfLineFunction, name):
    peak = np.max(np.abs(f.values))
    edge = abs(f.values[-1])
    if peak > 0 and edge > 1e-8 * peak:
        warnings.warn(
            f"{name}: input does not decay at the grid end (|f(L)|/max|f| = {edge / peak:.2e}); "
            f"aliasing error of order {edge / peak:.1e}",
            TruncationWarning,
            stacklevel=3,
        )


def _scaled_hurwitz(p, q):
    """Σ_{n≥0} (1 + n/q)^{-p} = q^p ζ(p, q), without overflow."""
    if p * math.log(q) < 600.0:
        return float(math.exp(math.log(special.zeta(p, q)) + p * math.log(q)))
    n = np.arange(int(q * math.expm1(40.0 / p)) + 2)
    return float(np.sum((1.0 + n / q) ** -p))


def _moments(f: HalfLineFunction):
    """Coefficients of π H f_e(ρ) = Σ_m M_2m ρ^{-(2m+1)} for ρ beyond the support."""
    rho, h = f.grid, f.h
    w = np.full(f.M, 2.0 * h)
    w[0] = h
    # moments in units of the far radius R = PAD·L keep the powers bounded
    R = PAD * f.L
    wf = w * f.values
    x2 = (rho / R) ** 2
    out, term = [], wf.copy()
    for m in range(MAX_MULTIPOLES):
        c = float(np.sum(term))
        out.append(c * R ** (2 * m))
        if m > 0 and abs(c) < 1e-18 * abs(out[0]) + 1e-300:
            break
        term = term * x2
    return np.asarray(out)


def apply_T(f: HalfLineFunction) -> HalfLineFunction:
    """𝔗f on the grid of f, with its continuation stored as far field."""
    _check_decay(f, "apply_T")
    M = f.M
    ext = np.concatenate([f.values[:0:-1], f.values])  # indices -(M-1)..M-1
    out = np.pi * discrete_hilbert(ext, -(M - 1), np.arange(0, PAD * M))
    out[0] = 0.0  # odd output
    far = FarField(out[M:], _moments(f))
    return HalfLineFunction(out[:M], f.L, far)


def _far_tail_term(coeffs, h, K, j):
    """Σ_{|k|≥K} κ_{j-k} v_k for the odd sequence v_k = Σ_m c_m (k h)^{-2m-1}.

    Equals -(4/π) Σ_{k≥K, k-j odd} k v_k / (k² - j²); 1/(k² - j²) is expanded
    in (j/k)² and each power summed over one parity class with Hurwitz zeta.
    """
    j = np.asarray(j, float)
    out = np.zeros_like(j)
    jmax = j.max(initial=0.0)
    n_exp = max(8, int(math.ceil(40.0 / max(math.log(K / max(jmax, 1.0)), 1e-3))))
    for parity in (0, 1):
        sel = (j.astype(int) % 2) == parity
        if not np.any(sel):
            continue
        k0 = K if (K - parity) % 2 == 1 else K + 1  # k - j odd
        X = k0 * h
        ratio = (j[sel] / k0) ** 2
        acc = np.zeros_like(ratio)
        # Σ_{k=k0,k0+2,..} k^{-p} = k0^{-p} Σ_n (1 + n/(k0/2))^{-p}
        for m, c in enumerate(coeffs):
            for i in range(n_exp):
                p = 2 * m + 2 * i + 2
                acc += c * X ** (-2 * m - 1) * ratio**i * _scaled_hurwitz(p, k0 / 2.0) / k0
        out[sel] = -4.0 / np.pi * acc
    return out


def apply_T_star(g: HalfLineFunction) -> HalfLineFunction:
    """𝔗*g on the grid of g.  A far field attached to g is included."""
    if g.far is None:
        _check_decay(g, "apply_T_star")
    M = g.M
    vals = g.values if g.far is None else np.concatenate([g.values, g.far.samples])
    # odd extension; the value at 0 is dropped by oddness
    odd = np.concatenate([-vals[:0:-1], [0.0], vals[1:]])
    first = -(vals.size - 1)
    Hg = discrete_hilbert(odd, first, np.arange(0, M))
    if g.far is not None and g.far.coeffs.size:
        Hg = Hg + _far_tail_term(g.far.coeffs, g.h, vals.size, np.arange(M))
    return HalfLineFunction(-np.pi * Hg, g.L)


def verify_TstarT(f: HalfLineFunction, constant=2.0 * math.pi**2) -> float:
    """‖𝔗*𝔗f - constant·f‖ / ‖f‖ on [0, L]."""
    out = apply_T_star(apply_T(f))
    diff = HalfLineFunction(out.values - constant * f.values, f.L)
    return diff.norm() / f.norm()


# ---------------------------------------------------------------------------
# principal-value quadrature oracles


def _pv_excised(F, rho, a, b, eps, epsrel=1e-12):
    """PV ∫_a^b F(y)/(y - ρ) dy with the interval ρ ± ε cut out.

    The cut interval is integrated from the difference quotient
    (F(y) - F(ρ))/(y - ρ), which is smooth; the F(ρ) part has zero principal
    value over a symmetric interval.  The two outer pieces are ordinary
    integrals, with the exact log term for the constant part.
    """
    Fr = F(rho)
    x, w = np.polynomial.legendre.leggauss(20)
    y = rho + eps * x
    near = eps * np.sum(w * (F(y) - Fr) / (y - rho))
    kw = dict(epsabs=1e-14, epsrel=epsrel, limit=400)
    left = integrate.quad(lambda s: F(s) / (s - rho), a, rho - eps, **kw)[0] if rho - eps > a else 0.0
    right = integrate.quad(lambda s: F(s) / (s - rho), rho + eps, b, **kw)[0]
    return near + left + right


def T_quadrature(f, rho, support, eps=None):
    """𝔗f(ρ) by direct principal-value quadrature; f must vanish outside ``support``."""
    a, b = 0.0, float(support)
    out = []
    for r in np.atleast_1d(rho):
        e = eps if eps is not None else min(1e-2, 0.5 * r) if r > 0 else 0.0
        if r == 0:
            out.append(0.0)
            continue
        # 2ρ/(ρ² - y²) = -2ρ / ((y - ρ)(y + ρ))
        F = lambda y, r=r: -2.0 * r * np.asarray(f(y)) / (y + r)  # noqa: E731
        out.append(_pv_excised(F, r, a, max(b, r + 2 * e), e))
    return np.asarray(out)


def T_star_quadrature(g, rho, support, eps=None):
    """𝔗*g(ρ) by direct principal-value quadrature."""
    a, b = 0.0, float(support)
    out = []
    for r in np.atleast_1d(rho):
        e = eps if eps is not None else min(1e-2, 0.5 * r) if r > 0 else 1e-2
        if r == 0:
            # 𝔗*g(0) = 2 ∫ g(y)/y dy
            out.append(2.0 * integrate.quad(lambda y: g(y) / y, 0.0, b, limit=400, epsabs=1e-14)[0])
            continue
        F = lambda y, r=r: 2.0 * y * np.asarray(g(y)) / (y + r)  # noqa: E731
        out.append(_pv_excised(F, r, a, max(b, r + 2 * e), e))
    return np.asarray(out)


def T_quadrature_cauchy(f, rho, support):
    """Same as :func:`T_quadrature` through QUADPACK's Cauchy-weight rule."""
    out = []
    for r in np.atleast_1d(rho):
        val = integrate.quad(lambda y, r=r: -2.0 * r * f(y) / (y + r), 0.0, float(support),
                             weight="cauchy", wvar=r, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
        out.append(val)
    return np.asarray(out)


def gaussian_bump(center, width):
    return lambda r: np.exp(-0.5 * ((np.asarray(r, float) - center) / width) ** 2)


def smooth_bump(center, radius):
    """C^∞ bump exp(-1/(1-z²)) supported on center ± radius."""

    def f(r):
        z = (np.asarray(r, float) - center) / radius
        out = np.zeros_like(z)
        m = np.abs(z) < 1
        out[m] = np.exp(-1.0 / (1.0 - z[m] ** 2))
        return out

    return f
