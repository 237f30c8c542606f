"""Cosine-Galerkin solver for the limiting fractional heat equation.

Temperatures live in the basis c_0 = 1, c_ℓ = √2 cos(πℓu).  The bulk part is
diagonal, c_bulk (πℓ)^{3/2}.  The boundary part is the dense symmetric matrix

    K̂(ℓ,ℓ') = Σ_v c_ℓ(v) c_ℓ'(v) k k' (k² + k'² + k k') / ((k + k')(k² + k'²)),

k = (πℓ)^{1/2}, scaled by √2 π c_bd.  Since c_ℓ(1) = (-1)^ℓ c_ℓ(0) the even and
odd modes decouple.  Each sector carries one linear constraint, the boundary
value of its part of the profile, which is kept fixed by projecting the
dynamics onto the constraint hyperplane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from .kernels import absorption_rate_b, boundary_kernel_g, jump_kernel_q, resolvent_density
from .params import ModelParams, ParameterError


class InitialDataError(ValueError):
    """Initial data incompatible with the boundary temperatures."""


class JumpGateError(RuntimeError):
    """The jump-rate table has negative entries; the process is not defined."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def basis_at(ell, u):
    """c_ℓ(u) for integer arrays ``ell`` (rows) and points ``u`` (columns)."""
    ell = np.asarray(ell)
    u = np.asarray(u, dtype=float)
    out = math.sqrt(2.0) * np.cos(np.pi * np.multiply.outer(ell, u))
    out[ell == 0] = 1.0
    return out


def boundary_matrix(ell) -> np.ndarray:
    """K̂_0(ℓ,ℓ') for one boundary point; zero on the ℓ = 0 row and column."""
    ell = np.asarray(ell)
    k = np.sqrt(np.pi * ell.astype(float))
    c0 = np.where(ell == 0, 1.0, math.sqrt(2.0))
    K, Kp = np.meshgrid(k, k, indexing="ij")
    with np.errstate(invalid="ignore", divide="ignore"):
        core = K * Kp * (K**2 + Kp**2 + K * Kp) / ((K + Kp) * (K**2 + Kp**2))
    core = np.where((K == 0) | (Kp == 0), 0.0, core)
    return np.outer(c0, c0) * core


@dataclass
class Sector:
    """One parity sector: modes, operator M and constraint vector δ."""

    name: str
    modes: np.ndarray
    M: np.ndarray
    K: np.ndarray
    delta: np.ndarray
    bulk: np.ndarray

    def projector(self) -> np.ndarray:
        d = self.delta
        return np.eye(d.size) - np.outer(d, d) / (d @ d)


@dataclass
class GalerkinSystem:
    params: ModelParams
    N: int
    even: Sector
    odd: Sector

    @property
    def bulk_lambda_max(self) -> float:
        return self.params.c_bulk * (math.pi * self.N) ** 1.5

    def sector(self, name) -> Sector:
        return self.even if name == "even" else self.odd

    def quadratic_form(self, name, phi) -> float:
        """ℰ(φ) = φᵀ M φ for coefficient vectors of the sector."""
        M = self.sector(name).M
        return float(phi @ M @ phi)

    def equivalence_ratios(self, name, samples=200, seed=0, decay=1.0):
        """Ratios ℰ(φ) / ‖φ‖²_{3/4} on random coefficient vectors."""
        sec = self.sector(name)
        rng = np.random.default_rng(seed)
        w = (np.pi * sec.modes) ** 1.5
        keep = sec.modes > 0
        out = []
        for _ in range(samples):
            phi = rng.normal(size=sec.modes.size) / np.maximum(sec.modes, 1) ** decay
            phi[~keep] = 0.0
            out.append(self.quadratic_form(name, phi) / np.sum(w * phi**2))
        return np.asarray(out)


def build_galerkin(params: ModelParams, N: int = 128) -> GalerkinSystem:
    if int(N) != N or N < 8 or N % 2:
        raise ParameterError(f"mode cutoff must be an even integer >= 8, got {N!r}")
    scale = 2.0 * math.sqrt(2.0) * math.pi * params.c_bd  # two boundary points
    sectors = []
    for name, modes in (("even", np.arange(0, N + 1, 2)), ("odd", np.arange(1, N, 2))):
        bulk = params.c_bulk * (np.pi * modes) ** 1.5
        K = boundary_matrix(modes)
        M = np.diag(bulk) + scale * K
        delta = np.where(modes == 0, 1.0, math.sqrt(2.0))
        sectors.append(Sector(name, modes, M, K, delta, bulk))
    return GalerkinSystem(params, int(N), *sectors)


@dataclass
class SpectralTemperature:
    a: np.ndarray  # ℓ = 0..N
    T_L: float
    T_R: float
    t: float = 0.0

    @property
    def N(self) -> int:
        return self.a.size - 1

    def constraint_values(self):
        ell = np.arange(self.a.size)
        c0 = np.where(ell == 0, 1.0, math.sqrt(2.0))
        ev = ell % 2 == 0
        return float(np.sum(self.a[ev] * c0[ev])), float(np.sum(self.a[~ev] * c0[~ev]))

    def constraint_error(self) -> float:
        e, o = self.constraint_values()
        return max(abs(e - 0.5 * (self.T_L + self.T_R)), abs(o - 0.5 * (self.T_L - self.T_R)))

    def h34_norm(self) -> float:
        ell = np.arange(self.a.size)
        return float(np.sqrt(np.sum((np.pi * ell) ** 1.5 * self.a**2)))


def _targets(T_L, T_R):
    return {"even": 0.5 * (T_L + T_R), "odd": 0.5 * (T_L - T_R)}


def cosine_coefficients(f, N, n_quad=None) -> np.ndarray:
    """a_ℓ = ∫_0^1 f c_ℓ du by Gauss–Legendre quadrature."""
    n_quad = n_quad or max(4 * N, 256)
    x, w = special.roots_legendre(n_quad)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    fx = np.asarray(f(x), dtype=float) * w
    return basis_at(np.arange(N + 1), x) @ fx


def initial_temperature(f, N, T_L, T_R, tol=1e-8) -> SpectralTemperature:
    """Project a compatible initial profile onto the first N+1 modes.

    f must match the bath temperatures at both ends; truncation leaves a
    small constraint defect which is removed by the smallest correction in
    the H^{3/4}-weighted norm.
    """
    ends = np.asarray(f(np.array([0.0, 1.0])), dtype=float)
    bad = np.abs(ends - [T_L, T_R])
    if np.any(bad > tol):
        raise InitialDataError(f"initial profile has ends {ends.tolist()} but baths are {[T_L, T_R]}")
    a = cosine_coefficients(f, N)
    ell = np.arange(N + 1)
    c0 = np.where(ell == 0, 1.0, math.sqrt(2.0))
    w = 1.0 / (1.0 + (np.pi * ell) ** 1.5)
    for par, target in ((0, 0.5 * (T_L + T_R)), (1, 0.5 * (T_L - T_R))):
        m = ell % 2 == par
        d = c0[m]
        defect = target - d @ a[m]
        a[m] += defect * w[m] * d / np.sum(w[m] * d * d)
    return SpectralTemperature(a, float(T_L), float(T_R))


def _split(a):
    return a[0::2].copy(), a[1::2].copy()


def _merge(ae, ao):
    a = np.empty(ae.size + ao.size)
    a[0::2], a[1::2] = ae, ao
    return a


def solve_evolution(ini: SpectralTemperature, sys: GalerkinSystem, t_end, dt=None,
                    record_times=None, growth=1.05, dt_max=0.05, tol=1e-8):
    """Implicit trapezoid for da/dt = -P M a in each sector.

    P projects onto the constraint hyperplane, so δᵀa is conserved exactly in
    exact arithmetic; a fresh projection after every step removes roundoff.
    With ``dt`` given the step is uniform; otherwise it starts at
    1e-3/λ_max and grows geometrically up to ``dt_max``.
    Returns the states at ``record_times`` (default: only t_end).
    """
    if ini.N != sys.N:
        raise ParameterError(f"initial data has N={ini.N}, system has N={sys.N}")
    if ini.constraint_error() > tol:
        raise InitialDataError(f"boundary constraints violated by {ini.constraint_error():.3e}")
    if t_end < 0:
        raise ParameterError("t_end must be >= 0")
    record = sorted(set([float(t_end)] if record_times is None else map(float, record_times)))
    if record and (record[0] < 0 or record[-1] > t_end + 1e-14):
        raise ParameterError("record times must lie in [0, t_end]")
    targets = _targets(ini.T_L, ini.T_R)
    secs = (sys.even, sys.odd)
    PMs = [s.projector() @ s.M for s in secs]
    parts = list(_split(ini.a))

    def snap():
        return SpectralTemperature(_merge(*parts), ini.T_L, ini.T_R, t)

    t = 0.0
    h = dt if dt is not None else 1e-3 / sys.bulk_lambda_max
    out = []
    factored = (None, None)  # (step, per-sector factors); reused while the step is unchanged
    for tr in record:
        while t < tr - 1e-14:
            step = min(h, tr - t)
            if factored[0] != step:
                mats = []
                for PM in PMs:
                    I = np.eye(PM.shape[0])
                    mats.append((linalg.lu_factor(I + 0.5 * step * PM), I - 0.5 * step * PM))
                factored = (step, mats)
            for k, s in enumerate(secs):
                lu, rhs = factored[1][k]
                new = linalg.lu_solve(lu, rhs @ parts[k])
                d = s.delta
                new += (targets[s.name] - d @ new) * d / (d @ d)
                parts[k] = new
            t += step
            if dt is None:
                h = min(h * growth, dt_max)
        out.append(snap())
    return out


@dataclass
class StationaryProfile:
    a: np.ndarray
    T_L: float
    T_R: float
    eigenvalues: np.ndarray  # odd sector
    eigenvectors: np.ndarray  # columns, odd-sector coefficients
    theta_s: np.ndarray  # odd-sector coefficients of ϑ_s
    delta_theta: float  # ϑ_s(0) - ϑ_s(1)

    def temperature(self) -> SpectralTemperature:
        return SpectralTemperature(self.a.copy(), self.T_L, self.T_R, math.inf)


def stationary_profile(sys: GalerkinSystem, T_L, T_R) -> StationaryProfile:
    """T_s = T̄ + (ΔT/Δϑ_s) ϑ_s with ϑ_s = Σ_m Δϑ_m ϑ_m / (2 λ_m) over odd eigenpairs."""
    odd = sys.odd
    lam, vec = linalg.eigh(odd.M)
    if lam[0] <= 0:
        raise linalg.LinAlgError(f"odd-sector operator not positive (λ_1 = {lam[0]:.3e})")
    # for odd modes ϑ(1) = -ϑ(0), so Δϑ_m = 2 δᵀϑ_m
    dtheta_m = 2.0 * (odd.delta @ vec)
    theta_s = vec @ (dtheta_m / (2.0 * lam))
    dtheta_s = 2.0 * float(odd.delta @ theta_s)
    ae = np.zeros(sys.even.modes.size)
    ae[0] = 0.5 * (T_L + T_R)
    ao = (T_L - T_R) / dtheta_s * theta_s
    return StationaryProfile(_merge(ae, ao), float(T_L), float(T_R), lam, vec, theta_s, dtheta_s)


def stationary_direct(sys: GalerkinSystem, T_L, T_R) -> np.ndarray:
    """Same profile from one linear solve, M⁻¹δ normalised to the constraint."""
    odd = sys.odd
    x = linalg.solve(odd.M, odd.delta, assume_a="pos")
    ao = 0.5 * (T_L - T_R) * x / (odd.delta @ x)
    ae = np.zeros(sys.even.modes.size)
    ae[0] = 0.5 * (T_L + T_R)
    return _merge(ae, ao)


@dataclass
class ScalingReport:
    N: int
    exponents: dict
    lambda_1_odd: float
    even_null_count: int
    even_eigenvalues: np.ndarray = field(repr=False)
    odd_eigenvalues: np.ndarray = field(repr=False)


def eigen_scaling_report(sys: GalerkinSystem, null_tol=1e-10) -> ScalingReport:
    """Log-log slope of λ_m against m over m ∈ [4, N/4] for each sector."""
    if sys.N < 64:
        raise ParameterError("eigen scaling needs N >= 64")
    lam_e = linalg.eigvalsh(sys.even.M)
    lam_o = linalg.eigvalsh(sys.odd.M)
    scale = max(lam_e[-1], lam_o[-1])
    null_e = int(np.sum(np.abs(lam_e) < null_tol * scale))
    exps = {}
    # the even sector's first eigenvalue is the constant mode; number from the first positive one
    for name, lam in (("even", lam_e[null_e:]), ("odd", lam_o)):
        m = np.arange(1, lam.size + 1)
        sel = (m >= 4) & (m <= sys.N // 4)
        slope = np.polyfit(np.log(m[sel]), np.log(lam[sel]), 1)[0]
        exps[name] = float(slope)
    return ScalingReport(sys.N, exps, float(lam_o[0]), null_e, lam_e, lam_o)


def reconstruct_pointwise(a, u, with_tail=False):
    """Direct partial sum Σ a_ℓ c_ℓ(u).

    The tail estimate fits |a_ℓ| ≈ C ℓ^{-p} on the last quarter of the modes
    and bounds Σ_{ℓ>N} √2 |a_ℓ| by the integral of that envelope.
    """
    if isinstance(a, (SpectralTemperature, StationaryProfile)):
        a = a.a
    a = np.asarray(a, dtype=float)
    N = a.size - 1
    vals = a @ basis_at(np.arange(N + 1), u)
    if not with_tail:
        return vals
    tail = _tail_bound(a)
    return vals, tail


def _tail_bound(a):
    N = a.size - 1
    ell = np.arange(max(1, 3 * N // 4), N + 1)
    mag = np.abs(a[ell])
    ok = mag > 0
    if ok.sum() < 3:
        return 0.0
    p, logC = np.polyfit(np.log(ell[ok]), np.log(mag[ok]), 1)
    p = -p
    if p <= 1:
        return math.inf
    # odd and even modes often decay at different rates; take the envelope
    C = np.max(mag[ok] * ell[ok] ** p)
    return float(math.sqrt(2.0) * C * (N + 0.5) ** (1 - p) / (p - 1))


# ---------------------------------------------------------------------------
# weak-form check with the kernel module as an independent route


def _graded_nodes(v, N, n_per=16, levels=8):
    """Gauss nodes on [0,1]: geometric panels towards v, then panels short
    enough to resolve cos(πNu)."""
    graded = np.logspace(-levels, -2, levels - 1)
    k = max(int(math.ceil(0.99 * N / 4)), 8)
    edges = np.concatenate([[0.0], graded, np.linspace(0.01, 1.0, k + 1)[1:]])
    x, w = special.roots_legendre(n_per)
    xs = (edges[:-1, None] + 0.5 * np.diff(edges)[:, None] * (x + 1)).ravel()
    ws = (0.5 * np.diff(edges)[:, None] * w).ravel()
    return (xs, ws) if v == 0 else (1.0 - xs, ws)


def weak_form_residual(a, params: ModelParams, T_L, T_R, phi, phi_coeffs=None, s_max=40.0, n_s=400):
    """Right-hand side of the weak equation for T = Σ a_ℓ c_ℓ tested against φ.

    The bulk part uses the spectral symbol of the fractional operator on the
    cosine coefficients of φ.  The boundary part is evaluated from its
    resolvent-kernel representation

        c_bd Σ_v ∫_0^∞ ρ^{-3/4} ⟨V_ρ(·,v), φ⟩ ⟨V_ρ(·,v), T_v - T⟩ dρ

    by quadrature in u and in s = ρ^{1/4}.  For a stationary solution the
    result vanishes for every φ vanishing at both ends.
    """
    a = np.asarray(a, float)
    N = a.size - 1
    if phi_coeffs is None:
        phi_coeffs = cosine_coefficients(phi, N)
    ell = np.arange(N + 1)
    bulk = -params.c_bulk * np.sum((np.pi * ell) ** 1.5 * phi_coeffs[: N + 1] * a)
    xs, ws = special.roots_legendre(n_s)
    s = 0.5 * s_max * (xs + 1)
    wsum = 0.5 * s_max * ws
    rho = s**4
    total = 0.0
    for v, Tv in ((0, T_L), (1, T_R)):
        u, w = _graded_nodes(v, N)
        T = reconstruct_pointwise(a, u)
        f = np.asarray(phi(u), float)
        Vr = np.stack([resolvent_density(r, u, v) for r in rho])
        pv = Vr @ (w * f)
        tv = Vr @ (w * (Tv - T))
        # ρ^{-3/4} dρ = 4 ds
        total += np.sum(wsum * 4.0 * pv * tv)
    return float(bulk + params.c_bd * total)


def random_test_functions(count, seed=0, support=(0.1, 0.9)):
    """Smooth compactly supported bumps in the interior, with random centres and widths."""
    rng = np.random.default_rng(seed)
    lo, hi = support
    funcs = []
    for _ in range(count):
        w = rng.uniform(0.05, 0.5 * (hi - lo))
        c = rng.uniform(lo + w, hi - w)
        amp = rng.normal()

        def f(u, c=c, w=w, amp=amp):
            z = (np.asarray(u, float) - c) / w
            out = np.zeros_like(z)
            m = np.abs(z) < 1
            out[m] = amp * np.exp(-1.0 / (1.0 - z[m] ** 2))
            return out

        funcs.append(f)
    return funcs


# ---------------------------------------------------------------------------
# jump-process Monte Carlo


@dataclass
class JumpRates:
    centers: np.ndarray
    width: float
    rate: np.ndarray  # r(u_i, u_j) at cell centres, zero diagonal
    kill: np.ndarray  # b(u,0) + b(u,1)
    b0: np.ndarray
    b1: np.ndarray
    min_rate: float
    min_location: tuple

    @property
    def nonnegative(self) -> bool:
        return self.min_rate >= 0


def jump_rates(params: ModelParams, cells=64, n_box=5) -> JumpRates:
    """Cell-centre rates r(u_i,u_j) = c_bulk q - c_bd Σ_v g on a uniform grid.

    The grid is mirror symmetric, so g(·,·;1) is read off from g(·,·;0).
    """
    h = 1.0 / cells
    u = (np.arange(cells) + 0.5) * h
    g0 = np.zeros((cells, cells))
    for i in range(cells):
        for j in range(i + 1, cells):
            g0[i, j] = g0[j, i] = boundary_kernel_g(u[i], u[j], 0, n_box)
    g1 = g0[::-1, ::-1]
    iu, ju = np.triu_indices(cells, 1)
    q = np.zeros((cells, cells))
    q[iu, ju] = jump_kernel_q(u[iu], u[ju])
    q = q + q.T
    r = params.c_bulk * q - params.c_bd * (g0 + g1)
    np.fill_diagonal(r, 0.0)
    off = r + np.diag(np.full(cells, np.inf))
    k = int(np.argmin(off))
    i, j = divmod(k, cells)
    b0 = absorption_rate_b(u, 0, params.c_bd)
    b1 = absorption_rate_b(u, 1, params.c_bd)
    return JumpRates(u, h, r, b0 + b1, b0, b1, float(off[i, j]), (float(u[i]), float(u[j])))


@dataclass
class JumpMCResult:
    centers: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    weight: float
    particles: int
    t: float


def _advance(cells_idx, durations, cum, lam_tot, rng):
    """Uniformised chain: events at rate lam_tot, each a jump, a death or nothing."""
    n_cells = cum.shape[1] - 2
    idx = cells_idx.copy()
    alive = np.ones(idx.size, bool)
    remaining = durations.copy()
    active = np.flatnonzero(remaining > 0)
    while active.size:
        remaining[active] -= rng.exponential(1.0 / lam_tot, size=active.size)
        fired = active[remaining[active] > 0]
        if fired.size == 0:
            break
        U = rng.random(fired.size)
        choice = (cum[idx[fired]] < U[:, None]).sum(axis=1)
        jump = choice < n_cells
        idx[fired[jump]] = choice[jump]
        dead = fired[choice == n_cells]
        alive[dead] = False
        remaining[dead] = 0.0
        active = fired[alive[fired]]
    return idx[alive]


def jump_mc_profile(params: ModelParams, t, particles, T_ini=None, cells=64, seed=0, rates=None):
    """Density of the jump process with killing and creation on a cell grid.

    Refuses with :class:`JumpGateError` unless every off-diagonal rate is
    nonnegative.  ``particles`` sets the mass carried by each particle:
    the expected total mass (initial plus created up to t) divided by it.
    """
    if particles < 0:
        raise ParameterError("particle count must be >= 0")
    rates = rates or jump_rates(params, cells)
    if not rates.nonnegative:
        raise JumpGateError(
            f"jump rate negative: min r = {rates.min_rate:.4g} at (u, u') = "
            f"({rates.min_location[0]:.4f}, {rates.min_location[1]:.4f}); "
            f"gamma={params.gamma}, gamma_tilde={params.gamma_tilde}",
            rates,
        )
    u, h = rates.centers, rates.width
    ncell = u.size
    init = np.zeros(ncell) if T_ini is None else np.asarray(T_ini(u), float) * h
    source = (rates.b0 * params.T_L + rates.b1 * params.T_R) * h
    mass = init.sum() + t * source.sum()
    empty = JumpMCResult(u, np.zeros(ncell), np.zeros(ncell), 0.0, 0, float(t))
    if particles == 0 or mass == 0:
        return empty
    wgt = mass / particles
    rng = np.random.default_rng(seed)
    R = rates.rate * h
    out_rate = R.sum(axis=1) + rates.kill
    lam_tot = float(out_rate.max()) * 1.0001
    table = np.concatenate([R, rates.kill[:, None], (lam_tot - out_rate)[:, None]], axis=1) / lam_tot
    cum = np.cumsum(table, axis=1)
    cum[:, -1] = 1.0
    # initial particles by cell, plus a Poisson stream of created ones
    n0 = rng.poisson(init / wgt)
    start = np.repeat(np.arange(ncell), n0)
    dur = np.full(start.size, float(t))
    nc = rng.poisson(t * source / wgt)
    born = np.repeat(np.arange(ncell), nc)
    dur_b = t - rng.uniform(0.0, t, size=born.size)
    final = _advance(np.concatenate([start, born]), np.concatenate([dur, dur_b]), cum, lam_tot, rng)
    counts = np.bincount(final, minlength=ncell).astype(float)
    # counts are Poisson (thinning of Poisson streams), so var = mean
    return JumpMCResult(u, wgt * counts / h, wgt * np.sqrt(np.maximum(counts, 1.0)) / h, wgt,
                        int(final.size), float(t))


def kolmogorov_distance(density_a, density_b, width):
    """Sup distance between the cumulative masses of two cell densities."""
    ca = np.cumsum(np.asarray(density_a) * width)
    cb = np.cumsum(np.asarray(density_b) * width)
    return float(np.max(np.abs(ca - cb)))
