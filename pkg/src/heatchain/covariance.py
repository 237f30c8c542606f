"""Second-moment evolution of the chain and its Fourier-space algebra.

The state vector is X = (r_1..r_n, p_0..p_n).  Its second-moment matrix S
obeys, in microscopic time,

    dS/dτ = -A S - S Aᵀ + Σ₂(x(S)),

with drift A = [[0, -∇*], [-∇, -γΔ_N + γ̃E]] and noise
Σ₂(x) = blockdiag(0, γ (∇*)ᵀ diag(x) ∇* + 2γ̃ diag(T_L, 0, ..., 0, T_R)).
The equation is closed because Σ₂ only reads E[(p_y - p_{y-1})^2] from S_pp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from heatchain.lattice import dirichlet_basis, divergence_matrix, neumann_basis, neumann_laplacian_matrix
from heatchain.microsim import EnergyProfile, InitialEnsemble
from heatchain.params import ModelParams, ParameterError


class IntegratorError(RuntimeError):
    """Raised when the moment integration becomes unstable."""


class DomainError(ValueError):
    pass


@dataclass
class CovarianceState:
    """Second moments at macroscopic time t.

    ``integral`` optionally carries the microscopic-time integral ∫_0^τ S.
    """

    S: np.ndarray
    n: int
    t: float = 0.0
    integral: np.ndarray | None = field(default=None, repr=False)

    @property
    def S_rr(self):
        return self.S[: self.n, : self.n]

    @property
    def S_rp(self):
        return self.S[: self.n, self.n:]

    @property
    def S_pp(self):
        return self.S[self.n:, self.n:]

    @classmethod
    def from_blocks(cls, S_rr, S_rp, S_pp, t=0.0):
        n = S_rr.shape[0]
        S = np.block([[S_rr, S_rp], [S_rp.T, S_pp]])
        return cls(S, n, t)

    @classmethod
    def product(cls, var_r, var_p, t=0.0):
        """Diagonal (independent, zero-mean) moments."""
        var_r, var_p = np.asarray(var_r, float), np.asarray(var_p, float)
        return cls(np.diag(np.concatenate([var_r, var_p])), var_r.size, t)

    @classmethod
    def equilibrium(cls, n, T):
        return cls(T * np.eye(2 * n + 1), n)

    @classmethod
    def from_ensemble(cls, n, ens: InitialEnsemble):
        var = ens.variances(n)
        return cls.product(var[1:], var)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.S)[0])


def _check_dim(S, params: ModelParams):
    N = 2 * params.n + 1
    if S.shape != (N, N):
        raise ParameterError(f"covariance must be {N}x{N} for n={params.n}, got {S.shape}")


def drift_matrix(params: ModelParams, sparse=True):
    """A = [[0, -∇*], [-∇, -γΔ_N + γ̃E]] of size (2n+1)²."""
    n = params.n
    D = sps.csr_matrix(divergence_matrix(n))
    lapN = sps.csr_matrix(neumann_laplacian_matrix(n))
    E = sps.csr_matrix(([1.0, 1.0], ([0, n], [0, n])), shape=(n + 1, n + 1))
    M = -params.gamma * lapN + params.gamma_tilde * E
    A = sps.bmat([[None, -D], [D.T, M]], format="csr")
    return A if sparse else A.toarray()


def exchange_variances(S_pp: np.ndarray) -> np.ndarray:
    """x_y = E[(p_y - p_{y-1})^2] for y = 1..n."""
    d = np.diagonal(S_pp)
    return d[1:] + d[:-1] - 2.0 * np.diagonal(S_pp, 1)


def noise_pp_block(x: np.ndarray, params: ModelParams, tau_weight: float = 1.0) -> np.ndarray:
    """γ ∇ diag(x) ∇* + 2γ̃ τ_w D₁ on the momentum block.

    ``tau_weight`` multiplies the bath part (1 for the rate, τ for the
    time-integrated identity).
    """
    n = params.n
    out = np.zeros((n + 1, n + 1))
    i = np.arange(1, n + 1)
    out[i, i] += params.gamma * x
    out[i - 1, i - 1] += params.gamma * x
    out[i, i - 1] = -params.gamma * x
    out[i - 1, i] = -params.gamma * x
    out[0, 0] += 2.0 * params.gamma_tilde * params.T_L * tau_weight
    out[n, n] += 2.0 * params.gamma_tilde * params.T_R * tau_weight
    return out


def noise_matrix(x: np.ndarray, params: ModelParams, tau_weight: float = 1.0) -> np.ndarray:
    n = params.n
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ParameterError(f"x must have length {n}")
    out = np.zeros((2 * n + 1, 2 * n + 1))
    out[n:, n:] = noise_pp_block(x, params, tau_weight)
    return out


class _Rhs:
    """Cached evaluation of dS/dτ for one parameter set."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.A = drift_matrix(params)
        self.norm1 = float(abs(self.A).sum(axis=0).max())

    def __call__(self, S):
        n = self.params.n
        AS = self.A @ S
        out = -(AS + AS.T)
        out[n:, n:] += noise_pp_block(exchange_variances(S[n:, n:]), self.params)
        return out


def covariance_rhs(S, params: ModelParams) -> np.ndarray:
    """dS/dτ for a CovarianceState or a raw (2n+1)² array."""
    S = S.S if isinstance(S, CovarianceState) else np.asarray(S, dtype=float)
    _check_dim(S, params)
    return _Rhs(params)(S)


def evolve_covariance(
    S0: CovarianceState,
    params: ModelParams,
    t_macro: float,
    record_times=None,
    max_step: float | None = None,
    with_integral: bool = False,
) -> list[CovarianceState]:
    """RK4 integration in microscopic time, recorded at τ = n^{3/2} t.

    The step never exceeds ``0.25/‖A‖₁``; ``max_step`` can lower it.  With
    ``with_integral`` each record also carries ∫_0^τ S dτ'.
    """
    _check_dim(S0.S, params)
    rt = np.asarray(record_times if record_times is not None else [t_macro], dtype=float)
    if np.any(np.diff(rt) < 0) or rt[0] < 0 or rt[-1] > t_macro * (1 + 1e-12):
        raise ParameterError("record_times must be sorted and lie in [0, t_macro]")
    tr0 = np.trace(S0.S)
    if S0.min_eigenvalue() < -1e-10 * max(tr0, 1.0):
        raise ParameterError("initial covariance is not positive semidefinite")
    f = _Rhs(params)
    hmax = 0.25 / f.norm1
    if max_step is not None:
        hmax = min(hmax, float(max_step))
    scale = params.time_scale
    S = S0.S.copy()
    I = np.zeros_like(S)
    tau = 0.0
    out = []
    limit = 1e6 * max(tr0, params.T_L + params.T_R, 1.0) * (2 * params.n + 1)
    for t in rt:
        target = t * scale
        span = target - tau
        if span > 0:
            k = max(1, int(math.ceil(span / hmax - 1e-9)))
            h = span / k
            for _ in range(k):
                k1 = f(S)
                k2 = f(S + 0.5 * h * k1)
                k3 = f(S + 0.5 * h * k2)
                k4 = f(S + h * k3)
                if with_integral:
                    # the integral's stages are S at the RK stage points
                    I += (h / 6.0) * (S + 2.0 * (S + 0.5 * h * k1) + 2.0 * (S + 0.5 * h * k2) + S + h * k3)
                S = S + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            S = 0.5 * (S + S.T)
            tau = target
            trace = np.trace(S)
            if not np.isfinite(trace) or abs(trace) > limit:
                raise IntegratorError(f"trace blow-up at t={t}: trace={trace:.3g}, step={h:.3g}")
        out.append(CovarianceState(S.copy(), params.n, float(t), I.copy() if with_integral else None))
    return out


def energy_profile_from_covariance(state: CovarianceState) -> EnergyProfile:
    """E_x = (S_pp[x,x] + S_rr[x,x])/2 with r_0 = 0."""
    e = 0.5 * np.diagonal(state.S_pp).copy()
    e[1:] += 0.5 * np.diagonal(state.S_rr)
    return EnergyProfile(state.t, e, np.zeros_like(e))


def expected_currents(S: np.ndarray, params: ModelParams, tau_weight: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Mean currents j_{x-1,x}, x = 0..n+1, and the mechanical part, from S.

    Applied to a time integral of S (with ``tau_weight`` = elapsed τ) this
    gives the integrated currents.
    """
    n = params.n
    Spp = S[n:, n:]
    d = np.diagonal(Spp)
    mech = -np.diagonal(S[:n, n:])  # -E[p_x r_{x+1}], x = 0..n-1
    total = np.empty(n + 2)
    total[0] = params.gamma_tilde * (params.T_L * tau_weight - d[0])
    total[1:-1] = mech - 0.5 * params.gamma * (d[1:] - d[:-1])
    total[-1] = params.gamma_tilde * (d[-1] - params.T_R * tau_weight)
    return total, mech


def integrated_currents(state: CovarianceState, params: ModelParams) -> np.ndarray:
    """∫_0^t E[j_{x-1,x}(s)] ds in macroscopic time, x = 0..n+1."""
    if state.integral is None:
        raise ParameterError("state carries no time integral; evolve with with_integral=True")
    tau = state.t * params.time_scale
    total, _ = expected_currents(state.integral, params, tau_weight=tau)
    return total / params.time_scale


def gaussian_relative_entropy(S, T: float) -> float:
    """Relative entropy of N(0, S) with respect to N(0, T·I)."""
    S = S.S if isinstance(S, CovarianceState) else np.asarray(S, dtype=float)
    if T <= 0:
        raise DomainError("reference temperature must be positive")
    d = S.shape[0]
    sign, logdet = np.linalg.slogdet(S / T)
    if sign <= 0 or not np.isfinite(logdet):
        raise DomainError("covariance is singular or indefinite")
    return max(0.5 * (np.trace(S) / T - d - logdet), 0.0)


# ---------------------------------------------------------------------------
# Fourier-space system


@dataclass
class FourierCovariance:
    """Transformed time-integrated blocks and the inputs of the 4x4 system.

    Index convention: r-modes j = 1..n sit at array index j-1; p-modes
    j = 0..n sit at index j.  The ``*_sq`` arrays are restricted to
    j, j' = 1..n and are n x n.
    """

    lam: np.ndarray  # λ_j, j = 1..n
    S_r: np.ndarray
    S_rp: np.ndarray  # <r̃_j p̃_j'>
    S_pr: np.ndarray  # <p̃_j r̃_j'>
    S_p: np.ndarray
    R_r: np.ndarray
    R_rp: np.ndarray
    R_pr: np.ndarray
    R_p: np.ndarray
    B_rp: np.ndarray
    B_pr: np.ndarray
    B_p: np.ndarray
    F: np.ndarray
    excluded_modes: tuple = (0,)


def fourier_blocks(S_start: np.ndarray, S_end: np.ndarray, integral: np.ndarray, tau: float,
                   params: ModelParams) -> FourierCovariance:
    """Assemble transformed blocks from a time integral of S over [0, τ].

    R = S(0) - S(τ) in transformed form, all in microscopic time units.
    """
    n = params.n
    Psi = neumann_basis(n).vectors
    Phi = dirichlet_basis(n).vectors
    gam = neumann_basis(n).gammas

    def split(M):
        return Phi @ M[:n, :n] @ Phi.T, Phi @ M[:n, n:] @ Psi.T, Psi @ M[n:, n:] @ Psi.T

    Ir, Irp, Ip = split(integral)
    Rr, Rrp, Rp = split(S_start - S_end)
    corner = np.outer(Psi[:, 0], Psi[:, 0]) + np.outer(Psi[:, n], Psi[:, n])
    Brp = Irp @ corner
    Bpr = Brp.T
    bath = params.T_L * np.outer(Psi[:, 0], Psi[:, 0]) + params.T_R * np.outer(Psi[:, n], Psi[:, n])
    Bp = 2.0 * tau * bath - (corner @ Ip + Ip @ corner)
    x = exchange_variances(integral[n:, n:])
    F = params.gamma * np.outer(gam[1:], gam[1:]) * ((Phi * x) @ Phi.T)
    sq = slice(1, None)
    return FourierCovariance(
        lam=neumann_basis(n).eigenvalues[1:],
        S_r=Ir,
        S_rp=Irp[:, sq],
        S_pr=Irp[:, sq].T,
        S_p=Ip[sq, sq],
        R_r=Rr,
        R_rp=Rrp[:, sq],
        R_pr=Rrp[:, sq].T,
        R_p=Rp[sq, sq],
        B_rp=Brp[:, sq],
        B_pr=Bpr[sq, :],
        B_p=Bp[sq, sq],
        F=F,
    )


def fourier_residuals(fc: FourierCovariance, params: ModelParams) -> dict[str, float]:
    """Max absolute residual of each of the four transformed equations."""
    g = np.sqrt(fc.lam)
    gj, gk = g[:, None], g[None, :]
    cj, ck = fc.lam[:, None], fc.lam[None, :]
    gt, gm = params.gamma_tilde, params.gamma
    res = {
        "r": gk * fc.S_rp + gj * fc.S_pr - fc.R_r,
        "pr": -gj * fc.S_r + gm * cj * fc.S_pr + gk * fc.S_p - (fc.R_pr - gt * fc.B_pr),
        "rp": -gk * fc.S_r + gm * ck * fc.S_rp + gj * fc.S_p - (fc.R_rp - gt * fc.B_rp),
        "p": -gj * fc.S_rp - gk * fc.S_pr + gm * (cj + ck) * fc.S_p - (fc.R_p + gt * fc.B_p + fc.F),
    }
    return {k: float(np.max(np.abs(v))) for k, v in res.items()}


@dataclass
class FourierReport:
    residuals: dict
    max_residual: float
    scale: float
    excluded_modes: tuple

    @property
    def relative(self) -> float:
        return self.max_residual / self.scale if self.scale > 0 else self.max_residual


def verify_fourier_system(states: list[CovarianceState], params: ModelParams) -> FourierReport:
    """Residual report for the transformed integrated identity.

    ``states`` must start at t = 0 and carry time integrals (evolve with
    ``with_integral=True``); the final state is checked.
    """
    first, last = states[0], states[-1]
    if last.integral is None:
        raise ParameterError("states carry no time integrals")
    tau = last.t * params.time_scale
    fc = fourier_blocks(first.S, last.S, last.integral, tau, params)
    res = fourier_residuals(fc, params)
    scale = max(float(np.max(np.abs(a))) for a in (fc.S_p, fc.S_r, fc.R_p, fc.F, fc.B_p))
    return FourierReport(res, max(res.values()), scale, fc.excluded_modes)


def integrated_identity_residual(S_start, S_end, integral, tau, params: ModelParams) -> float:
    """max |A I + I Aᵀ - Σ₂(x(I)) - (S(0) - S(τ))| for I = ∫_0^τ S."""
    n = params.n
    A = drift_matrix(params)
    AI = A @ integral
    lhs = AI + AI.T - noise_matrix(exchange_variances(integral[n:, n:]), params, tau_weight=tau)
    return float(np.max(np.abs(lhs - (S_start - S_end))))


# ---------------------------------------------------------------------------
# Closed-form inverse of the 4x4 system


def _theta(c, cp, g):
    return (c - cp) ** 2 + 2.0 * g * g * c * cp * (c + cp)


def theta_coefficients(c, cp, gamma):
    """Return (Θ_p, Θ_r, Θ_pr) at (c, c')."""
    th = _theta(c, cp, gamma)
    sc, scp = np.sqrt(c), np.sqrt(cp)
    return 2.0 * gamma * c * cp / th, gamma * (c + cp) * sc * scp / th, (c - cp) * scp / th


def xi_coefficients(c, cp, gamma):
    """Coefficients of R^(ι') in the solution for S^(ι), keyed (ι, ι')."""
    th = _theta(c, cp, gamma)
    Tp, Tr, Tpr = theta_coefficients(c, cp, gamma)
    _, _, Tpr_sw = theta_coefficients(cp, c, gamma)
    g2 = gamma * gamma

    def xi_pr_r(a, b):
        return np.sqrt(a) * (a - b + g2 * a * b + g2 * b * b) / _theta(a, b, gamma)

    return {
        ("p", "p"): Tp,
        ("p", "r"): Tr,
        ("p", "pr"): -Tpr,
        ("p", "rp"): -Tpr_sw,
        ("pr", "p"): Tpr,
        ("pr", "r"): xi_pr_r(c, cp),
        ("pr", "pr"): gamma * cp * (c + cp) / th,
        ("pr", "rp"): -Tr,
        ("r", "p"): Tr,
        ("r", "r"): gamma * (c * c + cp * cp + g2 * c * cp * (c + cp)) / th,
        ("r", "pr"): -xi_pr_r(c, cp),
        ("r", "rp"): -xi_pr_r(cp, c),
    }


def closed_form_solution_map(lam_j, lam_jp, F, B, R, gamma, gamma_tilde):
    """Solve the 4x4 transformed system in closed form.

    ``B`` maps 'pr', 'rp', 'p' and ``R`` maps 'p', 'pr', 'rp', 'r' to arrays
    broadcastable with ``lam_j``.  Returns a dict with keys 'p', 'pr', 'rp',
    'r'.  Requires λ_j, λ_j' > 0.
    """
    c = np.asarray(lam_j, dtype=float)
    cp = np.asarray(lam_jp, dtype=float)
    if np.any(c <= 0) or np.any(cp <= 0):
        raise DomainError("closed form needs λ_j, λ_j' > 0 (zero modes are excluded)")
    theta = dict(zip(("p", "r", "pr"), theta_coefficients(c, cp, gamma)))
    xi = xi_coefficients(c, cp, gamma)
    out = {}
    for iota in ("p", "pr", "r"):
        val = theta[iota] * F
        for src in ("p", "r", "pr", "rp"):
            val = val + xi[(iota, src)] * R[src]
        # bath couplings: B^(p) enters with Θ, B^(pr), B^(rp) with -γ̃Ξ
        val = val + gamma_tilde * theta[iota] * B["p"]
        for src in ("pr", "rp"):
            val = val - gamma_tilde * xi[(iota, src)] * B[src]
        out[iota] = val
    out["rp"] = (R["r"] - np.sqrt(c) * out["pr"]) / np.sqrt(cp)
    return out


def system_matrix(c, cp, gamma):
    """Dense 4x4 matrix of the system acting on (S_p, S_pr, S_rp, S_r)."""
    a, b = math.sqrt(c), math.sqrt(cp)
    return np.array([
        [0.0, a, b, 0.0],
        [b, gamma * c, 0.0, -a],
        [a, 0.0, gamma * cp, -b],
        [gamma * (c + cp), -b, -a, 0.0],
    ])


def system_rhs(F, B, R, gamma_tilde):
    return np.array([
        R["r"],
        R["pr"] - gamma_tilde * B["pr"],
        R["rp"] - gamma_tilde * B["rp"],
        R["p"] + gamma_tilde * B["p"] + F,
    ])
