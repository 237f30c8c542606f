"""Cross-module experiments: covariance solver against the limiting PDE."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import covariance as cv
from .. import macro
from ..microsim import InitialEnsemble
from ..params import ModelParams
from ..singular import smooth_bump

DEFAULT_BUMPS = ((0.3, 0.15), (0.5, 0.2), (0.7, 0.15))


def pde_coefficients(params: ModelParams, initial, t, N):
    """Galerkin coefficients of T(t, .) started from ``initial``."""
    sys = macro.build_galerkin(params, N)
    ini = macro.initial_temperature(initial, N, params.T_L, params.T_R)
    return macro.solve_evolution(ini, sys, t)[0].a


@dataclass
class ConvergenceRow:
    n: int
    e_n: float
    equipartition: float
    current_bound: float
    runtime_s: float


@dataclass
class ConvergenceStudy:
    rows: list
    pde_coefficients: np.ndarray
    current_spread_limit: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def errors_decreasing(self) -> bool:
        e = [r.e_n for r in self.rows]
        return all(a > b for a, b in zip(e, e[1:]))

    @property
    def equipartition_decreasing(self) -> bool:
        q = [r.equipartition for r in self.rows]
        return all(a > b for a, b in zip(q, q[1:]))

    @property
    def current_spread(self) -> float:
        c = [r.current_bound for r in self.rows]
        return (max(c) - min(c)) / min(c) if min(c) > 0 else 0.0

    def passed(self, equilibrium_tol=None) -> bool:
        if equilibrium_tol is not None:
            return all(r.e_n < equilibrium_tol for r in self.rows)
        ok = self.errors_decreasing and self.equipartition_decreasing
        return ok and self.current_spread < self.current_spread_limit


def lattice_statistics(n, params: ModelParams, ens: InitialEnsemble, t, bumps, pde=None):
    """Covariance-solver versions of the energy, equipartition and current statistics.

    Energy: (1/n)Σ_x φ(x/n)(E[E_x(t)] - T(t, x/n)) with T from the PDE
    coefficients ``pde`` (the plain lattice sum when ``pde`` is None).
    Equipartition: max over bumps of |(1/n)Σ_x φ(x/n)∫_0^t (E[p_x²] - E[r_x²])ds|.
    Current: √n·sup_x|∫_0^t E[j]ds|.
    """
    p = params.replace(n=n)
    S0 = cv.CovarianceState.from_ensemble(n, ens)
    st = cv.evolve_covariance(S0, p, t, with_integral=True)[-1]
    e = cv.energy_profile_from_covariance(st).e
    x = np.arange(n + 1)
    if pde is not None:
        e = e - macro.reconstruct_pointwise(pde, x / n)
    energy = np.array([np.sum(smooth_bump(c, r)(x / n) * e) / n for c, r in bumps])
    I = st.integral / p.time_scale
    dp = np.diagonal(I[n:, n:])[1:]
    dr = np.diagonal(I[:n, :n])
    equi = max(abs(np.sum(smooth_bump(c, r)(x[1:] / n) * (dp - dr))) / n for c, r in bumps)
    cur = math.sqrt(n) * float(np.max(np.abs(cv.integrated_currents(st, p))))
    return energy, float(equi), cur


def convergence_study(n_list, T_L=2.0, T_R=1.0, t=0.3, N=256, bumps=DEFAULT_BUMPS,
                      gamma=1.0, gamma_tilde=1.0, initial=None, current_spread_limit=0.5,
                      progress=None) -> ConvergenceStudy:
    """Tabulate e_n = max_φ |(1/n)Σ_x φ(x/n)(E[E_x(t)] - T(t, x/n))| over n.

    Both sides are summed on the same x/n points, so the error measures the
    solvers and not the quadrature of the test functions.

    ``initial`` is the initial temperature profile u -> T(u) shared by both
    sides; it defaults to the linear interpolation of the bath temperatures.
    """
    if initial is None:
        initial = lambda u: T_L + (T_R - T_L) * np.asarray(u, float)  # noqa: E731
    base = ModelParams(max(n_list), gamma, gamma_tilde, T_L, T_R)
    a = pde_coefficients(base, initial, t, N)
    ens = InitialEnsemble(initial)
    rows = []
    for n in n_list:
        t0 = time.perf_counter()
        energy, equi, cur = lattice_statistics(n, base, ens, t, bumps, a)
        row = ConvergenceRow(n, float(np.max(np.abs(energy))), equi, cur, time.perf_counter() - t0)
        rows.append(row)
        if progress is not None:
            progress(row)
    meta = {"t": t, "N": N, "bumps": [list(b) for b in bumps], "grid": "x/n", "comparison": "collocated"}
    return ConvergenceStudy(rows, a, current_spread_limit, meta)
