"""Acceptance checks shared by ``heatchain verify`` and the test suite.

Each check returns a :class:`CheckResult`; tolerances are multiplied by
``scale`` (the ``--tolerance-scale`` flag).
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import covariance as cv
from .. import kernels as kn
from .. import macro
from .. import singular as so
from ..microsim import InitialEnsemble, default_step, run_ensemble
from ..params import ModelParams


@dataclass
class CheckResult:
    number: int
    name: str
    tag: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""
    runtime_s: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.number:2d} {self.name} ({self.tag}): value={self.value:.3e} "
                f"tol={self.tolerance:.1e} {self.detail} [{self.runtime_s:.1f}s]")


def _timed(fn):
    def run(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.runtime_s = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


# ---------------------------------------------------------------------------


IDENTITY_BUMPS = ((3.0, 0.5), (4.0, 0.6), (6.0, 0.4))


@_timed
def operator_identity(scale=1.0, constant=2.0 * math.pi**2, L=16.0, M=2**14):
    """‖𝔗*𝔗f - c f‖/‖f‖ on three bumps, and its behaviour under grid refinement.

    Refinement counts as halving when the fine residual is at most half the
    coarse one, or when both are already at roundoff level (1e-12).
    """
    tol = 1e-4 * scale
    fine, halving = [], []
    for c, w in IDENTITY_BUMPS:
        f = so.gaussian_bump(c, w)
        r_fine = so.verify_TstarT(so.HalfLineFunction.sample(f, L, M), constant)
        r_coarse = so.verify_TstarT(so.HalfLineFunction.sample(f, L, M // 2), constant)
        fine.append(r_fine)
        halving.append(r_fine <= 0.5 * r_coarse or max(r_fine, r_coarse) < 1e-12)
    worst = max(fine)
    ok = worst < tol and all(halving)
    detail = f"constant={constant:.6g} halving={all(halving)}"
    return CheckResult(1, "operator identity T*T", "closed-form", worst, tol, ok, detail)


@_timed
def constant_checks(scale=1.0):
    """Quadrature against the closed-form residue and quartic integrals."""
    tol = 1e-10 * scale
    checks = [c for c in kn.integral_formulas_selftest() if not c.name.startswith("quartic_two")]
    worst = max(c.error for c in checks)
    return CheckResult(2, "integral constants", "closed-form", worst, tol, worst < tol, f"{len(checks)} formulas")


@_timed
def kernel_cross_validation(scale=1.0, points=9):
    """g from the image sum vs the ρ-quadrature, and W from two routes."""
    tol_g, tol_w = 1e-4 * scale, 1e-8 * scale
    u = np.linspace(0.1, 0.9, points)
    worst_g = 0.0
    for v in (0, 1):
        for a in u:
            for b in u:
                ref = kn.boundary_kernel_g_quadrature(a, b, v)
                worst_g = max(worst_g, abs(kn.boundary_kernel_g(a, b, v) - ref) / abs(ref))
    worst_w = 0.0
    for a, b in ((1.0, 1.0), (1.0, 0.5), (0.3, 0.05), (2.0, 0.9), (0.7, 0.7), (0.2, 1.5)):
        ref = kn.W_hypergeometric(a, b)
        worst_w = max(worst_w, abs(kn.W_theta(a, b) - ref) / abs(ref))
    ok = worst_g < tol_g and worst_w < tol_w
    return CheckResult(3, "kernel cross-validation", "closed-form", worst_g, tol_g, ok,
                       f"{points}x{points}x2 g grid, W rel err={worst_w:.2e} (tol {tol_w:.0e})")


@_timed
def normalization(scale=1.0, rho_grid=None):
    tol = 1e-8 * scale
    rho = np.logspace(-2, 4, 33) if rho_grid is None else np.asarray(rho_grid, float)
    table = kn.KernelTable(np.empty(0), rho, np.empty(0), *(np.empty(0) for _ in range(5)))
    worst = float(np.max(table.normalization_errors()))
    return CheckResult(4, "resolvent normalization", "closed-form", worst, tol, worst < tol, f"{rho.size} values of rho")


@_timed
def fractional_laplacian(scale=1.0):
    tol = 1e-3 * scale
    errs = [abs(kn.q_mode_eigenvalue(l) / (math.pi * l) ** 1.5 - 1.0) for l in range(1, 5)]
    worst = max(errs)
    return CheckResult(5, "fractional Laplacian eigenvalues", "closed-form", worst, tol, worst < tol, "modes 1..4")


@_timed
def covariance_fixed_point(scale=1.0, n=32, T=1.5):
    p = ModelParams(n, T_L=T, T_R=T)
    S = cv.CovarianceState.equilibrium(n, T)
    rhs = float(np.max(np.abs(cv.covariance_rhs(S, p))))
    drift = float(np.max(np.abs(cv.evolve_covariance(S, p, 1.0)[-1].S - S.S)))
    tol_rhs = 1e-12 * T * scale
    tol = 1e-8 * scale
    ok = rhs <= tol_rhs and drift < tol
    return CheckResult(6, "covariance fixed point", "oracle", drift, tol, ok, f"max|rhs|={rhs:.1e}")


@_timed
def oracle_triangle(scale=1.0, n=32, m=20_000, t=0.05, seed=7, threads=1):
    """Monte Carlo profile within 3 standard errors of the covariance solver.

    Also rerun at half the step to confirm the splitting bias is not visible.
    """
    p = ModelParams(n, T_L=2.0, T_R=1.0)
    ens = InitialEnsemble.linear(2.0, 1.0)
    exact = cv.energy_profile_from_covariance(
        cv.evolve_covariance(cv.CovarianceState.from_ensemble(n, ens), p, t)[-1]).e
    h = default_step(p)
    fracs = []
    for hh in (h, 0.5 * h):
        prof = run_ensemble(p, ens, m, seed, t, h=hh, threads=threads).energy_profile(t)
        fracs.append(float(np.mean(np.abs(prof.e - exact) <= 3.0 * prof.stderr)))
    need = max(0.0, 1.0 - 0.05 * scale)
    return CheckResult(7, "Monte Carlo vs covariance", "oracle", fracs[0], need, min(fracs) >= need,
                       f"fraction within 3 SE (value >= tol); h/2 run {fracs[1]:.3f}")


@_timed
def fourier_residual(scale=1.0):
    tol, tol_cf = 1e-6 * scale, 1e-9 * scale
    n = 8
    p = ModelParams(n, T_L=2.0, T_R=1.0)
    S0 = cv.CovarianceState.from_ensemble(n, InitialEnsemble.linear(2.0, 1.0))
    states = cv.evolve_covariance(S0, p, 0.1, [0.0, 0.1], max_step=1e-3, with_integral=True)
    rep = cv.verify_fourier_system(states, p)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(500):
        c, cp = rng.uniform(0.01, 4.0, 2)
        g, gt = rng.uniform(0.2, 3.0, 2)
        F = rng.normal()
        B = {k: rng.normal() for k in ("p", "pr", "rp")}
        R = {k: rng.normal() for k in ("p", "pr", "rp", "r")}
        out = cv.closed_form_solution_map(c, cp, F, B, R, g, gt)
        x = np.array([out["p"], out["pr"], out["rp"], out["r"]])
        A = cv.system_matrix(c, cp, g)
        b = cv.system_rhs(F, B, R, gt)
        worst = max(worst, float(np.max(np.abs(A @ x - b))) / max(1.0, float(np.max(np.abs(b)))))
    ok = rep.max_residual < tol and worst < tol_cf
    return CheckResult(8, "Fourier system residual", "oracle", rep.max_residual, tol, ok,
                       f"closed-form residual={worst:.1e} (tol {tol_cf:.0e})")


@_timed
def stationary_profile(scale=1.0, N=128):
    tol_bd, tol_lim = 1e-4 * scale, 1e-6 * scale
    p = ModelParams(4, T_L=2.0, T_R=1.0)
    sys = macro.build_galerkin(p, N)
    st = macro.stationary_profile(sys, 2.0, 1.0)
    ends = macro.reconstruct_pointwise(st.a, np.array([0.0, 1.0]))
    bd = float(np.max(np.abs(ends - [2.0, 1.0])))
    ini = macro.initial_temperature(lambda u: 2.0 - u, N, 2.0, 1.0)
    lim = float(np.linalg.norm(macro.solve_evolution(ini, sys, 20.0)[0].a - st.a))
    ok = bd < tol_bd and lim < tol_lim
    return CheckResult(9, "stationary PDE profile", "oracle", bd, tol_bd, ok,
                       f"long-time distance={lim:.1e} (tol {tol_lim:.0e})")


@_timed
def eigen_scaling(scale=1.0, N=256):
    rep = macro.eigen_scaling_report(macro.build_galerkin(ModelParams(4), N))
    lo, hi = 1.5 - 0.1 * scale, 1.5 + 0.1 * scale
    ex = rep.exponents
    ok = all(lo <= ex[k] <= hi for k in ("even", "odd"))
    dev = max(abs(ex[k] - 1.5) for k in ("even", "odd"))
    return CheckResult(10, "eigenvalue scaling", "closed-form", dev, 0.1 * scale, ok,
                       f"even={ex['even']:.3f} odd={ex['odd']:.3f} (|exponent-1.5|)")


_STUDY = {}


def _study(n_list):
    key = tuple(n_list)
    if key not in _STUDY:
        from .experiments import convergence_study

        _STUDY[key] = convergence_study(n_list)
    return _STUDY[key]


@_timed
def convergence(scale=1.0, n_list=(32, 64, 128)):
    s = _study(n_list)
    e = [r.e_n for r in s.rows]
    q = [r.equipartition for r in s.rows]
    ok = s.errors_decreasing and s.equipartition_decreasing
    detail = "e_n=" + ",".join(f"{x:.2e}" for x in e) + " equip=" + ",".join(f"{x:.2e}" for x in q)
    return CheckResult(11, "covariance vs PDE convergence", "oracle", e[-1], e[0], ok, detail)


@_timed
def current_bound(scale=1.0, n_list=(32, 64, 128)):
    s = _study(n_list)
    spread = s.current_spread
    tol = 0.5 * scale
    detail = "sqrt(n) sup|J|=" + ",".join(f"{r.current_bound:.4f}" for r in s.rows)
    return CheckResult(12, "current bound scaling", "oracle", spread, tol, spread < tol, detail)


@_timed
def determinism(scale=1.0):
    """Same config and seed at 1 and 3 threads give byte-identical CSV."""
    from . import commands
    from .config import resolve

    base = {"n": 8, "m": 300, "t": 0.02, "T_L": 2.0, "T_R": 1.0, "seed": 11, "block": 64,
            "record_times": [0.01, 0.02]}
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for threads in (1, 3, 1):
            out = Path(tmp) / f"run{len(blobs)}"
            cfg = resolve("simulate", base, {"threads": threads, "out": str(out)})
            commands.run_simulate(cfg, out)
            blobs.append((out / "simulate.csv").read_bytes())
        cov = []
        for threads in (1, 3):
            out = Path(tmp) / f"cov{threads}"
            cfg = resolve("covariance", {"n": 8, "t": 0.02, "T_L": 2.0, "T_R": 1.0}, {"threads": threads})
            commands.run_covariance(cfg, out)
            cov.append((out / "covariance.csv").read_bytes())
    same = all(b == blobs[0] for b in blobs) and cov[0] == cov[1]
    return CheckResult(13, "determinism", "contract", 0.0 if same else 1.0, 0.0, same,
                       "simulate x3 (threads 1,3,1), covariance x2")


ALL = (
    operator_identity,
    constant_checks,
    kernel_cross_validation,
    normalization,
    fractional_laplacian,
    covariance_fixed_point,
    oracle_triangle,
    fourier_residual,
    stationary_profile,
    eigen_scaling,
    convergence,
    current_bound,
    determinism,
)

# quick level skips the Monte Carlo, the 9x9 kernel grid and the n = 128 study
QUICK = (
    operator_identity,
    constant_checks,
    normalization,
    fractional_laplacian,
    covariance_fixed_point,
    fourier_residual,
    stationary_profile,
    eigen_scaling,
    determinism,
)

CLOSED_FORM_CONSTANTS = (
    "residue integral (1/2pi) int v^2/(1+v^4) dv = 2^(-3/2)",
    "quartic integral int dl/(a^2+b^2 l^4) = pi/((2a)^(3/2) b^(1/2))",
    "operator identity T*T = c I",
)


def run_checks(level="quick", scale=1.0, tstar_constant=2.0 * math.pi**2, progress=None):
    out = []
    for fn in ALL if level == "full" else QUICK:
        kw = {"scale": scale}
        if fn is operator_identity:
            kw["constant"] = tstar_constant
        res = fn(**kw)
        out.append(res)
        if progress is not None:
            progress(res)
    return out
