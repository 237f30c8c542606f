"""Subcommand bodies: run a validated config and write its outputs to a directory."""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from .. import covariance as cv
from .. import kernels as kn
from .. import macro
from ..microsim import InitialEnsemble, default_step, run_ensemble
from . import io
from .config import config_hash


class VerificationFailure(Exception):
    """A gate or check failed (exit code 4); outputs are still written."""

    def __init__(self, message, results=None):
        super().__init__(message)
        self.results = results


def _ensemble(cfg) -> InitialEnsemble:
    return InitialEnsemble(cfg.initial.resolve(cfg.T_L, cfg.T_R))


def _finish(cfg, command, out, files, truncation, t0, status="ok", message=""):
    io.write_json(out / "config.json", cfg.model_dump(mode="json"))
    names = sorted(Path(f).name for f in files) + ["config.json", "metadata.json"]
    meta = io.metadata(command, config_hash(cfg), cfg.seed, cfg.threads, truncation, names,
                       status, message, time.perf_counter() - t0)
    io.write_json(out / "metadata.json", meta)
    return meta


def run_simulate(cfg, out):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.params()
    times = cfg.record_times or [cfg.t]
    res = run_ensemble(p, _ensemble(cfg), cfg.m, cfg.seed, cfg.t, times, cfg.h, cfg.block, cfg.threads)
    rows = []
    cur = res.obs.current
    cur_mean = cur.mean(axis=0)
    cur_se = cur.std(axis=0, ddof=1) / math.sqrt(cfg.m) if cfg.m > 1 else np.full_like(cur_mean, np.nan)
    for k, t in enumerate(res.obs.times):
        prof = res.energy_profile(float(t))
        for x, (e, s) in enumerate(zip(prof.e, prof.stderr)):
            rows.append(("energy", float(t), x, e, s))
        for x in range(cur_mean.shape[1]):
            rows.append(("integrated_current", float(t), x, cur_mean[k, x], cur_se[k, x]))
    f = io.write_csv(out / "simulate.csv", ["quantity", "time", "index", "value", "stderr"], rows)
    trunc = {"h": res.h, "default_h": default_step(p), "block": cfg.block, "time_scale": p.time_scale}
    return _finish(cfg, "simulate", out, [f], trunc, t0)


def run_covariance(cfg, out):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.params()
    times = list(cfg.record_times or [cfg.t])
    if times[0] > 0:
        times = [0.0] + times
    S0 = cv.CovarianceState.from_ensemble(p.n, _ensemble(cfg))
    states = cv.evolve_covariance(S0, p, cfg.t, times, cfg.max_step, with_integral=True)
    rows = []
    for st in states:
        for x, e in enumerate(cv.energy_profile_from_covariance(st).e):
            rows.append(("energy", st.t, x, e))
        for x, j in enumerate(cv.integrated_currents(st, p)):
            rows.append(("integrated_current", st.t, x, j))
    files = [io.write_csv(out / "covariance.csv", ["quantity", "time", "index", "value"], rows)]
    trunc = {"integrator": "rk4", "max_step": cfg.max_step, "time_scale": p.time_scale}
    if cfg.fourier_report:
        rep = cv.verify_fourier_system(states, p)
        frows = [(k, v) for k, v in sorted(rep.residuals.items())]
        frows += [("max_residual", rep.max_residual), ("scale", rep.scale)]
        files.append(io.write_csv(out / "fourier.csv", ["residual", "value"], frows))
        trunc["fourier_excluded_modes"] = list(rep.excluded_modes)
    return _finish(cfg, "covariance", out, files, trunc, t0)


def run_pde(cfg, out):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.params()
    trunc = {"N": cfg.N}
    if cfg.kernel_table:
        table = kn.KernelTable.from_csv(Path(cfg.kernel_table).read_text(encoding="utf-8"))
        grid = np.asarray(table.u, float)
        trunc["grid"] = f"kernel table {cfg.kernel_table}"
    else:
        grid = np.linspace(0.0, 1.0, cfg.grid_points)
        trunc["grid"] = f"uniform, {cfg.grid_points} points"
    sys = macro.build_galerkin(p, cfg.N)
    rows = []

    def emit(label, t, a):
        for l, c in enumerate(a):
            rows.append(("coefficient", t, l, "", c))
        for i, (u, v) in enumerate(zip(grid, macro.reconstruct_pointwise(a, grid))):
            rows.append((label, t, i, u, v))

    if cfg.mode == "stationary":
        st = macro.stationary_profile(sys, cfg.T_L, cfg.T_R)
        emit("T_s", "", st.a)
        trunc["delta_theta"] = st.delta_theta
    else:
        ini = macro.initial_temperature(cfg.initial.resolve(cfg.T_L, cfg.T_R), cfg.N, cfg.T_L, cfg.T_R)
        times = cfg.record_times or [cfg.t]
        for s in macro.solve_evolution(ini, sys, cfg.t, record_times=times):
            emit("T", s.t, s.a)
    f = io.write_csv(out / "pde.csv", ["quantity", "time", "index", "coord", "value"], rows)
    return _finish(cfg, "pde", out, [f], trunc, t0)


def run_kernels(cfg, out):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rho = np.logspace(math.log10(cfg.rho_min), math.log10(cfg.rho_max), cfg.rho_points)
    table = kn.build_kernel_table(kn.clustered_grid(cfg.u_points), rho, kn.clustered_grid(cfg.g_points), cfg.n_box)
    f = out / "kernels.csv"
    f.write_text(table.to_csv(), encoding="utf-8")
    trunc = dict(table.meta)
    for k in ("u_grid", "rho_grid", "g_grid"):
        trunc.pop(k)
    trunc["max_normalization_error"] = float(np.max(table.normalization_errors()))
    return _finish(cfg, "kernels", out, [f], trunc, t0)


def run_converge(cfg, out, progress=None):
    from .experiments import convergence_study

    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    study = convergence_study(cfg.n_list, cfg.T_L, cfg.T_R, cfg.t, cfg.N, cfg.bumps, cfg.gamma,
                              cfg.gamma_tilde, cfg.initial.resolve(cfg.T_L, cfg.T_R),
                              cfg.current_spread * cfg.tolerance_scale, progress)
    rows = [(r.n, r.e_n, r.equipartition, r.current_bound) for r in study.rows]
    f = io.write_csv(out / "converge.csv", ["n", "e_n", "equipartition", "current_bound"], rows)
    ini = cfg.initial.resolve(cfg.T_L, cfg.T_R)(np.linspace(0.0, 1.0, 11))
    equilibrium = cfg.T_L == cfg.T_R and bool(np.all(ini == cfg.T_L))
    tol = 1e-6 * cfg.tolerance_scale if equilibrium else None
    ok = study.passed(tol)
    trunc = dict(study.meta)
    trunc["gates"] = {
        "equilibrium_tolerance": tol,
        "errors_decreasing": study.errors_decreasing,
        "equipartition_decreasing": study.equipartition_decreasing,
        "current_spread": study.current_spread,
    }
    msg = "" if ok else "convergence gates failed"
    meta = _finish(cfg, "converge", out, [f], trunc, t0, "ok" if ok else "failed", msg)
    if not ok:
        raise VerificationFailure(msg)
    return meta


def run_verify(cfg, out, progress=None):
    from .checks import CLOSED_FORM_CONSTANTS, run_checks

    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_checks(cfg.level, cfg.tolerance_scale, cfg.tstar_constant, progress)
    rows = [(r.number, r.name, r.tag, r.value, r.tolerance, r.passed, r.detail) for r in results]
    f = io.write_csv(out / "verify.csv", ["criterion", "name", "tag", "value", "tolerance", "passed", "detail"], rows)
    failed = [r for r in results if not r.passed]
    trunc = {"level": cfg.level, "constants_checked": list(CLOSED_FORM_CONSTANTS),
             "tstar_constant": cfg.tstar_constant}
    msg = "failed: " + ", ".join(f"{r.number} {r.name}" for r in failed) if failed else ""
    meta = _finish(cfg, "verify", out, [f], trunc, t0, "failed" if failed else "ok", msg)
    if failed:
        raise VerificationFailure(msg, results)
    return meta, results


RUNNERS = {
    "simulate": run_simulate,
    "covariance": run_covariance,
    "pde": run_pde,
    "kernels": run_kernels,
    "converge": run_converge,
    "verify": run_verify,
}
