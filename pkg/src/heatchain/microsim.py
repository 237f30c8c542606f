"""Ensemble simulation of the harmonic chain with momentum exchange and baths.

The state is (r, p): n stretches and n+1 momenta.  One step of size h is

1. half-kick  p += (h/2) ∇r
2. drift      r += h ∇*p
3. half-kick
4. exact Ornstein-Uhlenbeck update of p_0 and p_n
5. random nearest-neighbour momentum swaps, each bond with probability
   1 - exp(-γh); even bonds first, then odd bonds.

Trajectories are stored with a leading batch axis and advanced together.
Each trajectory owns a ``numpy.random.Generator`` spawned from the root seed
with ``spawn_key=(k,)`` and draws its own noise in fixed-size segments, so
results do not depend on how trajectories are grouped into blocks or threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from heatchain.lattice import apply_divergence, apply_gradient
from heatchain.params import ModelParams, ParameterError

SEGMENT_STEPS = 256
STEP_GATE = 0.1


@dataclass
class ChainState:
    """Phase point(s): ``r`` has shape (..., n), ``p`` shape (..., n+1)."""

    r: np.ndarray
    p: np.ndarray
    tau: float = 0.0

    @property
    def n(self) -> int:
        return self.r.shape[-1]

    def copy(self) -> "ChainState":
        return ChainState(self.r.copy(), self.p.copy(), self.tau)

    def site_energy(self) -> np.ndarray:
        """E_x = (p_x^2 + r_x^2)/2 with r_0 = 0."""
        e = 0.5 * self.p**2
        e[..., 1:] += 0.5 * self.r**2
        return e

    def total_energy(self) -> np.ndarray:
        return self.site_energy().sum(axis=-1)


@dataclass(frozen=True)
class InitialEnsemble:
    """Zero-mean product Gaussian with site variance ``profile(u_x)``."""

    profile: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def constant(cls, T: float) -> "InitialEnsemble":
        return cls(lambda u: np.full_like(np.asarray(u, dtype=float), T))

    @classmethod
    def linear(cls, T0: float, T1: float) -> "InitialEnsemble":
        return cls(lambda u: T0 + (T1 - T0) * np.asarray(u, dtype=float))

    def variances(self, n: int) -> np.ndarray:
        u = np.arange(n + 1) / (n + 1)
        T = np.asarray(self.profile(u), dtype=float)
        if T.shape != u.shape or not np.all(np.isfinite(T)) or np.any(T <= 0):
            raise ParameterError("initial temperature profile must be finite and positive on the grid")
        return T


def trajectory_generators(seed: int, start: int, stop: int) -> list[np.random.Generator]:
    """Independent generators for trajectories start..stop-1 of a root seed."""
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))
        for k in range(start, stop)
    ]


def _sample_initial(n, variances, gens) -> ChainState:
    sd = np.sqrt(variances)
    draws = np.stack([g.standard_normal(2 * n + 1) for g in gens])
    r = draws[:, :n] * sd[1:]
    p = draws[:, n:] * sd
    return ChainState(r, p, 0.0)


def init_ensemble(params: ModelParams, ens: InitialEnsemble, seed: int, m: int) -> ChainState:
    """Draw m independent initial states (batched along axis 0)."""
    if m < 1:
        raise ParameterError("trajectory count m must be >= 1")
    var = ens.variances(params.n)
    return _sample_initial(params.n, var, trajectory_generators(seed, 0, m))


def default_step(params: ModelParams) -> float:
    return min(0.05 / params.gamma, 0.05 / params.gamma_tilde, 0.1)


def check_step(params: ModelParams, h: float) -> None:
    if not h > 0:
        raise ParameterError(f"step size must be positive, got {h}")
    if params.gamma * h > STEP_GATE * (1 + 1e-12) or params.gamma_tilde * h > STEP_GATE * (1 + 1e-12):
        raise ParameterError(
            f"step gate violated: gamma*h={params.gamma * h:.3g}, gamma_tilde*h={params.gamma_tilde * h:.3g} (max {STEP_GATE})"
        )


def exchange_momenta(p: np.ndarray, swap: np.ndarray) -> None:
    """Swap p_x <-> p_{x+1} in place where ``swap[..., x]`` is true.

    Even bonds are processed before odd bonds; within a parity class the
    bonds are disjoint, so the update is vectorized.
    """
    for parity in (0, 1):
        left = p[..., parity:-1:2]
        right = p[..., parity + 1::2]
        k = min(left.shape[-1], right.shape[-1])
        left, right = left[..., :k], right[..., :k]
        mask = swap[..., parity::2][..., :k]
        tmp = np.where(mask, right, left)
        right[...] = np.where(mask, left, right)
        left[...] = tmp


def _hamiltonian_step(r, p, h):
    p += 0.5 * h * apply_gradient(r)
    r += h * apply_divergence(p)
    p += 0.5 * h * apply_gradient(r)


def _step_with_noise(r, p, h, params: ModelParams, xi, unif):
    """One full step on batched arrays; ``xi`` (B, 2) normals, ``unif`` (B, n) uniforms."""
    _hamiltonian_step(r, p, h)
    if params.gamma_tilde > 0:
        decay = math.exp(-params.gamma_tilde * h)
        spread = 1.0 - decay * decay
        p[:, 0] = decay * p[:, 0] + math.sqrt(params.T_L * spread) * xi[:, 0]
        p[:, -1] = decay * p[:, -1] + math.sqrt(params.T_R * spread) * xi[:, 1]
    if params.gamma > 0:
        exchange_momenta(p, unif < -math.expm1(-params.gamma * h))


def step_micro(state: ChainState, params: ModelParams, h: float, rng: np.random.Generator) -> ChainState:
    """Advance a single (or batched, sharing one generator) state by one step."""
    check_step(params, h)
    r = np.atleast_2d(state.r).astype(float, copy=True)
    p = np.atleast_2d(state.p).astype(float, copy=True)
    B, n = r.shape
    xi = rng.standard_normal((B, 2))
    unif = rng.random((B, n))
    _step_with_noise(r, p, h, params, xi, unif)
    if state.r.ndim == 1:
        r, p = r[0], p[0]
    return ChainState(r, p, state.tau + h)


def _bond_currents(r, p, params: ModelParams):
    """Instantaneous currents j_{x-1,x} for x = 0..n+1 (n+2 bonds), plus the mechanical part."""
    B, n = r.shape
    p2 = p * p
    mech = -p[:, :-1] * r  # j^a_{x,x+1}, x = 0..n-1
    noise = -0.5 * params.gamma * (p2[:, 1:] - p2[:, :-1])
    total = np.empty((B, n + 2))
    total[:, 0] = params.gamma_tilde * (params.T_L - p2[:, 0])
    total[:, 1:-1] = mech + noise
    total[:, -1] = params.gamma_tilde * (p2[:, -1] - params.T_R)
    return total, mech


@dataclass
class Observables:
    """Per-trajectory observables at the record times.

    Array axes are (trajectory, record time, site or bond).  Time integrals
    are in macroscopic time, ``∫_0^t f(n^{3/2} s) ds``.
    """

    times: np.ndarray
    p2: np.ndarray
    r2: np.ndarray
    current: np.ndarray
    mech_current: np.ndarray
    int_p2: np.ndarray
    int_r2: np.ndarray

    @property
    def energy(self) -> np.ndarray:
        return 0.5 * (self.p2 + self.r2)

    @property
    def m(self) -> int:
        return self.p2.shape[0]


def _record_taus(params: ModelParams, t_macro: float, record_times) -> np.ndarray:
    rt = np.asarray(record_times if record_times is not None else [t_macro], dtype=float)
    if rt.ndim != 1 or rt.size == 0:
        raise ParameterError("record_times must be a non-empty 1-d sequence")
    if np.any(np.diff(rt) < 0):
        raise ParameterError("record_times must be sorted")
    if rt[0] < 0 or rt[-1] > t_macro * (1 + 1e-12):
        raise ParameterError("record_times must lie in [0, t_macro]")
    return rt


def _step_schedule(tau_start, tau_stop, h):
    """Full steps of size h, the last one truncated to land on tau_stop."""
    span = tau_stop - tau_start
    if span <= 0:
        return np.zeros(0)
    k = int(math.floor(span / h * (1 + 1e-12)))
    steps = [h] * k
    rest = span - k * h
    if rest > 1e-12 * h:
        steps.append(rest)
    return np.asarray(steps)


def run_trajectory(
    state: ChainState,
    params: ModelParams,
    t_macro: float,
    h: float | None,
    record_times: Sequence[float] | None,
    gens: Sequence[np.random.Generator],
) -> tuple[ChainState, Observables]:
    """Advance a batch of trajectories to ``n^{3/2} t_macro``, recording observables.

    ``gens`` holds one generator per trajectory in the batch (a single state
    takes a one-element list).
    """
    h = default_step(params) if h is None else float(h)
    check_step(params, h)
    rt = _record_taus(params, t_macro, record_times)
    scale = params.time_scale
    single = state.r.ndim == 1
    r = np.atleast_2d(state.r).astype(float, copy=True)
    p = np.atleast_2d(state.p).astype(float, copy=True)
    B, n = r.shape
    if len(gens) != B:
        raise ParameterError(f"need one generator per trajectory: {len(gens)} for {B}")
    R = rt.size
    out = Observables(
        times=rt,
        p2=np.empty((B, R, n + 1)),
        r2=np.zeros((B, R, n + 1)),
        current=np.empty((B, R, n + 2)),
        mech_current=np.empty((B, R, n)),
        int_p2=np.empty((B, R, n + 1)),
        int_r2=np.zeros((B, R, n + 1)),
    )
    acc_j = np.zeros((B, n + 2))
    acc_ja = np.zeros((B, n))
    acc_p2 = np.zeros((B, n + 1))
    acc_r2 = np.zeros((B, n))
    j_now, ja_now = _bond_currents(r, p, params)
    p2_now, r2_now = p * p, r * r
    tau = state.tau
    for k in range(R):
        steps = _step_schedule(tau, state.tau + rt[k] * scale, h)
        for s0 in range(0, steps.size, SEGMENT_STEPS):
            seg = steps[s0:s0 + SEGMENT_STEPS]
            K = seg.size
            xi = np.stack([g.standard_normal((K, 2)) for g in gens], axis=1)
            unif = np.stack([g.random((K, n)) for g in gens], axis=1)
            for i in range(K):
                hi = seg[i]
                _step_with_noise(r, p, hi, params, xi[i], unif[i])
                j_new, ja_new = _bond_currents(r, p, params)
                p2_new, r2_new = p * p, r * r
                w = 0.5 * hi / scale
                acc_j += w * (j_now + j_new)
                acc_ja += w * (ja_now + ja_new)
                acc_p2 += w * (p2_now + p2_new)
                acc_r2 += w * (r2_now + r2_new)
                j_now, ja_now, p2_now, r2_now = j_new, ja_new, p2_new, r2_new
                tau += hi
        out.p2[:, k] = p2_now
        out.r2[:, k, 1:] = r2_now
        out.current[:, k] = acc_j
        out.mech_current[:, k] = acc_ja
        out.int_p2[:, k] = acc_p2
        out.int_r2[:, k, 1:] = acc_r2
    final = ChainState(r[0] if single else r, p[0] if single else p, tau)
    return final, out


@dataclass
class EnergyProfile:
    t: float
    e: np.ndarray
    stderr: np.ndarray
    stderr_defined: bool = True


def ensemble_energy_profile(obs: Observables, t: float) -> EnergyProfile:
    """Mean site energy and its standard error across trajectories at record time t."""
    if obs.m == 0:
        raise ParameterError("empty ensemble")
    idx = np.flatnonzero(np.isclose(obs.times, t, rtol=0, atol=1e-12))
    if idx.size == 0:
        raise ParameterError(f"time {t} was not recorded")
    e = obs.energy[:, idx[0]]
    mean = e.mean(axis=0)
    if obs.m == 1:
        return EnergyProfile(t, mean, np.full_like(mean, np.nan), stderr_defined=False)
    return EnergyProfile(t, mean, e.std(axis=0, ddof=1) / math.sqrt(obs.m))


@dataclass
class EnsembleResult:
    params: ModelParams
    seed: int
    h: float
    obs: Observables
    final: ChainState = field(repr=False)

    def energy_profile(self, t: float) -> EnergyProfile:
        return ensemble_energy_profile(self.obs, t)

    def mean_current(self) -> np.ndarray:
        """Ensemble mean of the integrated currents, shape (record time, n+2)."""
        return self.obs.current.mean(axis=0)


def _concat(parts: list[Observables]) -> Observables:
    return Observables(
        times=parts[0].times,
        **{
            name: np.concatenate([getattr(o, name) for o in parts], axis=0)
            for name in ("p2", "r2", "current", "mech_current", "int_p2", "int_r2")
        },
    )


def run_ensemble(
    params: ModelParams,
    ens: InitialEnsemble,
    m: int,
    seed: int,
    t_macro: float,
    record_times: Sequence[float] | None = None,
    h: float | None = None,
    block: int | None = None,
    threads: int = 1,
) -> EnsembleResult:
    """Simulate m trajectories; ``block`` and ``threads`` affect speed only."""
    if m < 1:
        raise ParameterError("trajectory count m must be >= 1")
    h = default_step(params) if h is None else float(h)
    check_step(params, h)
    var = ens.variances(params.n)
    if block is None:
        block = max(16, min(2048, 4_000_000 // (SEGMENT_STEPS * (params.n + 3))))
    starts = list(range(0, m, block))

    def work(start):
        gens = trajectory_generators(seed, start, min(start + block, m))
        s0 = _sample_initial(params.n, var, gens)
        return run_trajectory(s0, params, t_macro, h, record_times, gens)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, starts))
    else:
        results = [work(s) for s in starts]
    obs = _concat([o for _, o in results])
    final = ChainState(
        np.concatenate([f.r for f, _ in results]),
        np.concatenate([f.p for f, _ in results]),
        results[0][0].tau,
    )
    return EnsembleResult(params, seed, h, obs, final)
