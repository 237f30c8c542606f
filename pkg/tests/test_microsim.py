import numpy as np
import pytest

from heatchain.microsim import (
    ChainState,
    InitialEnsemble,
    _hamiltonian_step,
    ensemble_energy_profile,
    exchange_momenta,
    init_ensemble,
    run_ensemble,
    run_trajectory,
    step_micro,
    trajectory_generators,
)
from heatchain.params import ModelParams, ParameterError


def test_params_constants():
    p = ModelParams(8, gamma=2.0, gamma_tilde=0.5)
    assert p.c_bulk == pytest.approx(1 / np.sqrt(16.0), rel=1e-14)
    assert p.c_bd == pytest.approx(0.5 / (2 * np.sqrt(2.0) * np.pi * (1.5**2 + 0.25)), rel=1e-14)
    with pytest.raises(ParameterError):
        ModelParams(8, gamma=0.0)


def test_init_variance_constant():
    p = ModelParams(8)
    s = init_ensemble(p, InitialEnsemble.constant(1.0), seed=3, m=100_000)
    np.testing.assert_allclose(s.p.var(axis=0), 1.0, rtol=0.01)
    np.testing.assert_allclose(s.r.var(axis=0), 1.0, rtol=0.01)
    assert np.all(np.abs(s.p.mean(axis=0)) < 5 / np.sqrt(100_000))


def test_init_variance_linear_profile():
    n, m = 8, 100_000
    s = init_ensemble(ModelParams(n), InitialEnsemble(lambda u: 1 + u), seed=4, m=m)
    target = 1 + n / (n + 1)
    se = target * np.sqrt(2 / m)
    assert abs(s.p[:, n].var() - target) < 4 * se


def test_init_rejects_nonpositive_profile():
    with pytest.raises(ParameterError):
        init_ensemble(ModelParams(4), InitialEnsemble(lambda u: u - 0.5), seed=0, m=2)
    with pytest.raises(ParameterError):
        init_ensemble(ModelParams(4), InitialEnsemble.constant(1.0), seed=0, m=0)


def test_init_deterministic_single():
    a = init_ensemble(ModelParams(6), InitialEnsemble.constant(1.0), seed=11, m=1)
    b = init_ensemble(ModelParams(6), InitialEnsemble.constant(1.0), seed=11, m=1)
    assert np.array_equal(a.p, b.p) and np.array_equal(a.r, b.r)


def test_zero_state_stays_zero():
    p = ModelParams(8, T_L=0.0, T_R=0.0)
    s = ChainState(np.zeros(8), np.zeros(9))
    rng = np.random.default_rng(0)
    for h in (0.01, 0.05, 0.1):
        s = step_micro(s, p, h, rng)
    assert np.all(s.r == 0) and np.all(s.p == 0)
    assert s.tau == pytest.approx(0.16)


def test_deterministic_swap():
    p = np.array([1.0, 2.0, 3.0])
    exchange_momenta(p, np.array([True, False]))
    np.testing.assert_array_equal(p, [2.0, 1.0, 3.0])
    p = np.array([1.0, 2.0, 3.0, 4.0])
    exchange_momenta(p, np.array([False, True, True]))
    # even bonds first (bond 2), then odd (bond 1)
    np.testing.assert_array_equal(p, [1.0, 4.0, 2.0, 3.0])


def test_step_gate():
    p = ModelParams(4, gamma=2.0)
    with pytest.raises(ParameterError):
        step_micro(ChainState(np.zeros(4), np.zeros(5)), p, 0.06, np.random.default_rng(0))


def _energy_drift(h, n=16, T=2.0):
    rng = np.random.default_rng(5)
    r, p = rng.normal(size=n), rng.normal(size=n + 1)
    e0 = 0.5 * (r @ r + p @ p)
    steps = int(round(T / h))
    worst = 0.0
    for _ in range(steps):
        _hamiltonian_step(r, p, h)
        worst = max(worst, abs(0.5 * (r @ r + p @ p) - e0))
    return worst


def test_noiseless_energy_second_order():
    e1, e2 = _energy_drift(0.1), _energy_drift(0.05)
    assert e1 < 0.05
    assert 3.0 < e1 / e2 < 5.0


def test_record_time_validation():
    p = ModelParams(4)
    s = ChainState(np.zeros(4), np.zeros(5))
    with pytest.raises(ParameterError):
        run_trajectory(s, p, 1.0, None, [0.5, 0.2], trajectory_generators(0, 0, 1))


def test_zero_time_returns_initial():
    p = ModelParams(4)
    s = init_ensemble(p, InitialEnsemble.constant(1.0), 1, 3)
    final, obs = run_trajectory(s, p, 0.0, None, [0.0], trajectory_generators(1, 0, 3))
    np.testing.assert_array_equal(final.p, s.p)
    np.testing.assert_allclose(obs.energy[:, 0], s.site_energy())
    assert np.all(obs.current == 0)


def test_lands_on_record_times():
    p = ModelParams(4)
    s = init_ensemble(p, InitialEnsemble.constant(1.0), 1, 2)
    final, _ = run_trajectory(s, p, 0.013, 0.05, [0.0071, 0.013], trajectory_generators(1, 0, 2))
    assert final.tau == pytest.approx(0.013 * p.time_scale, rel=1e-13)


def test_block_and_thread_independence():
    p = ModelParams(6, T_L=2.0, T_R=1.0)
    ens = InitialEnsemble.linear(2.0, 1.0)
    a = run_ensemble(p, ens, 50, 7, 0.02, [0.01, 0.02], block=50)
    b = run_ensemble(p, ens, 50, 7, 0.02, [0.01, 0.02], block=7, threads=3)
    for name in ("p2", "r2", "current", "int_p2"):
        assert np.array_equal(getattr(a.obs, name), getattr(b.obs, name))


def test_single_trajectory_profile_flags_stderr():
    p = ModelParams(4)
    res = run_ensemble(p, InitialEnsemble.constant(1.0), 1, 2, 0.01)
    prof = ensemble_energy_profile(res.obs, 0.01)
    assert not prof.stderr_defined
    assert np.all(prof.e >= 0)


def test_equilibrium_stationary():
    n, m = 16, 4000
    p = ModelParams(n, T_L=1.0, T_R=1.0)
    res = run_ensemble(p, InitialEnsemble.constant(1.0), m, 21, 0.05, [0.025, 0.05])
    for t in (0.025, 0.05):
        prof = res.energy_profile(t)
        expected = np.ones(n + 1)
        expected[0] = 0.5  # site 0 carries only kinetic energy
        z = (prof.e - expected) / prof.stderr
        assert np.all(np.abs(z) < 4.5)


def test_energy_balance():
    # d/dt E[H] = n^{3/2} γ̃ (T_L + T_R - E[p_0^2 + p_n^2]); integrated form
    n, m = 8, 4000
    p = ModelParams(n, T_L=2.0, T_R=0.5)
    res = run_ensemble(p, InitialEnsemble.constant(1.0), m, 5, 0.2, [0.0, 0.2])
    o = res.obs
    dH = o.energy[:, 1].sum(axis=1) - o.energy[:, 0].sum(axis=1)
    inflow = p.time_scale * p.gamma_tilde * (
        (p.T_L + p.T_R) * 0.2 - o.int_p2[:, 1, 0] - o.int_p2[:, 1, -1]
    )
    diff = dH - inflow
    assert abs(diff.mean()) < 4 * diff.std(ddof=1) / np.sqrt(m) + 0.02


def test_continuity_in_expectation():
    n, m = 8, 4000
    p = ModelParams(n, T_L=2.0, T_R=1.0)
    res = run_ensemble(p, InitialEnsemble.linear(2.0, 1.0), m, 9, 0.1, [0.0, 0.1])
    o = res.obs
    dE = o.energy[:, 1] - o.energy[:, 0]
    J = o.current[:, 1]
    balance = dE + p.time_scale * (J[:, 1:] - J[:, :-1])
    se = balance.std(axis=0, ddof=1) / np.sqrt(m)
    assert np.all(np.abs(balance.mean(axis=0)) < 4.5 * se + 0.02)
