import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_kraus_step, dense_twist, naive_trajectory, random_state
from pssim.channels import make_channel_set
from pssim.engines import (
    Engine,
    EngineConfig,
    TrajectoryEnsemble,
    TrajectoryStats,
    convergence_monitor,
    drift_bound,
    ensemble_density,
    ensemble_expectation,
    ensemble_post_select,
    kraus_squeeze,
    kraus_squeeze_step,
    run_trajectory_ensemble,
    trajectory_squeeze,
    weighted_stats,
)
from pssim.errors import EngineGuardError, StepSizeError
from pssim.measurement import PovmSpec, apply_measurement
from pssim.metrics import ensemble_qfi, qfi_mixed
from pssim.spin import (
    DensityOperator,
    PureState,
    SystemSpec,
    coherent_spin_state,
    ghz_state,
    make_all_up,
)


def cfg(n, x, chi_t=0.15, engine=Engine.KRAUS, dt=1e-7):
    return EngineConfig(make_channel_set(SystemSpec(n), x, dt=dt), chi_t, engine)


def test_step_count_and_last_dt():
    c = cfg(4, 1)
    assert c.n_steps == round(0.15 / (c.chi * 1e-7))
    total = sum(k * cs.dt for k, cs in c.step_channels())
    assert total == pytest.approx(c.total_time, rel=1e-12)
    assert c.n_steps >= 1
    assert cfg(4, 1, chi_t=0).n_steps == 0
    odd = cfg(4, 1, chi_t=0.1500001)
    assert sum(k * cs.dt for k, cs in odd.step_channels()) * odd.chi == pytest.approx(0.1500001, abs=1e-12)


def test_guards():
    with pytest.raises(EngineGuardError):
        cfg(12, 1)
    EngineConfig(make_channel_set(SystemSpec(12), 1), 0.1, Engine.KRAUS, kraus_max_qubits=12)
    with pytest.raises(EngineGuardError):
        cfg(4, 1, engine=Engine.PURE)
    with pytest.raises(ValueError):
        cfg(4, 1, chi_t=-1)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("x", [0.0, 1.0, 7.0])
def test_kraus_step_matches_dense(n, x):
    c = cfg(n, x)
    cs = c.channel_set
    rho = random_state(np.random.default_rng(n), 2**n)
    rho = DensityOperator(SystemSpec(n), np.outer(rho, rho.conj()))
    out = kraus_squeeze_step(rho, c)
    ref = dense_kraus_step(rho.matrix, n, cs.rates.chi, cs.dt, cs.p1, cs.p2)
    assert np.max(np.abs(out.matrix - ref)) < 1e-14


def test_kraus_step_matches_dense_mixed_input():
    n = 3
    c = cfg(n, 2.0)
    cs = c.channel_set
    from oracles import random_density
    rho = random_density(np.random.default_rng(0), 8)
    out = kraus_squeeze_step(DensityOperator(SystemSpec(n), rho), c)
    ref = dense_kraus_step(rho, n, cs.rates.chi, cs.dt, cs.p1, cs.p2)
    assert np.max(np.abs(out.matrix - ref)) < 1e-14


def test_kraus_x0_is_twist():
    n = 4
    cs0 = coherent_spin_state(SystemSpec(n))
    rho = kraus_squeeze(DensityOperator.from_pure(cs0), cfg(n, 0))
    target = dense_twist(n, 0.15) @ cs0.amplitudes
    assert np.vdot(target, rho.matrix @ target).real >= 1 - 1e-4


def test_all_up_dephasing_fixed_point():
    n = 3
    spec = SystemSpec(n)
    up = DensityOperator.from_pure(make_all_up(spec))
    cs = make_channel_set(spec, 1.0)
    # dephasing only: switch damping/excitation off by hand through the kernel
    from pssim.engines import _kraus_kernel
    from pssim.channels import no_jump_diagonal
    out = np.empty_like(up.matrix)
    _kraus_kernel(up.matrix, out, no_jump_diagonal(cs), spec.profile.m, cs.p1, 0.0, n)
    out /= np.trace(out).real
    assert np.allclose(out, up.matrix, atol=1e-15)


@pytest.mark.parametrize("n,x", [(2, 1.0), (4, 1.0), (6, 2.0)])
def test_kraus_trace_and_positivity(n, x):
    c = cfg(n, x, chi_t=0.15)
    cs = c.channel_set
    drifts, mins = [], []

    def cb(k, mat):
        if k % 100 == 0:
            mins.append(np.linalg.eigvalsh(mat)[0])

    from pssim.engines import kraus_step_matrix
    rho = DensityOperator.from_pure(coherent_spin_state(SystemSpec(n))).matrix
    out = np.empty_like(rho)
    for _ in range(50):
        tr = kraus_step_matrix(rho, out, cs)
        drifts.append(abs(tr - 1))
        rho = out / tr
    assert max(drifts) <= (cs.total_jump_probability) ** 2 + 10 * (cs.rates.chi * cs.dt * (n / 2) ** 2) ** 2
    kraus_squeeze(DensityOperator.from_pure(coherent_spin_state(SystemSpec(n))), c, callback=cb)
    assert min(mins) >= -1e-9


def test_drift_guard_trips():
    from pssim.engines import _check_drift
    cs = make_channel_set(SystemSpec(4), 1.0)
    _check_drift(1 + 0.5 * drift_bound(cs), cs)
    with pytest.raises(StepSizeError):
        _check_drift(1 + 2 * drift_bound(cs), cs)
    with pytest.raises(StepSizeError):
        _check_drift(0.9, cs)
    with pytest.raises(StepSizeError):
        _check_drift(float("nan"), cs)


def test_trajectory_x0_deterministic_twist():
    n = 4
    s = coherent_spin_state(SystemSpec(n))
    out = trajectory_squeeze(s, cfg(n, 0, engine=Engine.TRAJECTORY), 1)
    target = dense_twist(n, 0.15) @ s.amplitudes
    assert abs(np.vdot(target, out.amplitudes)) ** 2 >= 1 - 1e-4


def test_rng_batch_equals_scalar_draws():
    a = np.random.default_rng(5).random(1000)
    g = np.random.default_rng(5)
    b = np.array([g.random() for _ in range(1000)])
    assert np.array_equal(a, b)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_trajectory_matches_naive_loop(seed):
    # large x so that several jumps happen in a short run
    n = 3
    # 300 whole steps so the oracle needs no shortened final step
    chi = 2 * 3300 / n
    c = cfg(n, 200.0, chi_t=300 * chi * 1e-7, engine=Engine.TRAJECTORY)
    assert c.n_steps == 300 and c.last_dt == pytest.approx(c.dt, rel=1e-9)
    cs = c.channel_set
    s = coherent_spin_state(SystemSpec(n))
    fast = trajectory_squeeze(s, c, np.random.default_rng(seed))
    ref = naive_trajectory(s.amplitudes, n, cs.rates.chi, cs.dt, cs.p1, cs.p2, c.n_steps,
                           np.random.default_rng(seed))
    assert np.max(np.abs(fast.amplitudes - ref)) < 1e-8


def test_trajectory_determinism_across_workers():
    n = 4
    c = cfg(n, 5.0, engine=Engine.TRAJECTORY)
    s = coherent_spin_state(SystemSpec(n))
    a = run_trajectory_ensemble(s, c, 12, seed=9, workers=1)
    b = run_trajectory_ensemble(s, c, 12, seed=9, workers=3)
    assert np.array_equal(a.amplitudes(), b.amplitudes())
    assert np.array_equal(a.n_jumps, b.n_jumps)
    c2 = run_trajectory_ensemble(s, c, 12, seed=10)
    assert not np.array_equal(a.amplitudes(), c2.amplitudes())


@pytest.mark.parametrize("n", [2, 3, 4])
def test_unraveling_converges_to_kraus(n):
    spec = SystemSpec(n)
    s = coherent_spin_state(spec)
    rho_k = kraus_squeeze(DensityOperator.from_pure(s), cfg(n, 1.0))
    ens = run_trajectory_ensemble(s, cfg(n, 1.0, engine=Engine.TRAJECTORY), 5000, seed=1)
    rho_t = ensemble_density(ens).matrix
    dist = 0.5 * np.abs(np.linalg.eigvalsh(rho_t - rho_k.matrix)).sum()
    assert dist < 0.05
    # convexity of the QFI
    assert ensemble_qfi(ens).value >= qfi_mixed(ensemble_density(ens)).value - 1e-9


def test_post_select_single_member():
    spec = SystemSpec(3)
    s = PureState(spec, random_state(np.random.default_rng(0), 8))
    ens = TrajectoryEnsemble(spec, [s], 0)
    povm = PovmSpec(spec, 0.4, 1.0)
    out = ensemble_post_select(ens, povm)
    ref, p = apply_measurement(s, povm)
    assert out.members[0].weight == pytest.approx(1)
    assert np.allclose(out.members[0].amplitudes, ref.amplitudes)
    assert out.probability == pytest.approx(p)


def test_post_select_identical_and_bayes():
    spec = SystemSpec(3)
    s = PureState(spec, random_state(np.random.default_rng(0), 8), 0.25)
    ens = TrajectoryEnsemble(spec, [s.copy() for _ in range(4)], 0)
    out = ensemble_post_select(ens, PovmSpec(spec, -0.5, 0.7))
    assert np.allclose(out.weights, 0.25)
    a = PureState(spec, random_state(np.random.default_rng(1), 8), 0.5)
    b = PureState(spec, random_state(np.random.default_rng(2), 8), 0.5)
    povm = PovmSpec(spec, 1.1, 0.9)
    pa, pb = apply_measurement(a, povm)[1], apply_measurement(b, povm)[1]
    out = ensemble_post_select(TrajectoryEnsemble(spec, [a, b], 0), povm)
    assert out.weights[0] == pytest.approx(pa / (pa + pb), abs=1e-12)
    assert out.probability == pytest.approx(0.5 * (pa + pb), abs=1e-15)
    assert out.weights.sum() == pytest.approx(1, abs=1e-10)


def test_ensemble_expectation():
    spec = SystemSpec(4)
    g = ghz_state(spec)
    ens = TrajectoryEnsemble(spec, [PureState(spec, g.amplitudes, 0.2) for _ in range(5)], 0)
    assert ensemble_expectation(ens, lambda s: 1.0) == pytest.approx(1)
    assert ensemble_expectation(ens, lambda s: abs(np.vdot(g.amplitudes, s.amplitudes)) ** 2) == pytest.approx(1)


def test_ensemble_jz2_matches_kraus():
    n = 4
    spec = SystemSpec(n)
    s = coherent_spin_state(spec)
    rho = kraus_squeeze(DensityOperator.from_pure(s), cfg(n, 1.0))
    M2 = spec.profile.M ** 2
    ref = float(np.real(np.diagonal(rho.matrix)) @ M2)
    ens = run_trajectory_ensemble(s, cfg(n, 1.0, engine=Engine.TRAJECTORY), 2000, seed=4)
    vals = [m.probabilities() @ M2 for m in ens.members]
    st_ = weighted_stats(vals)
    # squeezing keeps J_z^2 constant in the closed system; decay moves it
    assert abs(st_.mean - ref) <= 3 * st_.se + 1e-12


# ---------------------------------------------------------------------------
# statistics


def test_stats_two_samples():
    st_ = weighted_stats([0.0, 1.0])
    assert st_.mean == 0.5 and st_.sd == pytest.approx(np.sqrt(0.5))
    assert st_.se == pytest.approx(0.5)


def test_stats_constant_converges():
    st_ = TrajectoryStats(expected_n=100)
    for _ in range(49):
        st_.update(0.7)
    assert not st_.converged
    for _ in range(5):
        st_.update(0.7)
    assert st_.sd == 0 and st_.converged


def test_stats_uniform_sd():
    rng = np.random.default_rng(0)
    st_ = TrajectoryStats(expected_n=5000)
    for v in rng.random(5000):
        st_ = convergence_monitor(st_, v) if st_.count < 10 else (st_.update(v) or st_)
    assert st_.sd == pytest.approx(1 / np.sqrt(12), abs=0.01)
    assert st_.converged and st_.se <= st_.sd


def test_convergence_monitor_is_functional():
    a = TrajectoryStats()
    b = convergence_monitor(a, 1.0)
    assert a.count == 0 and b.count == 1


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=40), st.integers(1, 2), st.integers(0, 2**31))
def test_stats_merge_associative(values, cut, seed):
    rng = np.random.default_rng(seed)
    w = rng.random(len(values)) + 0.1
    k1 = len(values) // 3 * cut // 2 + 1
    k2 = (len(values) + k1) // 2
    parts = [weighted_stats(values[a:b], w[a:b]) for a, b in [(0, k1), (k1, k2), (k2, len(values))]]
    left = parts[0].merge(parts[1]).merge(parts[2])
    right = parts[0].merge(parts[1].merge(parts[2]))
    full = weighted_stats(values, w)
    for m in (left, right):
        assert m.mean == pytest.approx(full.mean, abs=1e-9)
        # compare variances: sqrt amplifies rounding noise near zero spread
        assert m.sd**2 == pytest.approx(full.sd**2, abs=1e-12)
        assert m.n_eff == pytest.approx(full.n_eff, rel=1e-12)
    assert parts[0].merge(parts[1]).mean == pytest.approx(parts[1].merge(parts[0]).mean, abs=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40))
def test_se_not_above_sd(values):
    st_ = weighted_stats(values)
    assert st_.se <= st_.sd + 1e-15
