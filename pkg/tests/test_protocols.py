import numpy as np
import pytest

from oracles import dense_ps_fidelity
from pssim.engines import Engine
from pssim.errors import EngineGuardError
from pssim.measurement import PovmSpec, apply_measurement
from pssim.metrics import witness_expectation
from pssim.protocols import (
    MssProtocolParams,
    PsProtocolParams,
    default_sigma2,
    interval_post_selection_report,
    prepare_ps,
    run_mss_protocol,
    run_ps_protocol,
    sweep,
)
from pssim.spin import CollectiveAxis, SystemSpec, collective_rotation, dicke_coefficients, make_all_up


@pytest.mark.parametrize("n", [4, 6])
def test_ideal_ps_matches_dense_oracle(n):
    p = PsProtocolParams(n)
    res = run_ps_protocol(p)
    f_ref, p_ref = dense_ps_fidelity(n, 0.15, -2.5, p.sigma2)
    assert res.fidelity == pytest.approx(f_ref, abs=1e-10)
    assert res.probability == pytest.approx(p_ref, rel=1e-10)
    assert res.engine is Engine.PURE


def test_defaults():
    p = PsProtocolParams(10)
    assert p.sigma2 == pytest.approx(1.6**2)
    assert (p.chi_t, p.c, p.final_jy_angle, p.final_jx_angle) == (0.15, -2.5, np.pi / 2, 5.6)
    assert PsProtocolParams(4, x=1).resolved_engine is Engine.KRAUS
    assert PsProtocolParams(12, x=1).resolved_engine is Engine.TRAJECTORY
    assert 1.21 < default_sigma2(5) < 1.69
    with pytest.raises(ValueError):
        PsProtocolParams(4, sigma2=-1)
    with pytest.raises(ValueError):
        PsProtocolParams(4, chi_t=-0.1)


def test_ideal_protocol_stays_symmetric():
    n = 6
    p = PsProtocolParams(n)
    s = make_all_up(SystemSpec(n))
    stages = [s]
    s = collective_rotation(s, CollectiveAxis.X, np.pi / 2)
    stages.append(s)
    from pssim.spin import apply_one_axis_twist
    s = apply_one_axis_twist(s, 0.15)
    stages.append(s)
    s = collective_rotation(s, CollectiveAxis.X, -np.pi / 2)
    stages.append(s)
    s, _ = apply_measurement(s, PovmSpec(s.spec, -2.5, p.sigma2))
    stages.append(s)
    s = collective_rotation(collective_rotation(s, CollectiveAxis.Y, np.pi / 2), CollectiveAxis.X, 5.6)
    stages.append(s)
    for st in stages:
        assert dicke_coefficients(st)[1] < 1e-10
    assert np.allclose(s.amplitudes, run_ps_protocol(p).state.amplitudes)


@pytest.mark.parametrize("engine,kw", [("pure", {}), ("kraus", {"x": 1.0}),
                                       ("trajectory", {"x": 1.0, "n_traj": 30, "seed": 2})])
def test_fidelity_curve_matches_full_run(engine, kw):
    p = PsProtocolParams(4, engine=engine, **kw)
    pre = prepare_ps(p)
    cs = [-3.0, -2.5, 0.4]
    F, P = pre.fidelity_curve(cs)
    for c, f, pr in zip(cs, F, P):
        res = pre.finish(c=c)
        assert res.fidelity == pytest.approx(f, abs=1e-12)
        assert res.probability == pytest.approx(pr, rel=1e-12)


def test_witness_identity_and_qfi():
    res = run_ps_protocol(PsProtocolParams(6))
    assert res.fidelity > 0.5
    assert res.witness == witness_expectation(res.fidelity) < 0
    assert abs(res.witness - (0.5 - res.fidelity)) <= 1e-12
    assert 0 < res.qfi.value <= 36 + 1e-9


def test_monotone_in_x_small():
    fs = [run_ps_protocol(PsProtocolParams(4, x=x, engine="kraus")).fidelity for x in (0, 0.1, 1, 2)]
    assert all(a >= b for a, b in zip(fs, fs[1:]))
    fm = [run_mss_protocol(MssProtocolParams(4, x=x, engine="kraus")).fidelity for x in (0, 0.1, 1)]
    assert all(a >= b for a, b in zip(fm, fm[1:]))


def test_kraus_x0_agrees_with_pure():
    a = run_ps_protocol(PsProtocolParams(4, engine="kraus")).fidelity
    b = run_ps_protocol(PsProtocolParams(4)).fidelity
    assert a == pytest.approx(b, abs=1e-4)


@pytest.mark.parametrize("n", [4, 6, 8])
def test_mss_ideal_unity(n):
    assert run_mss_protocol(MssProtocolParams(n)).fidelity == pytest.approx(1, abs=1e-6)


def test_mss_odd_rejected():
    with pytest.raises(ValueError):
        MssProtocolParams(5)


def test_pure_engine_refuses_decay():
    with pytest.raises(EngineGuardError):
        run_ps_protocol(PsProtocolParams(4, x=1, engine="pure"))


def test_interval_degenerate():
    p = PsProtocolParams(4)
    rep = interval_post_selection_report(p, -2.5, -2.5)
    single = run_ps_protocol(p).fidelity
    assert rep.f_min == rep.f_max == pytest.approx(single, abs=1e-12)
    assert rep.probability == 0
    with pytest.raises(ValueError):
        interval_post_selection_report(p, 1, 0)


def test_sweep_single_value_equals_run():
    p = PsProtocolParams(4)
    pts = sweep(p, "c", [-2.5])
    assert pts[0].result.fidelity == pytest.approx(run_ps_protocol(p).fidelity, abs=1e-14)
    pts = sweep(p, "sigma2", [p.sigma2])
    assert pts[0].result.fidelity == pytest.approx(run_ps_protocol(p).fidelity, abs=1e-14)


def test_sweep_collects_errors():
    pts = sweep(MssProtocolParams(4), "N", [4, 5, 6])
    assert pts[0].error is None and pts[2].error is None
    assert pts[1].result is None and "ValueError" in pts[1].error
    with pytest.raises(ValueError):
        sweep(MssProtocolParams(4), "bogus", [1])


def test_sweep_deterministic_seeds():
    p = PsProtocolParams(4, x=1.0, engine="trajectory", n_traj=10, seed=5)
    a = sweep(p, "x", [1.0, 2.0])
    b = sweep(p, "x", [1.0, 2.0])
    assert [pt.result.fidelity for pt in a] == [pt.result.fidelity for pt in b]


def test_optimizer_hook_does_not_lose_fidelity():
    base = run_ps_protocol(PsProtocolParams(6)).fidelity
    opt = run_ps_protocol(PsProtocolParams(6, optimize_final_angles=True))
    assert opt.fidelity >= base - 1e-9
    assert "jy_angle" in opt.extras
