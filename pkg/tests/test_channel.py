import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epworkbench.channel import (ORIGINAL, PARAM_NAMES, ChannelInfeasible, ConstantTau, GateState,
                                 SodiumChannelParams, Sweep, SummaryCurve, VoltageProtocol,
                                 activation_protocol, default_protocols, hj_inf,
                                 inactivation_protocol, i_na, integrate_protocol, m_inf,
                                 read_curves_csv, recovery_protocol, run_protocol_suite,
                                 steady_state, tau_m, write_curves_csv)


def euler_gates(segments, params, dt):
    """Explicit Euler reference for the gating ODEs, one value per step."""
    g = np.array([m_inf(segments[0][1], params), hj_inf(segments[0][1], params),
                  hj_inf(segments[0][1], params)], dtype=float)
    out = [g.copy()]
    for dur, v in segments:
        ginf = np.array([m_inf(v, params), hj_inf(v, params), hj_inf(v, params)])
        tau = np.array([tau_m(v, params), params.tau_h(v), params.tau_j(v)], dtype=float)
        k = dt / tau
        for _ in range(int(round(dur / dt))):
            g = g + k * (ginf - g)
            out.append(g.copy())
    return np.array(out)


def test_original_values():
    assert ORIGINAL.vector().tolist() == [45, -6.5, 0.235, 47.1, -0.1, 0.0588, 11.0, 76.1, 6.07]
    assert PARAM_NAMES[-2:] == ("q1", "q2")


def test_m_inf_examples():
    assert m_inf(-45.0) == 0.5
    assert m_inf(-38.5) == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)
    assert m_inf(1e4) == 1.0
    v = np.linspace(-120, 60, 200)
    assert np.all(np.diff(m_inf(v)) > 0)


def test_hj_inf_examples():
    assert hj_inf(-76.1) == 0.5
    assert hj_inf(-70.03) == pytest.approx(1 / (1 + math.e), abs=1e-12)
    assert hj_inf(1e4) == 0.0
    assert np.all(np.diff(hj_inf(np.linspace(-120, 60, 200))) < 0)


def test_tau_m_at_singularity_and_zero():
    assert tau_m(-47.1) == pytest.approx(1 / (2.35 + 0.0588 * math.exp(47.1 / 11.0)), rel=1e-12)
    expected = 1 / (0.235 * 47.1 / (1 - math.exp(-4.71)) + 0.0588)
    assert tau_m(0.0) == pytest.approx(expected, rel=1e-12)


def test_tau_m_continuous_across_singularity():
    centre = float(tau_m(-47.1))
    for dv in (1e-7, 1e-9, 1e-12):
        assert abs(float(tau_m(-47.1 - dv)) - centre) <= 1e-8
        assert abs(float(tau_m(-47.1 + dv)) - centre) <= 1e-8
    # no jump where the expansion hands over to the direct formula (|p5 u| = 1e-6)
    edge = 1e-6 / abs(ORIGINAL.p5)
    for side in (-1, 1):
        inner, outer = tau_m(-47.1 + side * edge * (1 - 1e-6)), tau_m(-47.1 + side * edge * (1 + 1e-6))
        assert abs(float(inner) - float(outer)) <= 1e-8


def test_tau_m_homogeneous_in_p3_p6():
    v = np.linspace(-100, 40, 57)
    scaled = SodiumChannelParams(p3=ORIGINAL.p3 * 3, p6=ORIGINAL.p6 * 3)
    assert np.allclose(tau_m(v, scaled), tau_m(v) / 3, rtol=1e-12)


def test_tau_m_infeasible():
    bad = SodiumChannelParams(p3=-5.0)
    with pytest.raises(ChannelInfeasible):
        tau_m(np.linspace(-100, 40, 30), bad)


def test_i_na_examples():
    st_ = GateState(0.3, 0.4, 0.5)
    assert i_na(ORIGINAL.e_na, st_) == 0.0
    assert i_na(-10.0, GateState(1, 1, 1), SodiumChannelParams(g_na=1, e_na=0)) == -10.0
    got = i_na(-20.0, GateState(0.5, 0.8, 0.9), SodiumChannelParams(g_na=13))
    assert got == pytest.approx(13 * 0.125 * 0.72 * -84.3, rel=1e-12)


def test_param_and_state_validation():
    for kw in ({"g_na": 0.0}, {"p2": 0.0}, {"q2": 0.0}, {"p7": 0.0}):
        with pytest.raises(ValueError):
            SodiumChannelParams(**kw)
    with pytest.raises(ValueError):
        GateState(1.1, 0.5, 0.5)
    with pytest.raises(ValueError):
        Sweep(((0.0, -80.0),), (0,))
    with pytest.raises(ValueError):
        VoltageProtocol("ramp", (Sweep(((1.0, -80.0),), (0,)),))


def test_with_vector_roundtrip():
    theta = ORIGINAL.vector() * 1.1
    assert np.array_equal(ORIGINAL.with_vector(theta).vector(), theta)


def test_long_hold_reaches_steady_state():
    prot = VoltageProtocol("activation", (Sweep(((5.0, -120.0), (2000.0, -30.0)), (1,)),))
    (trace,), _ = integrate_protocol(prot, dt=1.0)
    ss = steady_state(-30.0)
    for got, want in ((trace.m[-1], ss.m), (trace.h[-1], ss.h), (trace.j[-1], ss.j)):
        assert abs(got - want) <= 1e-6


def test_gates_stay_in_unit_interval():
    (trace, *_), _ = integrate_protocol(recovery_protocol(), dt=0.05)
    for g in (trace.m, trace.h, trace.j):
        assert g.min() >= 0.0 and g.max() <= 1.0


def test_activation_midpoint_near_p1():
    volts = np.arange(-70.0, 10.01, 0.5)
    _, curve = integrate_protocol(activation_protocol(volts))
    mid = np.interp(0.5, curve.values, curve.abscissa)
    assert abs(mid - (-ORIGINAL.p1)) <= 0.5


def test_summary_independent_of_dt():
    prot = VoltageProtocol("activation", (Sweep(((30.0, -10.0),), (0,)),))
    _, a = integrate_protocol(prot, dt=0.02)
    _, b = integrate_protocol(prot, dt=0.01)
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-9)


def test_exponential_update_matches_euler_oracle():
    segments = ((2.0, -120.0), (3.0, -20.0), (3.0, -60.0))
    prot = VoltageProtocol("activation", (Sweep(segments, (1,)),))
    (trace,), _ = integrate_protocol(prot, dt=0.01)
    ref = euler_gates(segments, ORIGINAL, 1e-4)[::100]
    got = np.stack([trace.m, trace.h, trace.j], axis=1)
    assert got.shape == ref.shape
    # pointwise Euler error is ~dt/(2 tau_m) itself, so compare whole trajectories
    assert np.linalg.norm(got - ref) <= 1e-4 * np.linalg.norm(ref)
    i_ref = ORIGINAL.g_na * ref[:, 0] ** 3 * ref[:, 1] * ref[:, 2] * (trace.v - ORIGINAL.e_na)
    assert abs(np.abs(trace.i_na).max() / np.abs(i_ref).max() - 1) <= 1e-4


def test_suite_shapes_and_monotonicity():
    curves = run_protocol_suite()
    assert [c.kind for c in curves] == ["activation", "iv_curve", "inactivation",
                                       "pulse_train", "recovery"]
    act, iv, inact, train, rec = curves
    assert np.all(np.diff(act.values) >= -1e-12)
    assert np.all(np.diff(inact.values) <= 1e-12)
    assert act.values.max() == pytest.approx(1.0) and inact.values.max() == pytest.approx(1.0)
    assert np.abs(iv.values).max() == pytest.approx(1.0)
    assert train.values[0] == 1.0 and len(train.values) == 20
    assert np.all(np.diff(rec.values) >= -1e-12) and rec.values[-1] <= 1.0 + 1e-12


def test_suite_deterministic():
    a = run_protocol_suite()
    b = run_protocol_suite(SodiumChannelParams())
    for x, y in zip(a, b):
        assert np.array_equal(x.values, y.values)


def test_suite_matches_single_protocol_integration():
    suite = run_protocol_suite()
    for prot, curve in zip(default_protocols(), suite):
        _, single = integrate_protocol(prot, dt=1.0)
        assert np.array_equal(single.values, curve.values)


def test_inactivation_tracks_hj_inf():
    # long prepulses equilibrate h and j, so availability is close to hj_inf squared
    prot = inactivation_protocol(prepulses=(-120, -90, -76.1, -60), duration=2000.0)
    _, curve = integrate_protocol(prot)
    expected = hj_inf(curve.abscissa) ** 2
    assert np.allclose(curve.values, expected / expected.max(), rtol=1e-2)


def test_custom_tau_callables():
    fast = SodiumChannelParams(tau_h=ConstantTau(1.0), tau_j=ConstantTau(2.0))
    slow = run_protocol_suite()[4]
    quick = run_protocol_suite(fast)[4]
    assert quick.values[0] > slow.values[0]


def test_curves_csv_roundtrip(tmp_path):
    curves = run_protocol_suite()
    path = write_curves_csv(tmp_path / "c.csv", curves)
    back = read_curves_csv(path)
    assert [c.kind for c in back] == [c.kind for c in curves]
    for a, b in zip(curves, back):
        assert np.array_equal(a.abscissa, b.abscissa) and np.array_equal(a.values, b.values)


def test_curves_csv_rejects_bad_header(tmp_path):
    (tmp_path / "b.csv").write_text("a,b,c\r\nx,1,2\r\n")
    with pytest.raises(ValueError):
        read_curves_csv(tmp_path / "b.csv")


def test_summary_curve_rejects_nonfinite():
    with pytest.raises(ChannelInfeasible):
        SummaryCurve("activation", np.zeros(2), np.array([0.0, np.nan]))


@settings(max_examples=25, deadline=None)
@given(st.floats(-150, 80), st.floats(0.5, 3.0))
def test_gate_bounds_property(v, scale):
    p = SodiumChannelParams(p3=ORIGINAL.p3 * scale, p6=ORIGINAL.p6 * scale)
    assert 0.0 <= float(m_inf(v, p)) <= 1.0
    assert 0.0 <= float(hj_inf(v, p)) <= 1.0
    assert float(tau_m(v, p)) > 0.0
