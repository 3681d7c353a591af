import math

import numpy as np
import pytest

from invmode.plant import (
    LineParams,
    dq_power,
    line_tf,
    power_to_current,
    steady_power_flow,
    universal_droop,
)
from invmode.tf import singular_values


def test_line_derived_quantities():
    lp = LineParams(R=1e-3, L=1e-3)
    assert lp.lam == pytest.approx(1.0)
    assert lp.Z == pytest.approx(math.hypot(1e-3, 1e-3 * lp.w0))
    assert math.degrees(lp.phi_z) == pytest.approx(89.848, abs=1e-2)


def test_line_params_validation():
    with pytest.raises(ValueError):
        LineParams(R=-0.1, L=1e-3)
    with pytest.raises(ValueError):
        LineParams(R=0.1, L=0.0)


# power flow


def test_power_flow_zero_at_matched_voltages():
    lp = LineParams(R=1.0, L=1e-3)
    P, Q = steady_power_flow(1.0, 1.0, 0.0, lp)
    assert P == pytest.approx(0.0, abs=1e-15)
    assert Q == pytest.approx(0.0, abs=1e-15)


def _unit_line(phi_deg):
    # synthetic unit-impedance line at the requested angle
    phi = math.radians(phi_deg)
    w0 = 2 * math.pi * 60
    L = math.sin(phi) / w0
    R = math.cos(phi)
    if L == 0.0:
        L = 1e-12
    return LineParams(R=R, L=L, w0=w0)


def test_power_flow_inductive_line():
    P, Q = steady_power_flow(1.0, 1.0, 0.1, _unit_line(90.0))
    assert P == pytest.approx(-math.sin(0.1), rel=1e-9)
    assert Q == pytest.approx(math.cos(0.1) - 1.0, rel=1e-6)


def test_power_flow_resistive_line():
    P, Q = steady_power_flow(1.0, 1.0, 0.1, _unit_line(0.0))
    assert P == pytest.approx(math.cos(0.1) - 1.0, rel=1e-6)
    assert Q == pytest.approx(math.sin(0.1), rel=1e-6)


# droop law reference


def test_droop_zero_at_setpoint():
    dv, dw = universal_droop(5.0, 2.0, 5.0, 2.0, 0.3, 0.7, 1.0)
    assert dv == 0.0 and dw == 0.0


def test_droop_inductive_rotation():
    dv, dw = universal_droop(0.0, 0.0, 1.0, 0.0, 1.0, 1.0, math.pi / 2)
    assert dv == pytest.approx(0.0, abs=1e-15)
    assert dw == pytest.approx(1.0)


def test_droop_resistive_rotation():
    dv, dw = universal_droop(0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0)
    assert dv == pytest.approx(1.0)
    assert dw == pytest.approx(0.0, abs=1e-15)


# power/current mapping


def test_power_to_current_aligned():
    v0 = 170.0
    i0d, i0q = power_to_current(3000.0, 600.0, (v0, 0.0), "three")
    assert i0d == pytest.approx((2 / 3) * 3000 / v0)
    assert i0q == pytest.approx(-(2 / 3) * 600 / v0)


def test_power_to_current_zero_power():
    assert power_to_current(0.0, 0.0, (170.0, 0.0)) == (0.0, 0.0)


def test_power_to_current_quadrature_voltage():
    v0 = 170.0
    i0d, _ = power_to_current(0.0, 600.0, (0.0, v0), "three")
    assert i0d == pytest.approx((2 / 3) * 600 / v0)


def test_power_to_current_zero_voltage_raises():
    with pytest.raises(ZeroDivisionError):
        power_to_current(1.0, 0.0, (0.0, 0.0))


def test_power_roundtrip_identity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P0, Q0 = rng.uniform(-3e3, 3e3, 2)
        vc = (rng.uniform(100, 200), 0.0)
        i = power_to_current(P0, Q0, vc, "three")
        P, Q = dq_power(vc, i, "three")
        assert P == pytest.approx(P0, abs=1e-12 * max(1, abs(P0)))
        assert Q == pytest.approx(Q0, abs=1e-12 * max(1, abs(Q0)))


# line transfer matrix


def test_line_tf_structure():
    lp = LineParams(R=1e-3, L=1e-3)
    G = line_tf(lp)
    w = np.logspace(0, 5, 12)
    r = G.freqresp(w)
    assert np.allclose(r[:, 0, 1], -r[:, 1, 0])
    assert np.allclose(r[:, 0, 0], r[:, 1, 1])


def test_line_tf_dc_and_hf_norms():
    lp = LineParams(R=1e-3, L=1e-3)
    G = line_tf(lp)
    assert singular_values(G(0.0))[0] == pytest.approx(1 / lp.Z, rel=1e-10)
    assert singular_values(G(1j * 1e7))[0] < 1e-3


def test_line_tf_pole_real_parts():
    lp = LineParams(R=0.5, L=1e-3)
    G = line_tf(lp)
    poles = G[0, 0].poles()
    assert np.allclose(poles.real, -lp.lam)
    assert np.allclose(sorted(np.abs(poles.imag)), [lp.w0, lp.w0])
