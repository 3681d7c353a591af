import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmode.plant import LineParams, line_tf
from invmode.synth import default_params, make_controllers, make_PR
from invmode.tf import (
    BilinearSingularityError,
    DivideByZeroTF,
    EvaluationAtPoleError,
    Polynomial,
    RationalTF,
    StateSpace,
    TransferMatrix2,
    count_origin_roots,
    default_omega_grid,
    discretize,
    eval_freq,
    margins,
    singular_values,
    tf_arith,
    to_state_space,
)

S = RationalTF.s()


def tf(num, den):
    return RationalTF(num, den)


# --------------------------------------------------------------------------
# polynomial / rational arithmetic


def test_polynomial_normalization_keeps_origin_roots():
    p = Polynomial([0.0, 0.0, 3.0, 0.0])
    assert p.degree == 2
    assert count_origin_roots(p) == 2


def test_sum_to_unity_without_cancellation():
    a = tf([1.0], [1.0, 1.0])
    b = tf([0.0, 1.0], [1.0, 1.0])
    c = tf_arith(a, b, "add")
    # (s+1)/(s+1)^2 form: numerator and denominator share the (s+1) factor
    assert c.num.degree >= 1 and c.den.degree == 2
    for w in (0.0, 1.0, 17.3):
        assert c(1j * w) == pytest.approx(1.0, abs=1e-12)


def test_integrator_times_s_keeps_origin_pair():
    c = tf_arith(tf([1.0], [0.0, 1.0]), S, "mul")
    assert c.num == Polynomial([0.0, 1.0])
    assert c.den == Polynomial([0.0, 1.0])
    assert c.cancel().num == Polynomial([1.0])


def test_divide_by_zero_tf_raises():
    with pytest.raises(DivideByZeroTF):
        tf_arith(S, RationalTF.constant(0.0), "div")


def test_controller_sum_is_single_rational_with_origin_factor(line):
    # (wtheta/s) + K1q keeps the literal origin factor in the denominator
    cs = make_controllers(default_params(line))
    combined = tf([cs.params.wtheta], [0.0, 1.0]) + cs.K1q
    assert count_origin_roots(combined.den) == 1
    # symbolic arithmetic cross-checked by evaluation at random complex points
    rng = np.random.default_rng(3)
    for _ in range(10):
        s = complex(rng.uniform(0.5, 50), rng.uniform(-5e3, 5e3))
        lhs = combined(s)
        rhs = cs.params.wtheta / s + cs.K1q(s)
        assert abs(lhs - rhs) / abs(rhs) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.5, 500.0), min_size=1, max_size=3),
       st.lists(st.floats(0.5, 500.0), min_size=1, max_size=3),
       st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_product_evaluation_homomorphism(pa, pb, ka, kb):
    a = RationalTF(Polynomial.from_roots([-r for r in pa[:1]], ka), Polynomial.from_roots([-r for r in pa], 1.0))
    b = RationalTF(Polynomial.from_roots([-r for r in pb[:1]], kb), Polynomial.from_roots([-r for r in pb], 1.0))
    prod = a * b
    w = np.logspace(-1, 4, 100)
    lhs = prod.freqresp(w)
    rhs = a.freqresp(w) * b.freqresp(w)
    assert np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-30)) < 1e-10


# --------------------------------------------------------------------------
# 2x2 transfer matrices


def test_tm2_identity_inverse():
    eye = TransferMatrix2.identity()
    inv = eye.inverse()
    for w in (0.1, 10.0):
        assert np.allclose(inv(1j * w), np.eye(2))


def test_tm2_diagonal_inverse():
    m = TransferMatrix2.diag(tf([1.0], [1.0, 1.0]), tf([2.0], [2.0, 1.0]))
    inv = m.inverse()
    s = 3.7j
    assert inv(s)[0, 0] == pytest.approx(1 + s, abs=1e-12)
    assert inv(s)[1, 1] == pytest.approx((2 + s) / 2, abs=1e-12)


def test_tm2_inverse_of_modified_plant(line):
    # K_L G_L inverts to Z(s+wm)/wm on the diagonal
    p = default_params(line)
    cs = make_controllers(p)
    GM = cs.KL @ line_tf(line)
    inv = GM.inverse()
    Z, wm = line.Z, p.wm
    for w in (1.0, 100.0, 5e3):
        v = inv(1j * w)
        ref = Z * (1j * w + wm) / wm
        assert v[0, 0] == pytest.approx(ref, rel=1e-8)
        assert v[1, 1] == pytest.approx(ref, rel=1e-8)
        assert abs(v[0, 1]) < 1e-8 * abs(ref)


def test_tm2_inverse_roundtrip(line):
    m = line_tf(line)
    inv = m.inverse()
    for w in (0.5, 60.0, 1e4):
        assert np.linalg.norm(m(1j * w) @ inv(1j * w) - np.eye(2)) < 1e-8


def test_singular_matrix_raises():
    one = RationalTF.constant(1.0)
    with pytest.raises(Exception):
        TransferMatrix2([[one, one], [one, one]]).inverse()


# --------------------------------------------------------------------------
# evaluation


def test_eval_freq_simple():
    assert eval_freq(tf([1.0], [1.0, 1.0]), 0.0) == pytest.approx(1.0)


def test_eval_freq_line_dc_norm():
    lp = LineParams(R=1e-3, L=1e-3)
    v = eval_freq(line_tf(lp), 0.0)
    smax, _ = singular_values(v)
    assert smax == pytest.approx(1.0 / lp.Z, rel=1e-9)
    assert smax == pytest.approx(2.653, rel=2e-4)


def test_eval_freq_KL_dc_rotation(line):
    cs = make_controllers(default_params(line))
    v = eval_freq(cs.KL, 0.0)
    phi = line.phi_z
    rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    assert np.allclose(v, rot, atol=1e-12)


def test_eval_at_pole_raises():
    with pytest.raises(EvaluationAtPoleError):
        tf([1.0], [0.0, 1.0])(0.0)


# --------------------------------------------------------------------------
# singular values


def test_singular_values_identity():
    assert singular_values(np.eye(2)) == pytest.approx((1.0, 1.0))


def test_singular_values_golden_ratio():
    phi = (1 + math.sqrt(5)) / 2
    smax, smin = singular_values(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert smax == pytest.approx(phi, rel=1e-12)
    assert smin == pytest.approx(1 / phi, rel=1e-12)


def test_singular_values_det_product():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        smax, smin = singular_values(m)
        assert smax * smin == pytest.approx(abs(np.linalg.det(m)), rel=1e-10)


def test_condition_number_at_30deg_mismatch(line):
    # static shaper with a 30 degree rotation split gives kappa = sqrt(3)
    dphi = math.radians(30)
    KL = TransferMatrix2(
        [[RationalTF.constant(math.cos(dphi)), RationalTF.constant(-math.sin(dphi))],
         [RationalTF.constant(0.0), RationalTF.constant(1.0)]]
    )
    GM0 = (KL @ line_tf(line))(0.0)
    smax, smin = singular_values(GM0)
    assert smax / smin == pytest.approx(math.sqrt(3), rel=1e-9)


# --------------------------------------------------------------------------
# margins


def test_margins_integrator():
    m = margins(tf([1.0], [0.0, 1.0]))
    assert m.phase_margin_deg == pytest.approx(90.0, abs=0.01)
    assert math.isinf(m.gain_margin_db)
    assert m.gain_crossover == pytest.approx(1.0, rel=1e-3)


def _d_axis_loop(a, line):
    p = default_params(line, a_d=a, a_q=a)
    cs = make_controllers(p)
    GMd = (cs.KL @ line_tf(line))[0, 0]
    return cs.Kd * GMd


def _oracle_margin(L):
    """Independent margin estimate: dense-grid crossover + local phase."""
    w = np.logspace(1, 5, 120000)
    r = L.freqresp(w)
    mag = np.abs(r)
    idx = np.flatnonzero((mag[:-1] >= 1) & (mag[1:] < 1))
    k = idx[-1]
    ph = math.degrees(np.angle(r[k]))
    return 180 + ph if ph < 0 else 180 - ph


def test_margin_d_axis_unity_lead(line):
    m = margins(_d_axis_loop(1.0, line))
    assert m.phase_margin_deg == pytest.approx(45.0, abs=5.0)


def test_margin_d_axis_third_lead_matches_oracle(line):
    # exact lead-lag analysis puts this near 98 deg (the small-signal
    # closed-form 45 + asin((1-a)/(1+a)) underestimates the lead section)
    L = _d_axis_loop(1.0 / 3.0, line)
    m = margins(L)
    assert m.phase_margin_deg == pytest.approx(_oracle_margin(L), abs=0.5)
    assert m.phase_margin_deg == pytest.approx(45 + math.degrees(math.asin(0.8)), abs=2.0)


def test_margins_crossover_near_wd(line):
    p = default_params(line)
    m = margins(_d_axis_loop(0.5, line))
    assert m.gain_crossover == pytest.approx(p.wd, rel=0.02)


# --------------------------------------------------------------------------
# origin roots


def test_count_origin_roots_examples(line):
    assert count_origin_roots(Polynomial([0.0, 2.0, 1.0])) == 1  # s^2 + 2s
    cs = make_controllers(default_params(line))
    assert count_origin_roots(cs.K2q.den) == 1
    assert count_origin_roots(cs.Kd.den) == 0


def test_count_origin_roots_invariant_under_shift():
    p = Polynomial([0.0, 0.0, 1.0, 4.0])
    q = p * Polynomial([1.0, 1.0])
    assert count_origin_roots(q) == count_origin_roots(p)


def test_count_origin_roots_with_tolerance():
    p = Polynomial.from_roots([-1e-12, -100.0])
    assert count_origin_roots(p, tol=1e-9) == 1


# --------------------------------------------------------------------------
# state space


def test_first_order_canonical():
    ss = to_state_space(tf([1.0], [1.0, 1.0]))
    assert ss.A == pytest.approx(np.array([[-1.0]]))
    assert ss.B == pytest.approx(np.array([[1.0]]))
    assert ss.C == pytest.approx(np.array([[1.0]]))
    assert ss.D == pytest.approx(np.array([[0.0]]))


def test_biproper_feedthrough():
    ss = to_state_space(tf([2.0, 1.0], [1.0, 1.0]))
    assert ss.D[0, 0] == pytest.approx(1.0)
    assert ss.A[0, 0] == pytest.approx(-1.0)
    # evaluation check at s = j
    ref = tf([2.0, 1.0], [1.0, 1.0])(1j)
    got = ss.freqresp(np.array([1.0]))[0, 0, 0]
    assert got == pytest.approx(ref, rel=1e-12)


def test_K2q_realization_is_three_states(line):
    cs = make_controllers(default_params(line))
    ss = to_state_space(cs.K2q)
    assert ss.nstates == 3


@pytest.mark.parametrize("seed", [1, 2])
def test_realization_matches_tf(line, seed):
    cs = make_controllers(default_params(line))
    rng = np.random.default_rng(seed)
    for tf_ in (cs.Kd, cs.K1q, cs.K2q):
        ss = to_state_space(tf_)
        w = 10.0 ** rng.uniform(-1, 4, 20)
        ref = tf_.freqresp(w)
        got = ss.freqresp(w)[:, 0, 0]
        assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-8


def test_tm2_realization(line):
    cs = make_controllers(default_params(line))
    ss = to_state_space(cs.KL)
    w = np.logspace(0, 4, 15)
    ref = cs.KL.freqresp(w)
    got = ss.freqresp(w)
    assert np.max(np.abs(got - ref)) < 1e-8 * np.max(np.abs(ref))
    assert ss.nstates == 2  # the shared shaping pole appears once per input


def test_improper_raises():
    with pytest.raises(Exception):
        to_state_space(tf([1.0, 2.0, 1.0], [1.0, 1.0]))


# --------------------------------------------------------------------------
# discretization


def test_discretize_integrator_is_trapezoid():
    ss = discretize(to_state_space(tf([1.0], [0.0, 1.0])), 20e-6)
    x = np.zeros(1)
    y = []
    for _ in range(1000):
        x, yk = ss.step_states(x, np.array([1.0]))
        y.append(yk[0])
    # trapezoidal accumulation: half-weight on the current sample, unit slope
    assert y[-1] == pytest.approx((1000 - 0.5) * 20e-6, rel=1e-9)
    steps = np.diff(y)
    assert np.allclose(steps, 20e-6, rtol=1e-9)


def test_discretize_first_order_match():
    wc = 2 * math.pi * 1000
    ct = tf([wc], [wc, 1.0])
    dt = discretize(to_state_space(ct), 20e-6)
    w = np.linspace(2 * math.pi * 10, 2 * math.pi * 2000, 50)
    ref = np.abs(ct.freqresp(w))
    got = np.abs(dt.freqresp(w)[:, 0, 0])
    assert np.max(np.abs(got - ref) / ref) < 0.01


def test_discretize_pr_peak_within_tolerance(line):
    w0 = line.w0
    pr = make_PR(20.0, 2 * math.pi * 0.5, w0, harmonic=1)
    dt = discretize(to_state_space(pr), 20e-6, prewarp=w0)
    w = w0 + np.linspace(-2.0, 2.0, 4001)
    mag = np.abs(dt.freqresp(w)[:, 0, 0])
    peak = w[np.argmax(mag)]
    assert abs(peak - w0) / (2 * math.pi) < 0.1  # within 0.1 Hz


def test_bilinear_singularity():
    Ts = 2e-5
    ct = to_state_space(tf([1.0], [-2.0 / Ts, 1.0]))  # pole exactly at 2/Ts
    with pytest.raises(BilinearSingularityError):
        discretize(ct, Ts)


def test_default_grid_spans_and_density():
    w = default_omega_grid()
    assert w[0] == pytest.approx(0.1) and w[-1] == pytest.approx(1e6)
    per_decade = (len(w) - 1) / 7.0
    assert per_decade == pytest.approx(200, abs=1)
