"""Numba inner loop of the multi-inverter simulator.

One call advances a scenario segment with fixed grid/load/breaker/setpoint
configuration. Physics (LC filter + RL line in a global frame rotating at
w0) integrates with RK4 at dt_phys; the discrete controllers run every Ts
(zero-order hold). Mode ramps are piecewise-linear kappa(t) plans; the two
kappa-dependent controller sections are re-discretized in place whenever
kappa moves, carrying their canonical state vectors over unchanged.

Set NUMBA_DISABLE_JIT=1 to run this file as plain Python for debugging.
"""

import numpy as np
from numba import njit

# slots in the second-order block bank
PRD1, PRD2, KCD, PRQ1, PRQ2, KCQ, WBLK = 0, 1, 2, 3, 4, 5, 6
N2BLK = 7
# slots in the first-order block bank
KVD, KVQ, KID, KIQ = 0, 1, 2, 3
N1BLK = 4

# record channel layout (per inverter)
REC_CHANNELS = [
    "ig_d", "ig_q", "vc_d", "vc_q", "theta_dot", "P", "Q",
    "u_theta", "ep_d", "ep_q", "kappa_v", "kappa_theta", "m_d", "m_q",
]
NCH = len(REC_CHANNELS)
BUS_CHANNELS = ["vg_d", "vg_q", "grid_dw", "islanded"]
NBUS = len(BUS_CHANNELS)


@njit(cache=True)
def bilin2(b0, b1, b2, a0, a1, alpha, A, B, C):
    """Discretize a monic-denominator biproper biquad in place; returns D.

    Continuous form (b2 s^2 + b1 s + b0)/(s^2 + a1 s + a0) in controllable
    canonical coordinates, Tustin with half-step alpha.
    """
    c0 = b0 - b2 * a0
    c1 = b1 - b2 * a1
    det = 1.0 + alpha * a1 + alpha * alpha * a0
    A[0, 0] = (1.0 + alpha * a1 - alpha * alpha * a0) / det
    A[0, 1] = 2.0 * alpha / det
    A[1, 0] = -2.0 * alpha * a0 / det
    A[1, 1] = (1.0 - alpha * a1 - alpha * alpha * a0) / det
    B[0] = 2.0 * alpha * alpha / det
    B[1] = 2.0 * alpha / det
    C[0] = (c0 * (1.0 + alpha * a1) - c1 * alpha * a0) / det
    C[1] = (c0 * alpha + c1) / det
    return b2 + alpha * (c0 * alpha + c1) / det


@njit(cache=True)
def bilin1(b0, b1, a0, alpha):
    """Discretize (b1 s + b0)/(s + a0); returns (Ad, Bd, Cd, Dd)."""
    c0 = b0 - b1 * a0
    det = 1.0 + alpha * a0
    Ad = (1.0 - alpha * a0) / det
    Bd = 2.0 * alpha / det
    Cd = c0 / det
    Dd = b1 + alpha * c0 / det
    return Ad, Bd, Cd, Dd


@njit(cache=True, inline="always")
def _step2(A2, B2, C2, D2, x2, i, blk, u):
    """Advance one second-order block of inverter i; returns output."""
    x0 = x2[i, blk, 0]
    x1 = x2[i, blk, 1]
    y = C2[i, blk, 0] * x0 + C2[i, blk, 1] * x1 + D2[i, blk] * u
    nx0 = A2[i, blk, 0, 0] * x0 + A2[i, blk, 0, 1] * x1 + B2[i, blk, 0] * u
    nx1 = A2[i, blk, 1, 0] * x0 + A2[i, blk, 1, 1] * x1 + B2[i, blk, 1] * u
    x2[i, blk, 0] = nx0
    x2[i, blk, 1] = nx1
    return y


@njit(cache=True, inline="always")
def _step1(A1, B1, C1, D1, x1, i, blk, u):
    y = C1[i, blk] * x1[i, blk] + D1[i, blk] * u
    x1[i, blk] = A1[i, blk] * x1[i, blk] + B1[i, blk] * u
    return y


@njit(cache=True)
def _derivs(dy, y, mg, t, nsrc, breaker, vg_mag, dw0, dw_rate, fault_amp,
            rload, phig0, tseg0, Rl, Ll, Li, Ri, Ci, vdc, w0):
    """Physics derivatives in the global w0 frame; algebraic PCC bus."""
    n = y.shape[0]
    tau = t - tseg0
    if breaker:
        phig = phig0 + dw0 * tau + 0.5 * dw_rate * tau * tau
        vgd = vg_mag * np.cos(phig)
        vgq = vg_mag * np.sin(phig)
    else:
        sd = 0.0
        sq = 0.0
        for i in range(n):
            sd += y[i, 4]
            sq += y[i, 5]
        vgd = rload * sd
        vgq = rload * sq
    if fault_amp != 0.0:
        vgd += fault_amp * np.cos(2.0 * w0 * t)
        vgq += fault_amp * np.sin(2.0 * w0 * t)
    for i in range(n):
        ild, ilq = y[i, 0], y[i, 1]
        vcd, vcq = y[i, 2], y[i, 3]
        igd, igq = y[i, 4], y[i, 5]
        half_vdc = 0.5 * vdc[i]
        dy[i, 0] = (half_vdc * mg[i, 0] - vcd - Ri[i] * ild) / Li[i] + w0 * ilq
        dy[i, 1] = (half_vdc * mg[i, 1] - vcq - Ri[i] * ilq) / Li[i] - w0 * ild
        dy[i, 2] = (ild - igd) / Ci[i] + w0 * vcq
        dy[i, 3] = (ilq - igq) / Ci[i] - w0 * vcd
        dy[i, 4] = (vcd - vgd) / Ll[i] - (Rl[i] / Ll[i]) * igd + w0 * igq
        dy[i, 5] = (vcq - vgq) / Ll[i] - (Rl[i] / Ll[i]) * igq - w0 * igd
    return vgd, vgq


@njit(cache=True)
def run_segment(
    t0, n_steps, Ts, dt, n_sub,
    Rl, Ll, Li, Ri, Ci, vdc, v0, w0,
    breaker, vg_mag, dw0, dw_rate, fault_amp, rload, phig0, tseg0,
    sp_mode, sp_a, sp_b,
    y, xkl, x2, x1, utheta, wprev,
    Akl, Bkl, Ckl, Dkl,
    A2, B2, C2, D2,
    A1, B1, C1, D1,
    kcd_b, kcd_p2, kcd_cv, w_b, w_pf, w_cth, alpha,
    knot_t, knot_kv, knot_kth, knot_n, knot_ptr, kv_cur, kth_cur,
    dwmax, div_limit,
    dec, rec_t, rec_inv, rec_bus, rec_start, step_start, mg,
):
    """Advance n_steps control steps; returns (status, steps_done, samples).

    status 0 = ok, 1 = numerical divergence (state norm beyond div_limit).
    """
    n = y.shape[0]
    dy1 = np.empty((n, 6))
    dy2 = np.empty((n, 6))
    dy3 = np.empty((n, 6))
    dy4 = np.empty((n, 6))
    ytmp = np.empty((n, 6))
    x2_save = np.empty((2,))
    nrec = rec_start
    vgd_rec = 0.0
    vgq_rec = 0.0

    for step in range(n_steps):
        t = t0 + step * Ts
        gstep = step_start + step

        # ---- kappa schedule + controller regeneration
        for i in range(n):
            m = knot_n[i]
            if m > 0:
                ptr = knot_ptr[i]
                while ptr < m - 1 and t >= knot_t[i, ptr + 1]:
                    ptr += 1
                knot_ptr[i] = ptr
                if ptr == m - 1 or t <= knot_t[i, 0]:
                    kv = knot_kv[i, ptr]
                    kth = knot_kth[i, ptr]
                else:
                    f = (t - knot_t[i, ptr]) / (knot_t[i, ptr + 1] - knot_t[i, ptr])
                    kv = knot_kv[i, ptr] + f * (knot_kv[i, ptr + 1] - knot_kv[i, ptr])
                    kth = knot_kth[i, ptr] + f * (knot_kth[i, ptr + 1] - knot_kth[i, ptr])
                if kv != kv_cur[i]:
                    p1 = kcd_cv[i] * kv
                    D2[i, KCD] = bilin2(
                        kcd_b[i, 0], kcd_b[i, 1], kcd_b[i, 2],
                        p1 * kcd_p2[i], p1 + kcd_p2[i], alpha,
                        A2[i, KCD], B2[i, KCD], C2[i, KCD],
                    )
                    kv_cur[i] = kv
                if kth != kth_cur[i]:
                    p1 = w_cth[i] * kth
                    D2[i, WBLK] = bilin2(
                        w_b[i, 0], w_b[i, 1], w_b[i, 2],
                        p1 * w_pf[i], p1 + w_pf[i], alpha,
                        A2[i, WBLK], B2[i, WBLK], C2[i, WBLK],
                    )
                    kth_cur[i] = kth

        # ---- controller update (measurements at start of step)
        for i in range(n):
            phi = utheta[i] / v0[i]
            c = np.cos(phi)
            s = np.sin(phi)
            igd = c * y[i, 4] + s * y[i, 5]
            igq = -s * y[i, 4] + c * y[i, 5]
            vcd = c * y[i, 2] + s * y[i, 3]
            vcq = -s * y[i, 2] + c * y[i, 3]
            ild = c * y[i, 0] + s * y[i, 1]
            ilq = -s * y[i, 0] + c * y[i, 1]

            if sp_mode[i] == 1:
                vn2 = vcd * vcd + vcq * vcq
                floor = 0.04 * v0[i] * v0[i]  # (0.2*v0)^2 guard during sags
                if vn2 < floor:
                    vn2 = floor
                i0d = (2.0 / 3.0) * (vcd * sp_a[i] + vcq * sp_b[i]) / vn2
                i0q = (2.0 / 3.0) * (vcq * sp_a[i] - vcd * sp_b[i]) / vn2
            else:
                i0d = sp_a[i]
                i0q = sp_b[i]

            ed = i0d - igd
            eq = i0q - igq

            # e' = K_L e
            ep_d = Ckl[i, 0, 0] * xkl[i, 0] + Ckl[i, 0, 1] * xkl[i, 1] \
                + Dkl[i, 0, 0] * ed + Dkl[i, 0, 1] * eq
            ep_q = Ckl[i, 1, 0] * xkl[i, 0] + Ckl[i, 1, 1] * xkl[i, 1] \
                + Dkl[i, 1, 0] * ed + Dkl[i, 1, 1] * eq
            nx0 = Akl[i, 0, 0] * xkl[i, 0] + Akl[i, 0, 1] * xkl[i, 1] \
                + Bkl[i, 0, 0] * ed + Bkl[i, 0, 1] * eq
            nx1 = Akl[i, 1, 0] * xkl[i, 0] + Akl[i, 1, 1] * xkl[i, 1] \
                + Bkl[i, 1, 0] * ed + Bkl[i, 1, 1] * eq
            xkl[i, 0] = nx0
            xkl[i, 1] = nx1

            # snapshot of conditionally-integrated states for anti-windup
            kcd0, kcd1 = x2[i, KCD, 0], x2[i, KCD, 1]
            kcq0, kcq1 = x2[i, KCQ, 0], x2[i, KCQ, 1]
            wb0, wb1 = x2[i, WBLK, 0], x2[i, WBLK, 1]
            kvq_s = x1[i, KVQ]
            kid_s = x1[i, KID]
            kiq_s = x1[i, KIQ]
            uth_s = utheta[i]
            wpr_s = wprev[i]

            u = _step2(A2, B2, C2, D2, x2, i, PRD1, ep_d)
            u = _step2(A2, B2, C2, D2, x2, i, PRD2, u)
            ir_d = _step2(A2, B2, C2, D2, x2, i, KCD, u)
            u = _step2(A2, B2, C2, D2, x2, i, PRQ1, ep_q)
            u = _step2(A2, B2, C2, D2, x2, i, PRQ2, u)
            ir_q = _step2(A2, B2, C2, D2, x2, i, KCQ, u)

            w = _step2(A2, B2, C2, D2, x2, i, WBLK, ep_q)
            dw = w / v0[i]
            if dw > dwmax[i]:
                dw = dwmax[i]
            elif dw < -dwmax[i]:
                dw = -dwmax[i]
            weff = dw * v0[i]
            utheta[i] = utheta[i] + 0.5 * Ts * (weff + wprev[i])
            wprev[i] = weff
            thdot = w0 + dw

            uv_d = _step1(A1, B1, C1, D1, x1, i, KVD, v0[i] - vcd)
            uv_q = _step1(A1, B1, C1, D1, x1, i, KVQ, -vcq)

            ils_d = ir_d + uv_d + igd - Ci[i] * thdot * vcq
            ils_q = ir_q + uv_q + igq + Ci[i] * thdot * vcd

            ui_d = _step1(A1, B1, C1, D1, x1, i, KID, ils_d - ild)
            ui_q = _step1(A1, B1, C1, D1, x1, i, KIQ, ils_q - ilq)

            md = (2.0 / vdc[i]) * (ui_d + vcd - Li[i] * thdot * ilq)
            mq = (2.0 / vdc[i]) * (ui_q + vcq + Li[i] * thdot * ild)

            clamped = False
            if md > 1.0:
                md = 1.0
                clamped = True
            elif md < -1.0:
                md = -1.0
                clamped = True
            if mq > 1.0:
                mq = 1.0
                clamped = True
            elif mq < -1.0:
                mq = -1.0
                clamped = True
            if clamped:
                # conditional integration: freeze droop/sync/PI states
                x2[i, KCD, 0], x2[i, KCD, 1] = kcd0, kcd1
                x2[i, KCQ, 0], x2[i, KCQ, 1] = kcq0, kcq1
                x2[i, WBLK, 0], x2[i, WBLK, 1] = wb0, wb1
                x1[i, KVQ] = kvq_s
                x1[i, KID] = kid_s
                x1[i, KIQ] = kiq_s
                utheta[i] = uth_s
                wprev[i] = wpr_s
                phi_new = uth_s / v0[i]
            else:
                phi_new = utheta[i] / v0[i]

            cn = np.cos(phi_new)
            sn = np.sin(phi_new)
            mg[i, 0] = cn * md - sn * mq
            mg[i, 1] = sn * md + cn * mq

            # telemetry
            if gstep % dec == 0:
                rec_inv[nrec, i, 0] = igd
                rec_inv[nrec, i, 1] = igq
                rec_inv[nrec, i, 2] = vcd
                rec_inv[nrec, i, 3] = vcq
                rec_inv[nrec, i, 4] = thdot
                rec_inv[nrec, i, 5] = 1.5 * (vcd * igd + vcq * igq)
                rec_inv[nrec, i, 6] = 1.5 * (vcq * igd - vcd * igq)
                rec_inv[nrec, i, 7] = utheta[i]
                rec_inv[nrec, i, 8] = ep_d
                rec_inv[nrec, i, 9] = ep_q
                rec_inv[nrec, i, 10] = kv_cur[i]
                rec_inv[nrec, i, 11] = kth_cur[i]
                rec_inv[nrec, i, 12] = md
                rec_inv[nrec, i, 13] = mq

        # ---- physics: n_sub RK4 substeps with ZOH modulation
        for sub in range(n_sub):
            ts = t + sub * dt
            vgd_rec, vgq_rec = _derivs(dy1, y, mg, ts, n, breaker, vg_mag, dw0,
                                       dw_rate, fault_amp, rload, phig0, tseg0,
                                       Rl, Ll, Li, Ri, Ci, vdc, w0)
            for i in range(n):
                for k in range(6):
                    ytmp[i, k] = y[i, k] + 0.5 * dt * dy1[i, k]
            _derivs(dy2, ytmp, mg, ts + 0.5 * dt, n, breaker, vg_mag, dw0,
                    dw_rate, fault_amp, rload, phig0, tseg0,
                    Rl, Ll, Li, Ri, Ci, vdc, w0)
            for i in range(n):
                for k in range(6):
                    ytmp[i, k] = y[i, k] + 0.5 * dt * dy2[i, k]
            _derivs(dy3, ytmp, mg, ts + 0.5 * dt, n, breaker, vg_mag, dw0,
                    dw_rate, fault_amp, rload, phig0, tseg0,
                    Rl, Ll, Li, Ri, Ci, vdc, w0)
            for i in range(n):
                for k in range(6):
                    ytmp[i, k] = y[i, k] + dt * dy3[i, k]
            _derivs(dy4, ytmp, mg, ts + dt, n, breaker, vg_mag, dw0,
                    dw_rate, fault_amp, rload, phig0, tseg0,
                    Rl, Ll, Li, Ri, Ci, vdc, w0)
            for i in range(n):
                for k in range(6):
                    y[i, k] = y[i, k] + (dt / 6.0) * (
                        dy1[i, k] + 2.0 * dy2[i, k] + 2.0 * dy3[i, k] + dy4[i, k]
                    )

        # ---- bus telemetry and divergence check
        if gstep % dec == 0:
            rec_t[nrec] = t
            tau = t + Ts - tseg0
            rec_bus[nrec, 0] = vgd_rec
            rec_bus[nrec, 1] = vgq_rec
            rec_bus[nrec, 2] = dw0 + dw_rate * tau if breaker else 0.0
            rec_bus[nrec, 3] = 0.0 if breaker else 1.0
            nrec += 1

        for i in range(n):
            for k in range(6):
                if not np.isfinite(y[i, k]) or abs(y[i, k]) > div_limit[i]:
                    return 1, step + 1, nrec

    return 0, n_steps, nrec
