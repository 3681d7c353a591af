"""Frequency-domain verification of a realized design.

Everything here is pointwise-in-omega numerics on top of the exact rational
algebra: the sensitivity factorization S = Gamma * Xc * S_tilde and its
residual, the coupling bound, the three MIMO stability conditions, the
sector-bounded-nonlinearity condition, mode classification from structural
integrator counts, droop/sharing predictions, and the T_theta/T_v
transient-shape metrics.

Closed-loop stability verdicts come from polynomial root real parts with a
relative threshold of 1e-6 times the root magnitude scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .plant import LineParams, line_tf
from .synth import ControllerSet, make_KL
from .tf import (
    MarginReport,
    RationalTF,
    TransferMatrix2,
    default_omega_grid,
    margins,
    singular_values,
)

__all__ = [
    "FactorizationResult",
    "StabilityReport",
    "ModeReport",
    "factorize",
    "coupling_bound",
    "check_stability",
    "prop4_checks",
    "classify_mode",
    "sharing_ratios",
    "freq_shape",
    "sync_check",
    "closed_loop_poles",
    "is_hurwitz",
]

MODE_TABLE = {
    (0, 1): "GFM",
    (0, 2): "ESS",
    (1, 1): "STATCOM",
    (1, 2): "GFL",
}


def closed_loop_poles(open_loop: RationalTF) -> np.ndarray:
    """Roots of den + num of the open loop (poles of 1/(1+L))."""
    return (open_loop.den + open_loop.num).roots()


def is_hurwitz(roots: np.ndarray) -> bool:
    if len(roots) == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(roots))))
    return bool(np.max(roots.real) < -1e-6 * scale)


def _norm2(mats: np.ndarray) -> np.ndarray:
    """sigma_max along the first axis of stacked 2x2 complex matrices."""
    h00 = np.abs(mats[:, 0, 0]) ** 2 + np.abs(mats[:, 1, 0]) ** 2
    h11 = np.abs(mats[:, 0, 1]) ** 2 + np.abs(mats[:, 1, 1]) ** 2
    h01 = np.conj(mats[:, 0, 0]) * mats[:, 0, 1] + np.conj(mats[:, 1, 0]) * mats[:, 1, 1]
    tr = h00 + h11
    disc = np.sqrt(np.maximum((h00 - h11) ** 2 + 4.0 * np.abs(h01) ** 2, 0.0))
    return np.sqrt(np.maximum((tr + disc) / 2.0, 0.0))


def _inv2(mats: np.ndarray) -> np.ndarray:
    """Stacked closed-form 2x2 complex inverses."""
    a, b = mats[:, 0, 0], mats[:, 0, 1]
    c, d = mats[:, 1, 0], mats[:, 1, 1]
    det = a * d - b * c
    out = np.empty_like(mats)
    out[:, 0, 0] = d / det
    out[:, 0, 1] = -b / det
    out[:, 1, 0] = -c / det
    out[:, 1, 1] = a / det
    return out


# --------------------------------------------------------------------------
# Factorization


@dataclass
class FactorizationResult:
    """Sensitivity factorization S = Gamma * Xc * S_tilde with diagnostics."""

    S: TransferMatrix2
    S_tilde: TransferMatrix2
    Gamma: TransferMatrix2
    Xc: TransferMatrix2 | None  # symbolic form omitted for non-triangular G_M
    omega: np.ndarray
    eps_profile: np.ndarray  # eps(omega) samples
    max_residual: float
    # numeric per-frequency samples used for all profile computations
    S_num: np.ndarray = field(repr=False, default=None)
    Xc_num: np.ndarray = field(repr=False, default=None)
    S_tilde_num: np.ndarray = field(repr=False, default=None)
    Gamma_num: np.ndarray = field(repr=False, default=None)

    @property
    def eps_inf(self) -> float:
        return float(np.max(self.eps_profile))


def factorize(
    KL: TransferMatrix2,
    K_tilde: TransferMatrix2,
    GL: TransferMatrix2,
    omega=None,
) -> FactorizationResult:
    """Factor the MIMO sensitivity into Gamma * Xc * S_tilde and verify it.

    S is computed two independent ways at every grid frequency: directly as
    (I + K*GL)^-1 and through the factorization; max_residual is the largest
    two-norm discrepancy. eps(w) = |S_tilde(jw)|_2 * |Gamma(jw) - I|_2.
    """
    w = default_omega_grid() if omega is None else np.asarray(omega, float)
    GM = KL @ GL
    K = K_tilde @ KL
    Kd, Kq = K_tilde[0, 0], K_tilde[1, 1]
    GMd, GMq = GM[0, 0], GM[1, 1]

    S_tilde = TransferMatrix2.diag(1 / (1 + Kd * GMd), 1 / (1 + Kq * GMq))

    # symbolic S and Gamma (moderate degree); Xc symbolically only when the
    # nilpotent shortcut applies, otherwise evaluation stays numeric
    IKG = TransferMatrix2.identity() + (K @ GL)
    S_sym = IKG.inverse()
    Gamma = GM.inverse() @ GM.diagonal()
    Xc_sym = None
    if GM.is_triangular(np.logspace(0, 5, 24)):
        # S_tilde*(Gamma - I) is strictly triangular, hence nilpotent:
        # (I + N)^-1 = I - N exactly
        N = S_tilde @ (Gamma - TransferMatrix2.identity())
        Xc_sym = TransferMatrix2.identity() - N

    # numeric per-frequency evaluation
    eye = np.eye(2)
    GLw = GL.freqresp(w)
    Kw = K.freqresp(w)
    KLw = KL.freqresp(w)
    GMw = np.einsum("kij,kjl->kil", KLw, GLw)
    kd = Kd.freqresp(w)
    kq = Kq.freqresp(w)
    std = 1.0 / (1.0 + kd * GMw[:, 0, 0])
    stq = 1.0 / (1.0 + kq * GMw[:, 1, 1])

    n = len(w)
    St_num = np.zeros((n, 2, 2), complex)
    St_num[:, 0, 0] = std
    St_num[:, 1, 1] = stq
    eye_n = np.broadcast_to(eye, (n, 2, 2))
    S_num = _inv2(eye_n + np.einsum("kij,kjl->kil", Kw, GLw))
    GM_diag = np.zeros_like(GMw)
    GM_diag[:, 0, 0] = GMw[:, 0, 0]
    GM_diag[:, 1, 1] = GMw[:, 1, 1]
    Gamma_num = np.einsum("kij,kjl->kil", _inv2(GMw), GM_diag)
    Xc_num = _inv2(eye_n + np.einsum("kij,kjl->kil", St_num, Gamma_num - eye_n))
    fact = np.einsum("kij,kjl,klm->kim", Gamma_num, Xc_num, St_num)
    resid = _norm2(S_num - fact)
    eps = _norm2(St_num) * _norm2(Gamma_num - eye_n)

    return FactorizationResult(
        S=S_sym,
        S_tilde=S_tilde,
        Gamma=Gamma,
        Xc=Xc_sym,
        omega=w,
        eps_profile=eps,
        max_residual=float(resid.max()),
        S_num=S_num,
        Xc_num=Xc_num,
        S_tilde_num=St_num,
        Gamma_num=Gamma_num,
    )


def coupling_bound(fr: FactorizationResult):
    """Pointwise bound |Xc - I|_2 <= eps/(1 - eps) next to the direct value.

    Returns (omega, bound, direct, valid) arrays; the bound is only valid
    where eps < 1.
    """
    eps = fr.eps_profile
    valid = eps < 1.0
    bound = np.where(valid, eps / np.where(valid, 1.0 - eps, 1.0), np.inf)
    eye = np.eye(2)
    direct = _norm2(fr.Xc_num - eye)
    return fr.omega, bound, direct, valid


# --------------------------------------------------------------------------
# Stability report


@dataclass
class StabilityReport:
    """Evaluated MIMO stability conditions plus classical margins per axis."""

    siso_ok_d: bool
    siso_ok_q: bool
    decoupling_ok: bool
    magnitude_ok: bool
    eps_inf: float
    nonlinear_ok: bool
    nonlinear_worst: float  # max over omega of dw_max*|S~|*|Gamma Xc|*|G_L|
    nonlinear_worst_omega: float
    margins_d: MarginReport
    margins_q: MarginReport
    z_shrink_tolerance: float  # largest line-impedance shrink factor staying SISO-stable
    warnings: list[str] = field(default_factory=list)

    @property
    def siso_ok(self) -> bool:
        return self.siso_ok_d and self.siso_ok_q

    @property
    def verdict(self) -> bool:
        return self.siso_ok and (self.decoupling_ok or self.magnitude_ok)

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "siso_ok": {"d": self.siso_ok_d, "q": self.siso_ok_q},
            "decoupling_ok": self.decoupling_ok,
            "magnitude_ok": self.magnitude_ok,
            "eps_inf": self.eps_inf,
            "nonlinear_ok": self.nonlinear_ok,
            "nonlinear_worst": self.nonlinear_worst,
            "nonlinear_worst_omega": self.nonlinear_worst_omega,
            "margins_d": self.margins_d.as_dict(),
            "margins_q": self.margins_q.as_dict(),
            "z_shrink_tolerance": self.z_shrink_tolerance,
            "warnings": list(self.warnings),
        }


def _refined_max(f, w: np.ndarray, vals: np.ndarray, n_local: int = 3):
    """Grid max of f plus local refinement around the largest samples."""
    best = float(vals.max())
    w_best = float(w[int(np.argmax(vals))])
    order = np.argsort(vals)[::-1]
    seen = []
    for idx in order:
        if len(seen) >= n_local:
            break
        if any(abs(np.log10(w[idx] / s)) < 0.05 for s in seen):
            continue
        seen.append(w[idx])
        lo = w[max(idx - 1, 0)]
        hi = w[min(idx + 1, len(w) - 1)]
        wl = np.logspace(np.log10(lo), np.log10(hi), 40)
        vl = f(wl)
        k = int(np.argmax(vl))
        if vl[k] > best:
            best, w_best = float(vl[k]), float(wl[k])
    return best, w_best


def check_stability(
    cs: ControllerSet,
    line_true: LineParams | None = None,
    dw_max: float | None = None,
    omega=None,
) -> StabilityReport:
    """Evaluate the SISO / decoupling / magnitude / nonlinearity conditions.

    The controller is taken as realized (nominal-line K_L inside cs); the
    plant uses line_true, so impedance-mismatch robustness studies evaluate
    the honest mismatched loop. Reports, never raises, on instability.
    """
    p = cs.params
    line = p.line if line_true is None else line_true
    dw = p.dw_max if dw_max is None else dw_max
    w = default_omega_grid() if omega is None else np.asarray(omega, float)
    # the line resonance and its second harmonic are narrow features; make
    # sure the pointwise checks sample them
    w = np.unique(
        np.concatenate(
            [
                w,
                line.w0 + np.linspace(-20 * dw, 20 * dw, 161),
                2 * line.w0 + np.linspace(-40 * dw, 40 * dw, 161),
            ]
        )
    )

    GL = line_tf(line)
    GM = cs.KL @ GL
    Ld = cs.Kd * GM[0, 0]
    Lq = cs.Kq * GM[1, 1]

    siso_d = is_hurwitz(closed_loop_poles(Ld))
    siso_q = is_hurwitz(closed_loop_poles(Lq))
    m_d = margins(Ld)
    m_q = margins(Lq)

    decoupling = GM.is_triangular(np.logspace(0, 5, 24))

    fr = factorize(cs.KL, cs.Ktilde(), GL, omega=w)
    eps_inf, _ = _refined_max(
        lambda wl: _eps_samples(cs, GL, wl), w, fr.eps_profile
    )
    magnitude = eps_inf < 1.0

    def nl_samples(wl):
        GLw = GL.freqresp(wl)
        frl = factorize(cs.KL, cs.Ktilde(), GL, omega=wl)
        gl = _norm2(GLw)
        gxc = _norm2(np.einsum("kij,kjl->kil", frl.Gamma_num, frl.Xc_num))
        st = _norm2(frl.S_tilde_num)
        return dw * st * gxc * gl

    nl_vals = nl_samples(w)
    nl_worst, nl_w = _refined_max(nl_samples, w, nl_vals)
    nonlinear_ok = bool(siso_d and siso_q and nl_worst < 1.0)

    z_tol = _z_shrink_tolerance(cs, line)

    return StabilityReport(
        siso_ok_d=siso_d,
        siso_ok_q=siso_q,
        decoupling_ok=decoupling,
        magnitude_ok=magnitude,
        eps_inf=eps_inf,
        nonlinear_ok=nonlinear_ok,
        nonlinear_worst=nl_worst,
        nonlinear_worst_omega=nl_w,
        margins_d=m_d,
        margins_q=m_q,
        z_shrink_tolerance=z_tol,
        warnings=list(cs.warnings),
    )


def _eps_samples(cs: ControllerSet, GL: TransferMatrix2, wl: np.ndarray) -> np.ndarray:
    frl = factorize(cs.KL, cs.Ktilde(), GL, omega=wl)
    return frl.eps_profile


def _z_shrink_tolerance(cs: ControllerSet, line: LineParams, kmax: float = 20.0) -> float:
    """Largest factor k such that shrinking the line impedance by k keeps the
    mismatched SISO loops stable (controller frozen at its nominal design)."""

    def stable(k: float) -> bool:
        lk = LineParams(R=line.R / k, L=line.L / k, w0=line.w0)
        GM = cs.KL @ line_tf(lk)
        return is_hurwitz(closed_loop_poles(cs.Kd * GM[0, 0])) and is_hurwitz(
            closed_loop_poles(cs.Kq * GM[1, 1])
        )

    if not stable(1.0):
        return 0.0
    if stable(kmax):
        return kmax
    lo, hi = 1.0, kmax
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.01:
            break
    return lo


# --------------------------------------------------------------------------
# Proposition 4 closed forms


def prop4_checks(phi1: float, phi2: float, line: LineParams) -> dict:
    """Closed-form high-frequency det(Xc) and condition number vs numerics.

    Uses the static row-normalized K_L parameterized by (phi1, phi2).
    """
    if not (0 <= phi1 <= math.pi / 2 and 0 <= phi2 <= math.pi / 2):
        raise ValueError("phi1, phi2 must lie in [0, pi/2]")
    KL = TransferMatrix2(
        [
            [RationalTF.constant(math.cos(phi1)), RationalTF.constant(-math.sin(phi1))],
            [RationalTF.constant(math.sin(phi2)), RationalTF.constant(math.cos(phi2))],
        ]
    )
    GL = line_tf(line)
    GM = KL @ GL

    det_formula = math.cos(phi1 - phi2) / (math.cos(phi1) * math.cos(phi2))
    # lim det(Xc) = lim det(Gamma)^-1 = det(G_M)/det(G~_M) as s -> infinity;
    # the limit is approached first-order in w0/w, so evaluate far out
    w_hi = 1e7 * line.w0
    Gm = GM(1j * w_hi)
    det_numeric = (Gm[0, 0] * Gm[1, 1] - Gm[0, 1] * Gm[1, 0]) / (Gm[0, 0] * Gm[1, 1])
    det_numeric = float(np.real(det_numeric))

    dphi = phi1 - phi2
    s = abs(math.sin(dphi))
    kappa_formula = math.inf if s >= 1.0 else math.sqrt((1 + s) / (1 - s))
    smax, smin = singular_values(GM(0.0))
    kappa_numeric = math.inf if smin == 0 else smax / smin

    return {
        "det_Xc_inf_formula": det_formula,
        "det_Xc_inf_numeric": det_numeric,
        "kappa_formula": kappa_formula,
        "kappa_numeric": kappa_numeric,
    }


# --------------------------------------------------------------------------
# Mode classification and q-axis shaping


@dataclass
class ModeReport:
    mode: str  # GFM / GFL / STATCOM / ESS / intermediate
    integrators: tuple[int, int]
    droop_d: float  # ohm; e'd = dvg / droop_d
    droop_q: float  # ohm*rad/s; e'q = v0*dwg / droop_q
    sync_ok: bool
    Tth_bandwidth: float
    Tth_peak_db: float
    kv: float
    ktheta: float
    norm_kv: float
    norm_ktheta: float

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "integrators": {"d": self.integrators[0], "q": self.integrators[1]},
            "droop_d_ohm": self.droop_d,
            "droop_q_ohm_rad_s": self.droop_q,
            "sync_ok": self.sync_ok,
            "Ttheta_bandwidth_rad_s": self.Tth_bandwidth,
            "Ttheta_peak_db": self.Tth_peak_db,
            "kappa": {"v": self.kv, "theta": self.ktheta},
            "kappa_normalized": {"v": self.norm_kv, "theta": self.norm_ktheta},
        }


def sync_check(cs: ControllerSet) -> tuple[bool, dict]:
    """Structural synchronization condition on the unsimplified K1q/K2q ratio.

    Needs net >= 2 origin zeros in K1q/K2q and >= 1 origin pole in K2q.
    """
    ratio_zeros = cs.K1q.origin_zeros() + cs.K2q.origin_poles()
    ratio_poles = cs.K1q.origin_poles() + cs.K2q.origin_zeros()
    net = ratio_zeros - ratio_poles
    k2_poles = cs.K2q.origin_poles() - cs.K2q.origin_zeros()
    ok = net >= 2 and k2_poles >= 1
    return ok, {
        "ratio_origin_zeros_net": net,
        "K2q_origin_poles_net": k2_poles,
    }


def freq_shape(cs: ControllerSet, GMq: RationalTF | None = None) -> dict:
    """q-axis closed-loop split: T_theta (frequency path) and T_v (voltage path).

    T_theta = G*K2q/(1 + G*(K1q+K2q)); bandwidth is its -3 dB point and M_T
    its peak gain. The identity T_theta + T_v = T~q holds by construction and
    is checked in the tests.
    """
    p = cs.params
    if GMq is None:
        GMq = RationalTF([p.wm / p.line.Z], [p.wm, 1.0])
    L1 = cs.K1q * GMq
    L2 = cs.K2q * GMq
    den = 1 + L1 + L2
    Tth = L2 / den
    Tv = L1 / den
    wj_hint = max(p.inertia_bandwidth(), 1e-2)
    w = np.logspace(math.log10(wj_hint) - 2.5, math.log10(wj_hint) + 2.5, 6000)
    m = np.abs(Tth.freqresp(w))
    peak_db = 20.0 * math.log10(float(m.max()))
    thr = 2.0**-0.5
    idx = np.flatnonzero((m[:-1] >= thr) & (m[1:] < thr))
    if len(idx):
        k = idx[0]
        # log-linear interpolation of the crossing
        f = (math.log(thr) - math.log(m[k])) / (math.log(m[k + 1]) - math.log(m[k]))
        bw = float(np.exp(np.log(w[k]) + f * (np.log(w[k + 1]) - np.log(w[k]))))
    else:
        bw = math.nan
    return {
        "T_theta": Tth,
        "T_v": Tv,
        "bandwidth": bw,
        "M_T_db": peak_db,
    }


def classify_mode(cs: ControllerSet, intermediate_threshold: float = 1e-2) -> ModeReport:
    """Mode label from structural integrator counts per the vertex table.

    Small-but-nonzero normalized kappa components (below
    intermediate_threshold) report 'intermediate' instead of forcing a vertex
    label; the normalized coordinates are Z*kv and Z*wJ*ktheta.
    """
    p = cs.params
    n_d, n_q = cs.structural_integrators
    mp = p.mode_point
    Z = p.line.Z
    wj = max(p.inertia_bandwidth(), 1e-6)
    norm_kv = Z * mp.kv
    norm_kth = Z * wj * mp.ktheta
    label = MODE_TABLE.get((n_d, n_q), f"unknown({n_d},{n_q})")
    if (0 < norm_kv < intermediate_threshold) or (0 < norm_kth < intermediate_threshold):
        label = "intermediate"
    shape = freq_shape(cs)
    ok, _ = sync_check(cs)
    return ModeReport(
        mode=label,
        integrators=(n_d, n_q),
        droop_d=cs.droop_d(),
        droop_q=cs.droop_q(),
        sync_ok=ok,
        Tth_bandwidth=shape["bandwidth"],
        Tth_peak_db=shape["M_T_db"],
        kv=mp.kv,
        ktheta=mp.ktheta,
        norm_kv=norm_kv,
        norm_ktheta=norm_kth,
    )


def sharing_ratios(designs: list[ControllerSet]) -> dict:
    """Pairwise steady-state sharing predictions for a set of GFM designs.

    ratio_d[i][j] = predicted e'd_i / e'd_j = droop_d_j / droop_d_i, same for
    the q axis; weights are the normalized inverse droops.
    """
    if len(designs) < 2:
        raise ValueError("need at least two designs")
    for k, cs in enumerate(designs):
        if cs.structural_integrators != (0, 1):
            raise ValueError(f"design {k} is not GFM-classified")
    dd = np.array([cs.droop_d() for cs in designs])
    dq = np.array([cs.droop_q() for cs in designs])
    ratio_d = dd[None, :] / dd[:, None]
    ratio_q = dq[None, :] / dq[:, None]
    wd = (1.0 / dd) / np.sum(1.0 / dd)
    wq = (1.0 / dq) / np.sum(1.0 / dq)
    return {
        "droop_d": dd.tolist(),
        "droop_q": dq.tolist(),
        "ratio_d": ratio_d.tolist(),
        "ratio_q": ratio_q.tolist(),
        "weights_d": wd.tolist(),
        "weights_q": wq.tolist(),
    }
