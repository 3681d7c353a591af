"""Controller factory for the multi-mode inverter framework.

Builds the plant-shaping matrix K_L, the diagonal controllers K^d and
K^q = K_1^q + K_2^q factor by factor, the optional proportional-resonant
augmentations, and the cascaded inner/outer-loop realization (K_inv, K_c,
K_v, K_i). The operating mode lives in the pair kappa = (kappa_v,
kappa_theta) = (beta_v/alpha_v, beta_theta/alpha_theta); a zero component
inserts a literal integrator into the corresponding axis controller.

Structural integrator counts are recorded at synthesis time from the
literal 1/s factors, never recovered from cancelled polynomials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .plant import InverterParams, LineParams
from .tf import Polynomial, RationalTF, TransferMatrix2

__all__ = [
    "SynthParams",
    "ModePoint",
    "ControllerSet",
    "CascadeRealization",
    "SplitNotApplicableError",
    "make_KL",
    "modified_plant",
    "make_controllers",
    "make_PR",
    "inertia_to_wtheta",
    "wtheta_for_inertia",
    "apply_mode_point",
    "vsi_point",
    "split_cascade",
    "default_params",
]

SQRT2 = math.sqrt(2.0)


class SplitNotApplicableError(Exception):
    """Controller shape does not match the synthesis template."""


@dataclass(frozen=True)
class ModePoint:
    """Coordinates in the 2D operating-mode continuum.

    kv = beta_v/alpha_v, ktheta = beta_theta/alpha_theta. kv = 0 puts one
    integrator in K^d; ktheta = 0 puts a second integrator in K^q.
    """

    kv: float
    ktheta: float

    def __post_init__(self):
        if self.kv < 0 or self.ktheta < 0:
            raise ValueError("mode-point components must be >= 0")


@dataclass(frozen=True)
class SynthParams:
    """Parameter bundle for one inverter's controller synthesis."""

    line: LineParams
    wm: float = 2 * math.pi * 1000.0  # plant-shaping pole, rad/s
    wd: float = 2 * math.pi * 300.0  # d-axis crossover, rad/s
    wq: float = 2 * math.pi * 300.0  # q-axis crossover, rad/s
    w1: float = 2 * math.pi * 1.5  # band-pass lower corner, rad/s
    w2: float = 2 * math.pi * 15.0  # band-pass upper corner, rad/s
    wtheta: float = 900.0  # synchronization integrator gain, rad/s
    wf: float = 2 * math.pi * 25.0  # frequency low-pass cutoff, rad/s
    a: float = 1.0 / 3.0  # lead-lag shape, shared default
    alpha_v: float = 2 * math.pi * 5.0  # d-axis droop zero, rad/s
    beta_v: float = 66.6  # d-axis droop pole scale, (rad/s)/ohm
    alpha_th: float = 300.0  # q-axis droop zero scale, (rad/s)^2
    beta_th: float = 5.6  # q-axis droop pole scale, (rad/s)/ohm
    k_w0: float = 0.0  # fundamental PR gain (0 disables)
    k_2w0: float = 0.0  # second-harmonic PR gain for fault ride-through
    dw_max: float = 2 * math.pi * 0.5  # frequency deviation bound, rad/s
    shaper: str = "diagonal"  # 'diagonal' or 'triangular' K_L
    a_d: float | None = None  # per-axis lead-lag overrides
    a_q: float | None = None

    def __post_init__(self):
        for name in ("wm", "wd", "wq", "w1", "w2", "wtheta", "wf", "alpha_v", "alpha_th"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.beta_v < 0 or self.beta_th < 0:
            raise ValueError("beta_v and beta_th must be >= 0")
        for name in ("a", "a_d", "a_q"):
            v = getattr(self, name)
            if v is not None and not (0 < v <= 1):
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.shaper not in ("diagonal", "triangular"):
            raise ValueError("shaper must be 'diagonal' or 'triangular'")

    @property
    def ad(self) -> float:
        return self.a if self.a_d is None else self.a_d

    @property
    def aq(self) -> float:
        return self.a if self.a_q is None else self.a_q

    @property
    def mode_point(self) -> ModePoint:
        return ModePoint(self.beta_v / self.alpha_v, self.beta_th / self.alpha_th)

    def separation_warnings(self) -> list[str]:
        """Violated design-separation inequalities (factor-of-5 reading of <<)."""
        out = []
        Z = self.line.Z
        if not self.w1 < self.w2:
            out.append(f"w1 ({self.w1:.3g}) must be below w2 ({self.w2:.3g})")
        if self.w2 > self.wq / 5:
            out.append(f"w2 ({self.w2:.3g}) not well below wq ({self.wq:.3g})")
        lim_d = max(self.alpha_v, 4 * self.ad * Z * self.beta_v / SQRT2)
        if lim_d > self.wd / 5:
            out.append(f"droop corner {lim_d:.3g} not well below wd ({self.wd:.3g})")
        wj = self.inertia_bandwidth()
        lim_q = max(self.alpha_th / self.wtheta, self.beta_th * Z)
        if lim_q > wj / 5:
            out.append(f"q droop corner {lim_q:.3g} not well below wJ ({wj:.3g})")
        if wj > self.wf:
            out.append(f"wJ ({wj:.3g}) above frequency low-pass wf ({self.wf:.3g})")
        return out

    def inertia_bandwidth(self) -> float:
        """wJ implied by wtheta (inverse of the wtheta sizing rule)."""
        return self.wtheta * self.aq * self.w2 / self.wq


def default_params(line: LineParams, **overrides) -> SynthParams:
    return replace(SynthParams(line=line), **overrides)


# --------------------------------------------------------------------------
# plant shaping


def make_KL(line: LineParams, wm: float, kind: str = "diagonal") -> TransferMatrix2:
    """Plant-shaping transfer matrix.

    'diagonal' makes K_L*G_L = (wm/Z)/(s+wm) * I2 (optimal condition number);
    'triangular' trades condition number for exact active-current sharing,
    producing a lower-triangular modified plant.
    """
    Z, L, lam, w0 = line.Z, line.L, line.lam, line.w0
    cphi, sphi = line.R / Z, L * w0 / Z
    pole = Polynomial([wm, 1.0])
    top_d = RationalTF([wm * cphi, wm * L / Z], pole)
    top_q = RationalTF([-wm * sphi], pole)
    if kind == "diagonal":
        return TransferMatrix2([[top_d, top_q], [-top_q, top_d]])
    if kind == "triangular":
        d = lam * lam + w0 * w0
        bot_d = RationalTF([wm, wm * lam / d], pole)
        bot_q = RationalTF([0.0, wm * w0 / d], pole)
        return TransferMatrix2([[top_d, top_q], [bot_d, bot_q]])
    raise ValueError("kind must be 'diagonal' or 'triangular'")


def modified_plant(KL: TransferMatrix2, GL: TransferMatrix2) -> TransferMatrix2:
    return KL @ GL


# --------------------------------------------------------------------------
# controller construction


def _f1(zero: float, pole: float) -> RationalTF:
    """(s + zero)/(s + pole); pole may be exactly 0 (structural integrator)."""
    return RationalTF([zero, 1.0], [pole, 1.0])


def make_PR(k: float, dw_max: float, w0: float, harmonic: int = 1) -> RationalTF:
    """Proportional-resonant section 1 + k*(2*zeta*wr*s)/(s^2 + 2*zeta*wr*s + wr^2).

    Resonance at harmonic*w0 with zeta = dw_max/w0, so the notch width tracks
    the expected frequency-deviation band at any harmonic.
    """
    if k < 0:
        raise ValueError("PR gain must be >= 0")
    if harmonic < 1:
        raise ValueError("harmonic must be >= 1")
    if k == 0:
        return RationalTF([1.0], [1.0])
    zeta = dw_max / w0
    wr = harmonic * w0
    den = Polynomial([wr * wr, 2 * zeta * wr, 1.0])
    return RationalTF([1.0], [1.0]) + RationalTF([0.0, k * 2 * zeta * wr], den)


@dataclass
class ControllerSet:
    """Realized controllers for one inverter (PR folded into Kd and K1q)."""

    KL: TransferMatrix2
    Kd: RationalTF
    K1q: RationalTF
    K2q: RationalTF
    K_PR_d: RationalTF | None
    K_PR_q: RationalTF | None
    structural_integrators: tuple[int, int]
    params: SynthParams
    warnings: list[str] = field(default_factory=list)

    @property
    def Kq(self) -> RationalTF:
        return self.K1q + self.K2q

    def Ktilde(self) -> TransferMatrix2:
        return TransferMatrix2.diag(self.Kd, self.Kq)

    def K(self) -> TransferMatrix2:
        return self.Ktilde() @ self.KL

    def droop_d(self) -> float:
        """Predicted DC voltage droop G_M^-1(0) + K^d(0), ohm (inf for GFL axis)."""
        p = self.params
        if p.beta_v == 0.0:
            return math.inf
        return p.line.Z + p.alpha_v / p.beta_v

    def droop_q(self) -> float:
        """Predicted frequency droop lim s*K^q(s), ohm*rad/s (inf with 2 integrators)."""
        p = self.params
        if p.beta_th == 0.0:
            return math.inf
        return p.alpha_th / p.beta_th


def make_controllers(p: SynthParams) -> ControllerSet:
    """Literal factor-by-factor construction of the controller family.

    Emits warnings (without failing) when the separation inequalities that
    justify the closed-form droop/margin formulas are violated.
    """
    warns = p.separation_warnings()
    for w in warns:
        warnings.warn(w, stacklevel=2)

    Z = p.line.Z
    pre = RationalTF([p.wm, 1.0], [p.wm / Z])  # (s+wm)/(wm/Z)

    lpf_d = RationalTF([SQRT2 * p.wd], [p.wd, 1.0])
    lead_d = RationalTF([p.ad * p.wd, 1.0], [p.wd, p.ad])
    droop_d = _f1(p.alpha_v, 2 * SQRT2 * (p.ad * Z) * p.beta_v)
    Kd = pre * droop_d * lpf_d * lpf_d * lpf_d * lead_d

    bp = RationalTF(
        [0.0, math.hypot(p.wq, p.w2)],
        Polynomial([p.w1, 1.0]) * Polynomial([p.w2, 1.0]),
    )
    lpf_q = RationalTF([SQRT2 * p.wq], [p.wq, 1.0])
    lead_q = RationalTF([p.aq * p.wq, 1.0], [p.wq, p.aq])
    K1q = pre * bp * lpf_q * lpf_q * lead_q

    integ = RationalTF([p.wtheta], [0.0, 1.0])
    droop_q = _f1(p.alpha_th / p.wtheta, p.beta_th * Z)
    freq_lp = RationalTF([p.wf], [p.wf, 1.0])
    K2q = pre * integ * droop_q * freq_lp

    pr_d = pr_q = None
    if p.k_w0 > 0 or p.k_2w0 > 0:
        pr = RationalTF([1.0], [1.0])
        if p.k_w0 > 0:
            pr = pr * make_PR(p.k_w0, p.dw_max, p.line.w0, harmonic=1)
        if p.k_2w0 > 0:
            pr = pr * make_PR(p.k_2w0, p.dw_max, p.line.w0, harmonic=2)
        pr_d = pr_q = pr
        Kd = Kd * pr
        K1q = K1q * pr

    n_d = 1 if p.beta_v == 0.0 else 0
    n_q = 2 if p.beta_th == 0.0 else 1  # K2q always carries wtheta/s

    return ControllerSet(
        KL=make_KL(p.line, p.wm, p.shaper),
        Kd=Kd,
        K1q=K1q,
        K2q=K2q,
        K_PR_d=pr_d,
        K_PR_q=pr_q,
        structural_integrators=(n_d, n_q),
        params=p,
        warnings=warns,
    )


def inertia_to_wtheta(wJ: float, p: SynthParams) -> float:
    """Integrator gain wtheta placing the T_theta bandwidth near wJ.

    Uses the intersection rule wtheta = wq*wJ/(a*w2). Warns (not fatal) when
    wJ falls outside the band-pass passband [w1, w2].
    """
    if wJ <= 0:
        raise ValueError("wJ must be positive")
    if not (p.w1 <= wJ <= p.w2):
        warnings.warn(
            f"wJ={wJ:.3g} outside the K1q passband [{p.w1:.3g}, {p.w2:.3g}]",
            stacklevel=2,
        )
    return p.wq * wJ / (p.aq * p.w2)


def wtheta_for_inertia(p: SynthParams, wJ: float) -> SynthParams:
    """Convenience: return params with wtheta sized for inertial bandwidth wJ."""
    return replace(p, wtheta=inertia_to_wtheta(wJ, p), wf=5.0 * wJ)


def apply_mode_point(p: SynthParams, kappa: ModePoint) -> SynthParams:
    """Move the design to a mode point: beta_v = kv*alpha_v, beta_th = ktheta*alpha_th.

    A component exactly 0 yields a literal origin pole in the corresponding
    controller factor (structural integrator).
    """
    return replace(p, beta_v=kappa.kv * p.alpha_v, beta_th=kappa.ktheta * p.alpha_th)


def vsi_point(p: SynthParams, pole_target: float = 2 * math.pi * 2500.0) -> ModePoint:
    """Large-kappa preset approximating ideal voltage-source operation.

    kappa chosen so the droop poles land at pole_target rad/s: the d droop
    collapses to the bare line impedance and the frequency droop to ~0, i.e.
    stiff voltage and frequency. This is a point on the mode continuum, not a
    separate controller family.
    """
    Z = p.line.Z
    kv = pole_target / (2 * SQRT2 * p.ad * Z * p.alpha_v)
    kth = pole_target / (Z * p.alpha_th)
    return ModePoint(kv, kth)


# --------------------------------------------------------------------------
# cascaded realization


@dataclass
class CascadeRealization:
    """Inner/outer-loop factorization of K^d and K_1^q.

    Kc*Kinv reproduces the synthesized controllers exactly; Kinv (relative
    degree 2) is realized physically by the voltage/current compensators
    Kv and Ki around the LC filter.
    """

    Kinv_d: RationalTF
    Kinv_q: RationalTF
    Kc_d: RationalTF
    Kc_q: RationalTF
    Kv_d: RationalTF
    Kv_q: RationalTF
    Ki_d: RationalTF
    Ki_q: RationalTF
    wc_d: float
    wc_q: float


def _derive_voltage_comp(Ntil: Polynomial, Dtil: Polynomial, wc: float, Ci: float) -> RationalTF:
    """Voltage compensator making G_v*S_v*T_i equal (wc/Ci)*Ntil/Dtil.

    K_v = (Ci/wc) * (Dtil - s(s+wc)Ntil) / Ntil; with wc = sum(poles) -
    sum(zeros) the two highest-order terms cancel exactly.
    """
    s_fac = Polynomial([0.0, wc, 1.0])  # s(s+wc)
    nv = Dtil - s_fac * Ntil
    nv = nv.trim(1e-9)
    if nv.degree > Dtil.degree - 2:
        raise SplitNotApplicableError("K_inv pole/zero sums inconsistent with wc")
    return RationalTF(nv * (Ci / wc), Ntil)


def split_cascade(cs: ControllerSet, inv: InverterParams, p: SynthParams | None = None) -> CascadeRealization:
    """Divide K^d and K_1^q between the inverter closed loop and a series compensator.

    Kinv takes the slowest zero and the three fastest poles of each axis
    controller; Kc takes the rest (including any PR sections). Verifies the
    product identity Kc*Kinv = K at 20 random frequencies.
    """
    p = cs.params if p is None else p
    Z = p.line.Z
    Ci = inv.Ci
    wc_d = 3.0 * p.wd - p.alpha_v
    wc_q = 2.0 * p.wq + p.w2
    if wc_d <= 0 or wc_q <= 0:
        raise SplitNotApplicableError("nonpositive equivalent inner-loop bandwidth")

    pole_d = Polynomial([p.wd, 1.0])
    Dtil_d = pole_d * pole_d * pole_d
    Ntil_d = Polynomial([p.alpha_v, 1.0])
    Kinv_d = RationalTF(Ntil_d * (wc_d / Ci), Dtil_d)

    Dtil_q = Polynomial([p.w2, 1.0]) * Polynomial([p.wq, 1.0]) * Polynomial([p.wq, 1.0])
    Ntil_q = Polynomial([0.0, 1.0])
    Kinv_q = RationalTF(Ntil_q * (wc_q / Ci), Dtil_q)

    gd = 2 * SQRT2 * p.wd**3 / (p.wm / Z)
    Kc_d = (
        RationalTF([gd * Ci / wc_d], [1.0])
        * _f1(p.wm, 2 * SQRT2 * (p.ad * Z) * p.beta_v)
        * RationalTF([p.ad * p.wd, 1.0], [p.wd, p.ad])
    )
    gq = 2 * p.wq**2 * math.hypot(p.wq, p.w2) / (p.wm / Z)
    Kc_q = (
        RationalTF([gq * Ci / wc_q], [1.0])
        * _f1(p.wm, p.w1)
        * RationalTF([p.aq * p.wq, 1.0], [p.wq, p.aq])
    )
    if cs.K_PR_d is not None:
        Kc_d = Kc_d * cs.K_PR_d
    if cs.K_PR_q is not None:
        Kc_q = Kc_q * cs.K_PR_q

    Kv_d = _derive_voltage_comp(Ntil_d, Dtil_d, wc_d, Ci)
    Kv_q = _derive_voltage_comp(Ntil_q, Dtil_q, wc_q, Ci)
    Ki_d = RationalTF([wc_d * inv.Ri, wc_d * inv.Li], [0.0, 1.0])
    Ki_q = RationalTF([wc_q * inv.Ri, wc_q * inv.Li], [0.0, 1.0])

    # factorization identity check at random frequencies
    rng = np.random.default_rng(0)
    w = 10.0 ** rng.uniform(-1, 5, 20)
    for prod, ref in ((Kc_d * Kinv_d, cs.Kd), (Kc_q * Kinv_q, cs.K1q)):
        a = prod.freqresp(w)
        b = ref.freqresp(w)
        if np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-30)) > 1e-8:
            raise SplitNotApplicableError("controller does not match the synthesis template")

    return CascadeRealization(
        Kinv_d=Kinv_d,
        Kinv_q=Kinv_q,
        Kc_d=Kc_d,
        Kc_q=Kc_q,
        Kv_d=Kv_d,
        Kv_q=Kv_q,
        Ki_d=Ki_d,
        Ki_q=Ki_q,
        wc_d=wc_d,
        wc_q=wc_q,
    )
