"""Physical models: RL line dynamics, LC inverter filter, power flow.

Conventions (fixed throughout the toolkit): the d axis aligns with the
inverter capacitor-voltage phasor once synchronized (v_c^q -> 0); the angle
delta is grid phase minus inverter frame phase; current is positive from the
inverter toward the grid bus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tf import Polynomial, RationalTF, TransferMatrix2

__all__ = [
    "LineParams",
    "InverterParams",
    "PowerFlowPoint",
    "line_tf",
    "steady_power_flow",
    "universal_droop",
    "power_to_current",
    "dq_power",
    "PHI_SINGLE",
    "PHI_THREE",
]

# power/current mapping factor: 1 for single-phase, 2/3 for three-phase
PHI_SINGLE = 1.0
PHI_THREE = 2.0 / 3.0


@dataclass(frozen=True)
class LineParams:
    """Series RL line between inverter capacitor and the PCC."""

    R: float  # ohm
    L: float  # henry
    w0: float = 2 * math.pi * 60.0  # rad/s nominal grid frequency

    def __post_init__(self):
        if self.R < 0 or self.L <= 0 or self.w0 <= 0:
            raise ValueError("need R >= 0, L > 0, w0 > 0")

    @property
    def lam(self) -> float:
        """R/L in 1/s."""
        return self.R / self.L

    @property
    def Z(self) -> float:
        """Impedance magnitude at w0."""
        return math.hypot(self.R, self.L * self.w0)

    @property
    def phi_z(self) -> float:
        """Impedance angle in [0, pi/2]."""
        return math.atan2(self.L * self.w0, self.R)


@dataclass(frozen=True)
class InverterParams:
    """LC output filter, DC link, and base quantities of one inverter."""

    Li: float  # filter inductance, H
    Ri: float  # filter resistance, ohm
    Ci: float  # filter capacitance, F
    vdc: float  # DC link voltage, V
    v0: float  # nominal peak d-axis capacitor voltage, V
    wc: float = 2 * math.pi * 900.0  # inner current-loop bandwidth, rad/s
    rating: float = 10.0  # peak current base, A

    def __post_init__(self):
        for name in ("Li", "Ri", "Ci", "vdc", "v0", "wc", "rating"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def s_base(self) -> float:
        """Three-phase apparent-power base (3/2 * v0 * rating)."""
        return 1.5 * self.v0 * self.rating


@dataclass(frozen=True)
class PowerFlowPoint:
    vc_mag: float
    vg_mag: float
    delta: float
    P: float
    Q: float


def line_tf(p: LineParams) -> TransferMatrix2:
    """dq line admittance from (v_c - v_g) to i_g.

    Common denominator L*(s^2 + 2*lam*s + lam^2 + w0^2); equal diagonal
    entries (s + lam), antisymmetric +/- w0 coupling off the diagonal.
    """
    lam, L, w0 = p.lam, p.L, p.w0
    den = Polynomial([L * (lam * lam + w0 * w0), 2.0 * lam * L, L])
    diag = RationalTF([lam, 1.0], den)
    cpl = RationalTF([w0], den)
    return TransferMatrix2([[diag, cpl], [-cpl, diag]])


def steady_power_flow(vc_mag: float, vg_mag: float, delta: float, line: LineParams):
    """Fundamental-frequency steady-state (P, Q) through the line."""
    Z, phi = line.Z, line.phi_z
    a = vc_mag * vg_mag / Z
    b = vg_mag * vg_mag / Z
    common = a * math.cos(delta) - b
    P = common * math.cos(phi) - a * math.sin(phi) * math.sin(delta)
    Q = common * math.sin(phi) + a * math.cos(phi) * math.sin(delta)
    return P, Q


def universal_droop(P, Q, P0, Q0, kP, kQ, phi_z):
    """Rotated droop law mapping power mismatch to (d|v_c|, d_omega).

    Reference implementation for comparison overlays only; the closed loop
    never uses it.
    """
    c, s = math.cos(phi_z), math.sin(phi_z)
    ep, eq = P0 - P, Q0 - Q
    rot_p = c * ep + s * eq
    rot_q = -s * ep + c * eq
    return kP * rot_p, -kQ * rot_q


def power_to_current(P0: float, Q0: float, vc, phases: str = "three"):
    """Current setpoint (i0^d, i0^q) realizing (P0, Q0) at capacitor voltage vc."""
    vd, vq = float(vc[0]), float(vc[1])
    n2 = vd * vd + vq * vq
    if n2 <= 0.0:
        raise ZeroDivisionError("zero capacitor voltage: power mapping degenerate")
    if phases == "three":
        phi = PHI_THREE
    elif phases == "single":
        phi = PHI_SINGLE
    else:
        raise ValueError("phases must be 'single' or 'three'")
    i0d = phi * (vd * P0 + vq * Q0) / n2
    i0q = phi * (vq * P0 - vd * Q0) / n2
    return i0d, i0q


def dq_power(vc, i, phases: str = "three"):
    """(P, Q) from dq voltage and current; inverse of power_to_current."""
    phi = PHI_THREE if phases == "three" else PHI_SINGLE
    vd, vq = float(vc[0]), float(vc[1])
    id_, iq = float(i[0]), float(i[1])
    P = (vd * id_ + vq * iq) / phi
    Q = (vq * id_ - vd * iq) / phi
    return P, Q
