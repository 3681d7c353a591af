"""Nonlinear time-domain multi-inverter simulator.

Physics integrates the full dq LC-filter and RL-line dynamics of N
inverters in one global frame rotating at the nominal w0 (RK4, default 2 us
step); each inverter's discrete controller cascade runs at Ts = 20 us with
zero-order-hold modulation. The PCC bus is a stiff grid source behind a
breaker or, when islanded, an algebraic resistive-load KCL solve inside
every integration stage.

Events split the run into constant-configuration segments handled by the
numba kernel; (kappa_v, kappa_theta) mode ramps are piecewise-linear plans
applied inside the kernel with per-step controller re-discretization and
canonical state carry-over.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel as _k
from ._kernel import BUS_CHANNELS, NCH, REC_CHANNELS
from .plant import InverterParams, LineParams
from .synth import ControllerSet, ModePoint, SynthParams, make_controllers, split_cascade
from .tf import StateSpace, discretize

__all__ = [
    "SimDivergenceError",
    "GridConfig",
    "SimInverter",
    "NetworkConfig",
    "SimEvent",
    "SolverConfig",
    "SimResult",
    "Simulator",
    "spectral_extract",
    "transient_energy",
    "mode_ramp_guard",
]

EVENT_KINDS = (
    "grid_voltage_step",
    "grid_freq_step",
    "grid_freq_ramp",
    "islanding",
    "reconnect",
    "load_step",
    "l2g_fault",
    "setpoint_step",
    "mode_ramp",
)


class SimDivergenceError(RuntimeError):
    def __init__(self, t: float, context: str):
        super().__init__(f"numerical divergence at t={t:.6f} s ({context})")
        self.t = t
        self.context = context


@dataclass
class GridConfig:
    v_mag: float  # peak source voltage, V
    dw0: float = 0.0  # initial frequency offset, rad/s
    connected: bool = True


@dataclass
class SimInverter:
    name: str
    inv: InverterParams
    synth: SynthParams
    setpoint_kind: str = "current"  # 'current' (A) or 'pq' (W, var)
    setpoint: tuple[float, float] = (0.0, 0.0)
    schedule: list[tuple[float, float, float, float]] = field(default_factory=list)
    # schedule rows: (t_start, kappa_v_target, kappa_theta_target, ramp_s)
    line_true: LineParams | None = None  # physical line when it differs from the design line

    @property
    def line(self) -> LineParams:
        return self.line_true if self.line_true is not None else self.synth.line


@dataclass
class NetworkConfig:
    grid: GridConfig
    inverters: list[SimInverter]
    load_R: float | None = None  # PCC resistive load, ohm

    def validate(self):
        if not self.inverters:
            raise ValueError("network needs at least one inverter")
        if not self.grid.connected and self.load_R is None:
            raise ValueError("islanded network without a load is unsolvable")
        if self.load_R is not None and self.load_R <= 0:
            raise ValueError("load_R must be positive")


@dataclass
class SimEvent:
    t: float
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass
class SolverConfig:
    duration: float
    physics_dt: float = 2e-6
    control_ts: float = 2e-5
    decimation: int = 10  # record every N control steps
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0 or self.physics_dt <= 0 or self.control_ts <= 0:
            raise ValueError("duration and steps must be positive")
        n = self.control_ts / self.physics_dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("control_ts must be an integer multiple of physics_dt")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")

    @property
    def n_sub(self) -> int:
        return int(round(self.control_ts / self.physics_dt))


@dataclass
class SimResult:
    t: np.ndarray
    inv: np.ndarray  # (n_samples, N, NCH)
    bus: np.ndarray  # (n_samples, NBUS)
    names: list[str]
    v0: np.ndarray
    rating: np.ndarray
    w0: float
    control_ts: float
    decimation: int
    events_applied: list[dict] = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def sample_rate(self) -> float:
        return 1.0 / (self.control_ts * self.decimation)

    def channel(self, name: str, inverter=0) -> np.ndarray:
        if name in BUS_CHANNELS:
            return self.bus[:, BUS_CHANNELS.index(name)]
        idx = inverter if isinstance(inverter, int) else self.names.index(inverter)
        return self.inv[:, idx, REC_CHANNELS.index(name)]

    def channel_pu(self, name: str, inverter=0) -> np.ndarray:
        """Current channels in rating base, voltage channels in v0 base."""
        idx = inverter if isinstance(inverter, int) else self.names.index(inverter)
        x = self.channel(name, idx)
        if name.startswith(("ig", "m")):
            return x / self.rating[idx]
        if name.startswith(("vc", "u_theta")):
            return x / self.v0[idx]
        if name in ("P", "Q"):
            return x / (1.5 * self.v0[idx] * self.rating[idx])
        return x

    def steady_mean(self, name: str, inverter=0, tail: float = 0.1) -> float:
        """Mean of the trailing `tail` seconds of a channel."""
        x = self.channel(name, inverter)
        n = max(1, int(tail * self.sample_rate))
        return float(np.mean(x[-n:]))


# --------------------------------------------------------------------------
# discrete controller bank construction


def _kl_discrete(cs: ControllerSet, Ts: float):
    """Exact 2-state realization of K_L, Tustin-discretized."""
    p = cs.params
    line = p.line
    Z, L, w0, lam = line.Z, line.L, line.w0, line.lam
    cphi, sphi = line.R / Z, L * w0 / Z
    M0 = np.array([[cphi, -sphi], [sphi, cphi]])
    M1 = np.array([[L / Z, 0.0], [0.0, L / Z]])
    if p.shaper == "triangular":
        d = lam * lam + w0 * w0
        M0 = np.array([[cphi, -sphi], [1.0, 0.0]])
        M1 = np.array([[L / Z, 0.0], [lam / d, w0 / d]])
    wm = p.wm
    A = -wm * np.eye(2)
    B = np.eye(2)
    C = wm * (M0 - wm * M1)
    D = wm * M1
    ss = discretize(StateSpace(A, B, C, D), Ts)
    return ss.A, ss.B, ss.C, ss.D


def _pr_biquad(k: float, dw_max: float, w0: float, harmonic: int, Ts: float):
    """Discrete (A,B,C,D) of one PR section, prewarped at its resonance."""
    A = np.zeros((2, 2))
    B = np.zeros(2)
    C = np.zeros(2)
    if k <= 0:
        return A, B, C, 1.0
    zeta = dw_max / w0
    wr = harmonic * w0
    alpha = math.tan(wr * Ts / 2.0) / wr
    b = np.array([wr * wr, 2 * zeta * wr * (1.0 + k), 1.0])
    a = np.array([wr * wr, 2 * zeta * wr])
    D = _k.bilin2(b[0], b[1], b[2], a[0], a[1], alpha, A, B, C)
    return A, B, C, float(D)


class Simulator:
    """Packs a network into kernel arrays and drives segment execution."""

    def __init__(self, network: NetworkConfig, solver: SolverConfig):
        network.validate()
        self.network = network
        self.solver = solver
        n = len(network.inverters)
        self.n = n
        Ts = solver.control_ts
        self.Ts = Ts
        self.alpha = Ts / 2.0

        w0s = {u.line.w0 for u in network.inverters}
        if len(w0s) != 1:
            raise ValueError("all inverters must share the nominal frequency")
        self.w0 = w0s.pop()

        g = lambda f: np.array([f(u) for u in network.inverters], dtype=float)
        self.Rl = g(lambda u: u.line.R)
        self.Ll = g(lambda u: u.line.L)
        self.Li = g(lambda u: u.inv.Li)
        self.Ri = g(lambda u: u.inv.Ri)
        self.Ci = g(lambda u: u.inv.Ci)
        self.vdc = g(lambda u: u.inv.vdc)
        self.v0 = g(lambda u: u.inv.v0)
        self.rating = g(lambda u: u.inv.rating)
        self.dwmax = g(lambda u: u.synth.dw_max)
        self.div_limit = np.maximum(self.rating, self.v0) * 1e6

        self.names = [u.name for u in network.inverters]
        self.csets = [make_controllers(u.synth) for u in network.inverters]
        self.cascades = [
            split_cascade(cs, u.inv) for cs, u in zip(self.csets, network.inverters)
        ]

        self._build_blocks()
        self._build_schedules()
        self._init_states()
        self._init_setpoints()

    # -- construction ------------------------------------------------------

    def _build_blocks(self):
        n, Ts = self.n, self.Ts
        self.Akl = np.zeros((n, 2, 2))
        self.Bkl = np.zeros((n, 2, 2))
        self.Ckl = np.zeros((n, 2, 2))
        self.Dkl = np.zeros((n, 2, 2))
        self.A2 = np.zeros((n, _k.N2BLK, 2, 2))
        self.B2 = np.zeros((n, _k.N2BLK, 2))
        self.C2 = np.zeros((n, _k.N2BLK, 2))
        self.D2 = np.zeros((n, _k.N2BLK))
        self.A1 = np.zeros((n, _k.N1BLK))
        self.B1 = np.zeros((n, _k.N1BLK))
        self.C1 = np.zeros((n, _k.N1BLK))
        self.D1 = np.zeros((n, _k.N1BLK))
        self.kcd_b = np.zeros((n, 3))
        self.kcd_p2 = np.zeros(n)
        self.kcd_cv = np.zeros(n)
        self.w_b = np.zeros((n, 3))
        self.w_pf = np.zeros(n)
        self.w_cth = np.zeros(n)
        self.kv_cur = np.zeros(n)
        self.kth_cur = np.zeros(n)

        for i, (u, cr) in enumerate(zip(self.network.inverters, self.cascades)):
            p = u.synth
            Z = p.line.Z
            cs = self.csets[i]
            self.Akl[i], self.Bkl[i], self.Ckl[i], self.Dkl[i] = _kl_discrete(cs, Ts)

            for slot, harm, gain in (
                (_k.PRD1, 1, p.k_w0),
                (_k.PRD2, 2, p.k_2w0),
                (_k.PRQ1, 1, p.k_w0),
                (_k.PRQ2, 2, p.k_2w0),
            ):
                A, B, C, D = _pr_biquad(gain, p.dw_max, p.line.w0, harm, Ts)
                self.A2[i, slot] = A
                self.B2[i, slot] = B
                self.C2[i, slot] = C
                self.D2[i, slot] = D

            # K_c^d: kappa_v-dependent pole, regenerated in the kernel
            gd_ci = (2 * math.sqrt(2) * p.wd**3 * Z / p.wm) * (u.inv.Ci / cr.wc_d)
            self.kcd_b[i] = (gd_ci / p.ad) * np.array(
                [p.wm * p.ad * p.wd, p.wm + p.ad * p.wd, 1.0]
            )
            self.kcd_p2[i] = p.wd / p.ad
            self.kcd_cv[i] = 2 * math.sqrt(2) * p.ad * Z * p.alpha_v
            kv0 = p.beta_v / p.alpha_v
            p1 = self.kcd_cv[i] * kv0
            self.D2[i, _k.KCD] = _k.bilin2(
                self.kcd_b[i, 0], self.kcd_b[i, 1], self.kcd_b[i, 2],
                p1 * self.kcd_p2[i], p1 + self.kcd_p2[i], self.alpha,
                self.A2[i, _k.KCD], self.B2[i, _k.KCD], self.C2[i, _k.KCD],
            )
            self.kv_cur[i] = kv0

            # K_c^q: fixed biquad
            gq_ci = (2 * p.wq**2 * math.hypot(p.wq, p.w2) * Z / p.wm) * (
                u.inv.Ci / cr.wc_q
            )
            bq = (gq_ci / p.aq) * np.array([p.wm * p.aq * p.wq, p.wm + p.aq * p.wq, 1.0])
            self.D2[i, _k.KCQ] = _k.bilin2(
                bq[0], bq[1], bq[2],
                p.w1 * p.wq / p.aq, p.w1 + p.wq / p.aq, self.alpha,
                self.A2[i, _k.KCQ], self.B2[i, _k.KCQ], self.C2[i, _k.KCQ],
            )

            # W = s*K2q: kappa_theta-dependent pole
            gw = Z * p.wtheta * p.wf / p.wm
            self.w_b[i] = gw * np.array(
                [p.wm * p.alpha_th / p.wtheta, p.wm + p.alpha_th / p.wtheta, 1.0]
            )
            self.w_pf[i] = p.wf
            self.w_cth[i] = Z * p.alpha_th
            kth0 = p.beta_th / p.alpha_th
            p1 = self.w_cth[i] * kth0
            self.D2[i, _k.WBLK] = _k.bilin2(
                self.w_b[i, 0], self.w_b[i, 1], self.w_b[i, 2],
                p1 * self.w_pf[i], p1 + self.w_pf[i], self.alpha,
                self.A2[i, _k.WBLK], self.B2[i, _k.WBLK], self.C2[i, _k.WBLK],
            )
            self.kth_cur[i] = kth0

            # first-order bank from the cascade realization
            Ci = u.inv.Ci
            wc_d, wc_q = cr.wc_d, cr.wc_q
            rows = (
                (_k.KVD, Ci * p.wd**3 / wc_d, Ci * (3 * p.wd**2 - wc_d * p.alpha_v) / wc_d, p.alpha_v),
                (_k.KVQ, Ci * p.w2 * p.wq**2 / wc_q, Ci * (p.wq**2 + 2 * p.w2 * p.wq) / wc_q, 0.0),
                (_k.KID, wc_d * u.inv.Ri, wc_d * u.inv.Li, 0.0),
                (_k.KIQ, wc_q * u.inv.Ri, wc_q * u.inv.Li, 0.0),
            )
            for slot, b0, b1, a0 in rows:
                ad, bd, cd, dd = _k.bilin1(b0, b1, a0, self.alpha)
                self.A1[i, slot] = ad
                self.B1[i, slot] = bd
                self.C1[i, slot] = cd
                self.D1[i, slot] = dd

    def _build_schedules(self, extra: list[tuple[int, float, float, float, float]] = ()):
        """Compile per-inverter kappa(t) piecewise-linear knot plans."""
        rows_per_inv = [[] for _ in range(self.n)]
        for i, u in enumerate(self.network.inverters):
            for (t, kv, kth, ramp) in u.schedule:
                rows_per_inv[i].append((t, kv, kth, max(ramp, 0.0)))
        for (i, t, kv, kth, ramp) in extra:
            rows_per_inv[i].append((t, kv, kth, max(ramp, 0.0)))

        knots = []
        for i, rows in enumerate(rows_per_inv):
            rows.sort()
            p = self.network.inverters[i].synth
            kv, kth = p.beta_v / p.alpha_v, p.beta_th / p.alpha_th
            pts = [(0.0, kv, kth)]
            for (t, kvt, ktht, ramp) in rows:
                pts.append((t, pts[-1][1], pts[-1][2]))
                pts.append((t + max(ramp, 1e-12), kvt, ktht))
            knots.append(pts)
        m = max(len(pts) for pts in knots)
        self.knot_t = np.zeros((self.n, m))
        self.knot_kv = np.zeros((self.n, m))
        self.knot_kth = np.zeros((self.n, m))
        self.knot_n = np.zeros(self.n, dtype=np.int64)
        self.knot_ptr = np.zeros(self.n, dtype=np.int64)
        for i, pts in enumerate(knots):
            self.knot_n[i] = len(pts)
            for j, (t, kv, kth) in enumerate(pts):
                self.knot_t[i, j] = t
                self.knot_kv[i, j] = kv
                self.knot_kth[i, j] = kth

    def _init_states(self):
        n = self.n
        self.y = np.zeros((n, 6))
        grid = self.network.grid
        for i in range(n):
            v0 = self.v0[i]
            self.y[i, 2] = v0  # vc_d
            self.y[i, 0] = 0.0
            self.y[i, 1] = self.Ci[i] * self.w0 * v0  # iL balances capacitor coupling
            if not grid.connected and self.network.load_R:
                self.y[i, 4] = v0 / (self.network.load_R * n)
        self.xkl = np.zeros((n, 2))
        self.x2 = np.zeros((n, _k.N2BLK, 2))
        self.x1 = np.zeros((n, _k.N1BLK))
        self.utheta = np.zeros(n)
        self.wprev = np.zeros(n)
        self.mg = np.zeros((n, 2))
        for i in range(n):
            # start modulation at the open-loop equilibrium value
            vcd, vcq = self.y[i, 2], self.y[i, 3]
            ild, ilq = self.y[i, 0], self.y[i, 1]
            self.mg[i, 0] = (2 / self.vdc[i]) * (vcd + self.Ri[i] * ild - self.Li[i] * self.w0 * ilq)
            self.mg[i, 1] = (2 / self.vdc[i]) * (vcq + self.Ri[i] * ilq + self.Li[i] * self.w0 * ild)
        self.phig = 0.0
        self.dw0 = self.network.grid.dw0
        self.breaker = bool(self.network.grid.connected)
        self.vg_mag = self.network.grid.v_mag
        self.fault_amp = 0.0
        self.rload = self.network.load_R if self.network.load_R else 1.0

    def _init_setpoints(self):
        self.sp_mode = np.zeros(self.n, dtype=np.int64)
        self.sp_a = np.zeros(self.n)
        self.sp_b = np.zeros(self.n)
        for i, u in enumerate(self.network.inverters):
            self.sp_mode[i] = 1 if u.setpoint_kind == "pq" else 0
            self.sp_a[i], self.sp_b[i] = u.setpoint

    # -- execution ---------------------------------------------------------

    def run(self, events: list[SimEvent] | None = None) -> SimResult:
        events = sorted(events or [], key=lambda e: e.t)
        for e in events:
            if e.t < 0 or e.t > self.solver.duration:
                raise ValueError(f"event at t={e.t} outside run duration")
        t_start = time.time()
        boundaries = self._expand_events(events)

        Ts = self.Ts
        total_steps = int(round(self.solver.duration / Ts))
        dec = self.solver.decimation
        nsamp = total_steps // dec + 2
        rec_t = np.zeros(nsamp)
        rec_inv = np.zeros((nsamp, self.n, NCH))
        rec_bus = np.zeros((nsamp, len(BUS_CHANNELS)))

        applied = []
        step = 0
        nrec = 0
        seg_t0 = 0.0
        dw_rate = 0.0
        for (t_end, actions) in boundaries + [(self.solver.duration, [])]:
            seg_steps = int(round(t_end / Ts)) - step
            if seg_steps > 0:
                status, done, nrec = _k.run_segment(
                    step * Ts, seg_steps, Ts, self.solver.physics_dt,
                    self.solver.n_sub,
                    self.Rl, self.Ll, self.Li, self.Ri, self.Ci, self.vdc,
                    self.v0, self.w0,
                    self.breaker, self.vg_mag, self.dw0, dw_rate,
                    self.fault_amp, self.rload, self.phig, seg_t0,
                    self.sp_mode, self.sp_a, self.sp_b,
                    self.y, self.xkl, self.x2, self.x1, self.utheta, self.wprev,
                    self.Akl, self.Bkl, self.Ckl, self.Dkl,
                    self.A2, self.B2, self.C2, self.D2,
                    self.A1, self.B1, self.C1, self.D1,
                    self.kcd_b, self.kcd_p2, self.kcd_cv,
                    self.w_b, self.w_pf, self.w_cth, self.alpha,
                    self.knot_t, self.knot_kv, self.knot_kth, self.knot_n,
                    self.knot_ptr, self.kv_cur, self.kth_cur,
                    self.dwmax, self.div_limit,
                    dec, rec_t, rec_inv, rec_bus, nrec, step, self.mg,
                )
                if status != 0:
                    t_div = (step + done) * Ts
                    ctx = applied[-1]["kind"] if applied else "initial transient"
                    raise SimDivergenceError(t_div, f"after event {ctx}")
                step += seg_steps
            # advance grid phase to the boundary and apply actions
            tau = step * Ts - seg_t0
            self.phig += self.dw0 * tau + 0.5 * dw_rate * tau * tau
            self.dw0 += dw_rate * tau
            seg_t0 = step * Ts
            dw_rate = 0.0
            for act in actions:
                dw_rate = self._apply(act, dw_rate)
                applied.append({"t": step * Ts, "kind": act.kind, **act.params})

        return SimResult(
            t=rec_t[:nrec].copy(),
            inv=rec_inv[:nrec].copy(),
            bus=rec_bus[:nrec].copy(),
            names=list(self.names),
            v0=self.v0.copy(),
            rating=self.rating.copy(),
            w0=self.w0,
            control_ts=Ts,
            decimation=dec,
            events_applied=applied,
            wall_clock_s=time.time() - t_start,
        )

    def _expand_events(self, events: list[SimEvent]):
        """Group events by time; split ramp/fault ends into extra boundaries."""
        ramps = []
        grouped: dict[float, list[SimEvent]] = {}
        for e in events:
            if e.kind == "mode_ramp":
                idx = self._inv_index(e.params["inverter"])
                ramps.append(
                    (idx, e.t, e.params["kappa_v"], e.params["kappa_theta"],
                     e.params.get("ramp", 0.0))
                )
                continue
            grouped.setdefault(e.t, []).append(e)
            if e.kind == "l2g_fault" and "duration" in e.params:
                end = e.t + e.params["duration"]
                grouped.setdefault(end, []).append(
                    SimEvent(end, "l2g_fault", {"depth": 0.0})
                )
            if e.kind == "grid_freq_ramp":
                end = e.t + e.params["duration"]
                grouped.setdefault(end, []).append(SimEvent(end, "grid_freq_ramp", {"rate": 0.0, "duration": 0.0}))
        if ramps:
            self._build_schedules(extra=ramps)
        return [(t, grouped[t]) for t in sorted(grouped)]

    def _inv_index(self, ref) -> int:
        if isinstance(ref, int):
            return ref
        return self.names.index(ref)

    def _apply(self, e: SimEvent, dw_rate: float) -> float:
        g = self.network.grid
        if e.kind == "grid_voltage_step":
            self.vg_mag = g.v_mag * (1.0 + e.params["dv_pu"])
        elif e.kind == "grid_freq_step":
            self.dw0 = 2 * math.pi * e.params["df_hz"]
        elif e.kind == "grid_freq_ramp":
            dw_rate = 2 * math.pi * e.params["rate"]
        elif e.kind == "islanding":
            self.breaker = False
        elif e.kind == "reconnect":
            self.breaker = True
        elif e.kind == "load_step":
            base = self.network.load_R
            if base is None:
                raise ValueError("load_step without a configured load")
            self.rload = base / e.params["factor"]
        elif e.kind == "l2g_fault":
            depth = e.params["depth"]
            # single-phase-to-ground symmetric components: positive sequence
            # keeps (1 - depth/3), a negative sequence of depth/3 appears at
            # 2*w0 in the synchronous frame
            self.vg_mag = self.network.grid.v_mag * (1.0 - depth / 3.0)
            self.fault_amp = self.network.grid.v_mag * depth / 3.0
        elif e.kind == "setpoint_step":
            i = self._inv_index(e.params["inverter"])
            self.sp_mode[i] = 1 if e.params.get("kind", "current") == "pq" else 0
            self.sp_a[i] = e.params["a"]
            self.sp_b[i] = e.params["b"]
        return dw_rate


# --------------------------------------------------------------------------
# post-processing


def spectral_extract(series: np.ndarray, fs: float, f: float, window: float) -> np.ndarray:
    """Sliding single-bin DFT magnitude of `series` at frequency f (Hz).

    The window is rounded to a whole number of cycles of f to kill conjugate
    leakage. Needs window >= 3/f.
    """
    if f <= 0:
        raise ValueError("f must be positive")
    if window < 3.0 / f:
        raise ValueError("window must span at least 3 cycles of f")
    n_cyc = math.floor(window * f)
    nw = max(2, int(round(n_cyc * fs / f)))
    t = np.arange(len(series)) / fs
    z = series * np.exp(-2j * math.pi * f * t)
    kern = np.ones(nw) / nw
    zm = np.convolve(z, kern, mode="same")
    return 2.0 * np.abs(zm)


def transient_energy(
    res: SimResult,
    t_from: float,
    t_to: float,
    inverter: int = 0,
    settle_tail: float = 0.1,
) -> float:
    """Integral of the squared per-unit state deviation from the final value.

    Channels: grid current dq (rating base), capacitor voltage dq (v0 base),
    and frequency deviation (1 Hz base). The reference is the mean over the
    trailing `settle_tail` fraction of the window, so a ramp that tracks its
    quasi-static path accumulates little energy.
    """
    t = res.t
    sel = (t >= t_from) & (t <= t_to)
    if not np.any(sel):
        raise ValueError("empty window")
    dt = 1.0 / res.sample_rate
    chans = []
    for name in ("ig_d", "ig_q"):
        chans.append(res.channel_pu(name, inverter))
    for name in ("vc_d", "vc_q"):
        chans.append(res.channel_pu(name, inverter))
    chans.append((res.channel("theta_dot", inverter) - res.w0) / (2 * math.pi))
    e = 0.0
    ntail = max(1, int(settle_tail * np.sum(sel)))
    for x in chans:
        xw = x[sel]
        ref = float(np.mean(xw[-ntail:]))
        e += float(np.sum((xw - ref) ** 2) * dt)
    return e


def mode_ramp_guard(
    make_network,
    solver: SolverConfig,
    t_ramp: float,
    kappa_target: ModePoint,
    durations: list[float],
    inverter: int = 0,
    settle: float = 2.0,
) -> dict:
    """Empirical rate-limit study for one mode transition.

    Runs the same transition with each ramp duration, measures the transient
    energy from ramp end over a fixed `settle` window, and reports whether
    the energy is monotone non-increasing as the ramp slows.
    """
    if len(durations) < 2:
        raise ValueError("need at least two ramp durations to compare")
    rows = []
    for dur in durations:
        net = make_network()
        net.inverters[inverter].schedule = list(net.inverters[inverter].schedule) + [
            (t_ramp, kappa_target.kv, kappa_target.ktheta, dur)
        ]
        sim = Simulator(net, solver)
        res = sim.run([])
        e = transient_energy(res, t_ramp + dur, min(t_ramp + dur + settle, solver.duration), inverter)
        rows.append({"ramp_s": dur, "energy": e})
    rows.sort(key=lambda r: r["ramp_s"])
    energies = [r["energy"] for r in rows]
    monotone = all(energies[i + 1] <= energies[i] * 1.0 for i in range(len(energies) - 1))
    return {"per_ramp": rows, "monotone_non_increasing": monotone}
