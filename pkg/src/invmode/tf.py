"""Rational transfer-function algebra for the inverter toolkit.

Polynomials are dense real-coefficient arrays in ascending powers of s.
Rational functions never cancel common factors implicitly: coefficient
magnitudes in SI units span many decades, so cancellation is an explicit,
tolerance-controlled operation and structural origin roots (literal zero
leading coefficients) survive all arithmetic.

Provides the 2x2 transfer-matrix algebra, state-space realization,
bilinear discretization, and classical gain/phase margins used by the
synthesis, analysis, and simulation layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Polynomial",
    "RationalTF",
    "TransferMatrix2",
    "StateSpace",
    "MarginReport",
    "TFError",
    "DivideByZeroTF",
    "SingularMatrixError",
    "EvaluationAtPoleError",
    "ImproperTransferFunctionError",
    "BilinearSingularityError",
    "singular_values",
    "count_origin_roots",
    "margins",
    "default_omega_grid",
    "to_state_space",
    "discretize",
]


class TFError(Exception):
    """Base class for transfer-function algebra errors."""


class DivideByZeroTF(TFError):
    pass


class SingularMatrixError(TFError):
    pass


class EvaluationAtPoleError(TFError):
    pass


class ImproperTransferFunctionError(TFError):
    pass


class BilinearSingularityError(TFError):
    pass


# --------------------------------------------------------------------------
# polynomials


class Polynomial:
    """Dense real polynomial, coefficients ascending in s.

    Normalization strips trailing coefficients that are exactly zero, so the
    stored degree is structural. Near-zero trailing coefficients produced by
    floating-point cancellation are only removed by an explicit trim().
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        n = len(c)
        while n > 1 and c[n - 1] == 0.0:
            n -= 1
        self.coeffs = np.array(c[:n])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0

    def scale(self) -> float:
        """Infinity norm of the coefficient vector."""
        return float(np.max(np.abs(self.coeffs)))

    def trim(self, rtol: float = 1e-12) -> "Polynomial":
        """Strip trailing coefficients below rtol * |coeffs|_inf."""
        if self.is_zero():
            return self
        tol = rtol * self.scale()
        c = self.coeffs.copy()
        n = len(c)
        while n > 1 and abs(c[n - 1]) <= tol:
            n -= 1
        return Polynomial(c[:n])

    def __add__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coeffs, other.coeffs
        n = max(len(a), len(b))
        out = np.zeros(n)
        out[: len(a)] += a
        out[: len(b)] += b
        return Polynomial(out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coeffs, other.coeffs
        n = max(len(a), len(b))
        out = np.zeros(n)
        out[: len(a)] += a
        out[: len(b)] -= b
        return Polynomial(out)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            if self.is_zero() or other.is_zero():
                return Polynomial([0.0])
            return Polynomial(np.convolve(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coeffs)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __call__(self, s):
        """Horner evaluation at scalar or array s (real or complex)."""
        s = np.asarray(s, dtype=complex)
        out = np.full(s.shape, complex(self.coeffs[-1]))
        for c in self.coeffs[-2::-1]:
            out = out * s + c
        return out if out.shape else complex(out)

    def roots(self) -> np.ndarray:
        if self.degree < 1:
            return np.array([], dtype=complex)
        return np.roots(self.coeffs[::-1])

    def divmod(self, other: "Polynomial"):
        """Polynomial division: self = q*other + r."""
        if other.is_zero():
            raise ZeroDivisionError("division by zero polynomial")
        q, r = np.polydiv(self.coeffs[::-1], other.coeffs[::-1])
        return Polynomial(q[::-1]), Polynomial(r[::-1])

    @staticmethod
    def from_roots(roots, leading: float = 1.0) -> "Polynomial":
        """Monic-times-leading polynomial from a root list (conjugates assumed paired)."""
        if len(roots) == 0:
            return Polynomial([leading])
        c = np.poly(np.asarray(roots, dtype=complex))
        return Polynomial(np.real(c[::-1]) * leading)

    def __repr__(self):
        return f"Polynomial({list(self.coeffs)})"


def count_origin_roots(p: Polynomial, tol: float = 0.0) -> int:
    """Number of roots of p at the origin.

    Counts literal zero leading (low-order) coefficients, which synthesized
    controllers carry exactly. With tol > 0, additionally counts roots of the
    deflated polynomial with |root| < tol * max(1, largest |root|).
    """
    if p.is_zero():
        raise ValueError("zero polynomial has no defined root count")
    n = 0
    c = p.coeffs
    while n < len(c) - 1 and c[n] == 0.0:
        n += 1
    if tol > 0.0 and len(c) - n > 1:
        r = Polynomial(c[n:]).roots()
        if len(r):
            scale = max(1.0, float(np.max(np.abs(r))))
            n += int(np.sum(np.abs(r) < tol * scale))
    return n


# --------------------------------------------------------------------------
# rational transfer functions


class RationalTF:
    """Scalar rational transfer function num(s)/den(s).

    Arithmetic is exact polynomial arithmetic; common factors are never
    cancelled implicitly (see cancel()).
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den):
        self.num = num if isinstance(num, Polynomial) else Polynomial(num)
        self.den = den if isinstance(den, Polynomial) else Polynomial(den)
        if self.den.is_zero():
            raise DivideByZeroTF("zero denominator polynomial")

    @staticmethod
    def constant(k: float) -> "RationalTF":
        return RationalTF([float(k)], [1.0])

    @staticmethod
    def s() -> "RationalTF":
        return RationalTF([0.0, 1.0], [1.0])

    def __add__(self, other):
        other = _as_tf(other)
        return RationalTF(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tf(other)
        return RationalTF(self.num * other.den - other.num * self.den, self.den * other.den)

    def __rsub__(self, other):
        return _as_tf(other).__sub__(self)

    def __mul__(self, other):
        other = _as_tf(other)
        return RationalTF(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tf(other)
        if other.num.is_zero():
            raise DivideByZeroTF("division by zero transfer function")
        return RationalTF(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        return _as_tf(other).__truediv__(self)

    def __neg__(self):
        return RationalTF(-self.num, self.den)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    @property
    def relative_degree(self) -> int:
        return self.den.degree - self.num.degree

    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    def __call__(self, s):
        """Evaluate at s; raises EvaluationAtPoleError within tolerance of a pole."""
        s = complex(s)
        dv = self.den(s)
        # conditioning scale of the denominator at this |s|
        mag = np.abs(s) ** np.arange(len(self.den.coeffs))
        dscale = float(np.sum(np.abs(self.den.coeffs) * mag))
        if abs(dv) <= 1e-12 * dscale:
            raise EvaluationAtPoleError(f"evaluation at (near) pole s={s}")
        return self.num(s) / dv

    def freqresp(self, omega) -> np.ndarray:
        """Vectorized evaluation at s = j*omega without pole guarding."""
        s = 1j * np.asarray(omega, dtype=float)
        return self.num(s) / self.den(s)

    def poles(self) -> np.ndarray:
        return self.den.roots()

    def zeros(self) -> np.ndarray:
        return self.num.roots()

    def dc_gain(self) -> float:
        return float(np.real(self(0.0)))

    def cancel(self, tol: float = 1e-9) -> "RationalTF":
        """Explicit pole/zero cancellation by root pairing.

        Roots of num and den closer than tol * max(1, |root|) are removed
        pairwise. This is the only place cancellation happens.
        """
        if self.num.is_zero():
            return RationalTF([0.0], [1.0])
        zn = list(self.num.roots())
        zd = list(self.den.roots())
        kn = self.num.coeffs[-1]
        kd = self.den.coeffs[-1]
        keep_n = []
        for r in zn:
            hit = None
            for i, q in enumerate(zd):
                if abs(r - q) <= tol * max(1.0, abs(r), abs(q)):
                    hit = i
                    break
            if hit is None:
                keep_n.append(r)
            else:
                zd.pop(hit)
        return RationalTF(Polynomial.from_roots(keep_n, kn), Polynomial.from_roots(zd, kd))

    def origin_poles(self) -> int:
        return count_origin_roots(self.den)

    def origin_zeros(self) -> int:
        return count_origin_roots(self.num)

    def to_dict(self) -> dict:
        return {"num": list(self.num.coeffs), "den": list(self.den.coeffs)}

    @staticmethod
    def from_dict(d: dict) -> "RationalTF":
        return RationalTF(d["num"], d["den"])

    def __repr__(self):
        return f"RationalTF(num={list(self.num.coeffs)}, den={list(self.den.coeffs)})"


def _as_tf(x) -> RationalTF:
    if isinstance(x, RationalTF):
        return x
    if isinstance(x, Polynomial):
        return RationalTF(x, [1.0])
    return RationalTF.constant(float(x))


def tf_arith(a: RationalTF, b: RationalTF, op: str) -> RationalTF:
    """Dispatch form of the rational arithmetic (add/sub/mul/div)."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown op {op!r}")


# --------------------------------------------------------------------------
# 2x2 transfer matrices


class TransferMatrix2:
    """2x2 matrix of rational transfer functions (continuous-time s)."""

    __slots__ = ("m",)

    def __init__(self, entries):
        self.m = [[_as_tf(entries[i][j]) for j in range(2)] for i in range(2)]

    @staticmethod
    def identity() -> "TransferMatrix2":
        one, zero = RationalTF.constant(1.0), RationalTF.constant(0.0)
        return TransferMatrix2([[one, zero], [zero, one]])

    @staticmethod
    def diag(a, b) -> "TransferMatrix2":
        zero = RationalTF.constant(0.0)
        return TransferMatrix2([[_as_tf(a), zero], [zero, _as_tf(b)]])

    def __getitem__(self, ij):
        return self.m[ij[0]][ij[1]]

    def __matmul__(self, other: "TransferMatrix2") -> "TransferMatrix2":
        a, b = self.m, other.m
        return TransferMatrix2(
            [
                [a[i][0] * b[0][j] + a[i][1] * b[1][j] for j in range(2)]
                for i in range(2)
            ]
        )

    def __add__(self, other: "TransferMatrix2") -> "TransferMatrix2":
        return TransferMatrix2(
            [[self.m[i][j] + other.m[i][j] for j in range(2)] for i in range(2)]
        )

    def __sub__(self, other: "TransferMatrix2") -> "TransferMatrix2":
        return TransferMatrix2(
            [[self.m[i][j] - other.m[i][j] for j in range(2)] for i in range(2)]
        )

    def scaled(self, g) -> "TransferMatrix2":
        g = _as_tf(g)
        return TransferMatrix2([[self.m[i][j] * g for j in range(2)] for i in range(2)])

    def det(self) -> RationalTF:
        return self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]

    def inverse(self) -> "TransferMatrix2":
        """Adjugate-over-determinant inverse; raises on identically singular input."""
        d = self.det()
        # scale the singularity test by the cross products feeding the determinant
        ad = (self.m[0][0] * self.m[1][1]).num.scale()
        bc = (self.m[0][1] * self.m[1][0]).num.scale()
        if d.num.scale() <= 1e-10 * max(ad, bc, 1e-300):
            raise SingularMatrixError("determinant identically zero")
        return TransferMatrix2(
            [
                [self.m[1][1] / d, -self.m[0][1] / d],
                [-self.m[1][0] / d, self.m[0][0] / d],
            ]
        )

    def diagonal(self) -> "TransferMatrix2":
        return TransferMatrix2.diag(self.m[0][0], self.m[1][1])

    def __call__(self, s) -> np.ndarray:
        return np.array([[self.m[i][j](s) for j in range(2)] for i in range(2)])

    def freqresp(self, omega) -> np.ndarray:
        """Stacked response, shape (len(omega), 2, 2)."""
        omega = np.asarray(omega, dtype=float)
        out = np.empty((len(omega), 2, 2), dtype=complex)
        for i in range(2):
            for j in range(2):
                out[:, i, j] = self.m[i][j].freqresp(omega)
        return out

    def is_triangular(self, omega, rtol: float = 1e-9) -> bool:
        """Lower/upper/diagonal structure, judged numerically on a frequency grid."""
        r = self.freqresp(np.asarray(omega, dtype=float))
        smax = np.array([singular_values(r[k])[0] for k in range(r.shape[0])])
        smax = np.where(smax > 0, smax, 1e-300)
        up = np.all(np.abs(r[:, 0, 1]) <= rtol * smax)
        lo = np.all(np.abs(r[:, 1, 0]) <= rtol * smax)
        return bool(up or lo)


def eval_freq(obj, omega: float):
    """Value of a RationalTF or TransferMatrix2 at s = j*omega (pole-guarded)."""
    s = 1j * float(omega)
    if isinstance(obj, TransferMatrix2):
        return np.array([[obj.m[i][j](s) for j in range(2)] for i in range(2)])
    return _as_tf(obj)(s)


def singular_values(m) -> tuple[float, float]:
    """(sigma_max, sigma_min) of a complex 2x2 matrix, closed form via m^H m."""
    m = np.asarray(m, dtype=complex)
    h = m.conj().T @ m
    t = float(np.real(h[0, 0] + h[1, 1]))
    d = float(np.real(h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]))
    disc = max(t * t - 4.0 * d, 0.0)
    lo = max((t - np.sqrt(disc)) / 2.0, 0.0)
    hi = max((t + np.sqrt(disc)) / 2.0, 0.0)
    return float(np.sqrt(hi)), float(np.sqrt(lo))


# --------------------------------------------------------------------------
# margins


@dataclass
class MarginReport:
    """Classical stability margins of a SISO open loop."""

    gain_margin_db: float
    phase_margin_deg: float
    gain_crossover: float  # rad/s, nan when no unity-gain crossing
    phase_crossover: float  # rad/s, nan when no -180 deg crossing

    def as_dict(self) -> dict:
        return {
            "gain_margin_db": self.gain_margin_db,
            "phase_margin_deg": self.phase_margin_deg,
            "gain_crossover_rad_s": self.gain_crossover,
            "phase_crossover_rad_s": self.phase_crossover,
        }


def default_omega_grid(lo: float = 1e-1, hi: float = 1e6, per_decade: int = 200) -> np.ndarray:
    n = int(np.log10(hi / lo) * per_decade) + 1
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _bisect(f, a: float, b: float, rel: float = 1e-4) -> float:
    fa = f(a)
    for _ in range(200):
        mid = np.sqrt(a * b)  # log-midpoint
        fm = f(mid)
        if fa * fm <= 0.0:
            b = mid
        else:
            a, fa = mid, fm
        if (b - a) <= rel * a:
            break
    return np.sqrt(a * b)


def margins(open_loop: RationalTF, omega_grid=None) -> MarginReport:
    """Gain/phase margins by sign-change bracketing plus bisection refinement.

    Reports the worst (smallest) phase margin over all unity-gain crossings
    and the worst gain margin over all -180 deg crossings. Missing crossings
    yield explicit infinities.
    """
    if not open_loop.is_proper():
        raise ImproperTransferFunctionError("margins need a proper open loop")
    w = default_omega_grid() if omega_grid is None else np.asarray(omega_grid, float)
    resp = open_loop.freqresp(w)
    mag = np.abs(resp)

    def logmag(x):
        return np.log10(abs(open_loop.freqresp(np.array([x]))[0]))

    pm, wc_best = np.inf, np.nan
    lm = np.log10(np.where(mag > 0, mag, 1e-300))
    hits = set(np.flatnonzero(lm[:-1] * lm[1:] < 0))
    hits |= {k for k in np.flatnonzero(lm == 0.0) if k < len(w) - 1}
    for k in sorted(hits):
        wc = w[k] if lm[k] == 0.0 else _bisect(logmag, w[k], w[k + 1])
        ph = np.degrees(np.angle(open_loop.freqresp(np.array([wc]))[0]))
        cand = 180.0 + ph if ph <= 0 else 180.0 - ph
        if cand < pm:
            pm, wc_best = cand, wc

    # -180 deg crossings: Im L = 0 with Re L < 0
    gm, wp_best = np.inf, np.nan
    im = np.imag(resp)
    for k in np.flatnonzero(im[:-1] * im[1:] < 0):
        if np.real(resp[k]) >= 0 and np.real(resp[k + 1]) >= 0:
            continue

        def imval(x):
            return np.imag(open_loop.freqresp(np.array([x]))[0])

        wp = _bisect(imval, w[k], w[k + 1])
        v = open_loop.freqresp(np.array([wp]))[0]
        if np.real(v) < 0:
            cand = -20.0 * np.log10(abs(v))
            if cand < gm:
                gm, wp_best = cand, wp
    return MarginReport(gm, pm, wc_best, wp_best)


# --------------------------------------------------------------------------
# state space


@dataclass
class StateSpace:
    """Real state-space model; sample_time None means continuous."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    sample_time: float | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, float))
        self.B = np.atleast_2d(np.asarray(self.B, float))
        self.C = np.atleast_2d(np.asarray(self.C, float))
        self.D = np.atleast_2d(np.asarray(self.D, float))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n:
            if n or self.B.size or self.C.size:
                if self.A.shape != (n, n):
                    raise ValueError("A must be square")
                if self.B.shape[0] != n or self.C.shape[1] != n:
                    raise ValueError("inconsistent state-space dimensions")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise ValueError("D dimensions inconsistent with B, C")

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    def freqresp(self, omega) -> np.ndarray:
        """Response at s = j*omega (continuous) or z = exp(j*omega*Ts) (discrete)."""
        omega = np.asarray(omega, dtype=float)
        out = np.empty((len(omega), self.C.shape[0], self.B.shape[1]), dtype=complex)
        eye = np.eye(self.nstates)
        for k, wk in enumerate(omega):
            v = 1j * wk if self.sample_time is None else np.exp(1j * wk * self.sample_time)
            if self.nstates:
                out[k] = self.C @ np.linalg.solve(v * eye - self.A, self.B) + self.D
            else:
                out[k] = self.D
        return out

    def step_states(self, x: np.ndarray, u: np.ndarray):
        """One discrete update; returns (x_next, y)."""
        y = self.C @ x + self.D @ u
        return self.A @ x + self.B @ u, y


def _siso_canonical(tf: RationalTF) -> StateSpace:
    """Controllable canonical realization of a proper SISO rational function.

    The frequency axis is rescaled by a root-magnitude bound before forming
    the companion matrix; SI-unit coefficients span many decades and an
    unscaled canonical form is numerically useless beyond degree ~4.
    """
    if not tf.is_proper():
        raise ImproperTransferFunctionError(
            f"deg num {tf.num.degree} > deg den {tf.den.degree}"
        )
    dlead = tf.den.coeffs[-1]
    den = Polynomial(tf.den.coeffs / dlead)
    num = Polynomial(tf.num.coeffs / dlead)
    n = den.degree
    if num.degree == n:
        d = num.coeffs[-1]
        num = Polynomial((num - d * den).coeffs[:n]) if n else Polynomial([0.0])
    else:
        d = 0.0
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]])
    # Cauchy-style bound on pole magnitudes as the scaling frequency
    ws = max(
        (abs(den.coeffs[k]) ** (1.0 / (n - k)) for k in range(n) if den.coeffs[k] != 0.0),
        default=1.0,
    )
    ws = max(ws, 1e-30)
    dsc = den.coeffs * ws ** np.arange(n + 1)
    nsc = np.zeros(n)
    nsc[: len(num.coeffs)] = num.coeffs * ws ** np.arange(len(num.coeffs))
    dsc = dsc / dsc[-1]
    nsc = nsc / (ws**n)  # same normalization as the monic scaled denominator
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -dsc[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = nsc[np.newaxis, :]
    # undo the frequency scaling: H(s) = Hs(s/ws)
    return StateSpace(ws * A, B, ws * C, [[d]])


def _reduce(ss: StateSpace, tol: float) -> StateSpace:
    """Project onto the controllable then observable subspace (SVD rank cuts)."""
    for dual in (False, True):
        A = ss.A.T if dual else ss.A
        B = ss.C.T if dual else ss.B
        C = ss.B.T if dual else ss.C
        n = A.shape[0]
        if n == 0:
            break
        # Krylov spans are invariant under scaling, so normalize for rank
        An = A / max(1.0, np.linalg.norm(A, np.inf))
        Bn = B / max(1.0, np.linalg.norm(B, np.inf))
        blocks = [Bn]
        for _ in range(n - 1):
            blocks.append(An @ blocks[-1])
        ctrb = np.hstack(blocks)
        u, sv, _ = np.linalg.svd(ctrb, full_matrices=True)
        r = int(np.sum(sv > tol * (sv[0] if sv.size else 0.0)))
        if r < n:
            T = u[:, :r]
            A, B, C = T.T @ A @ T, T.T @ B, C @ T
        if dual:
            ss = StateSpace(A.T, C.T, B.T, ss.D, ss.sample_time)
        else:
            ss = StateSpace(A, B, C, ss.D, ss.sample_time)
    return ss


def to_state_space(obj, minimal: bool = True, tol: float = 1e-12) -> StateSpace:
    """Realize a RationalTF or TransferMatrix2 in state space.

    Controllable canonical per column, then numerical minimality by
    controllability/observability rank with relative tolerance tol. The
    default tolerance removes exact structural redundancy (duplicated poles
    across entries) while never truncating weakly-coupled genuine states.
    """
    if isinstance(obj, TransferMatrix2):
        # per input column: block-diagonal of the two entry realizations
        colA, colB, colC, D = [], [], [], np.zeros((2, 2))
        for j in range(2):
            parts = [_siso_canonical(obj.m[i][j]) for i in range(2)]
            n = sum(p.nstates for p in parts)
            A = np.zeros((n, n))
            B = np.zeros((n, 1))
            C = np.zeros((2, n))
            k = 0
            for i, p in enumerate(parts):
                m = p.nstates
                A[k : k + m, k : k + m] = p.A
                B[k : k + m, 0] = p.B[:, 0]
                C[i, k : k + m] = p.C[0]
                D[i, j] = p.D[0, 0]
                k += m
            colA.append(A)
            colB.append(B)
            colC.append(C)
        n = sum(a.shape[0] for a in colA)
        A = np.zeros((n, n))
        B = np.zeros((n, 2))
        C = np.zeros((2, n))
        k = 0
        for j in range(2):
            m = colA[j].shape[0]
            A[k : k + m, k : k + m] = colA[j]
            B[k : k + m, j] = colB[j][:, 0]
            C[:, k : k + m] = colC[j]
            k += m
        ss = StateSpace(A, B, C, D)
    else:
        ss = _siso_canonical(_as_tf(obj))
    return _reduce(ss, tol) if minimal else ss


def discretize(ss: StateSpace, Ts: float, prewarp: float | None = None) -> StateSpace:
    """Bilinear (Tustin) discretization, optionally prewarped at prewarp rad/s."""
    if ss.sample_time is not None:
        raise ValueError("input must be continuous-time")
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    if prewarp is not None and prewarp > 0:
        alpha = np.tan(prewarp * Ts / 2.0) / prewarp
    else:
        alpha = Ts / 2.0
    n = ss.nstates
    if n == 0:
        return StateSpace(ss.A, ss.B, ss.C, ss.D, sample_time=Ts)
    M = np.eye(n) - alpha * ss.A
    scale = max(1.0, alpha * np.linalg.norm(ss.A, np.inf))
    if abs(np.linalg.det(M)) <= 1e-9 * scale**n:
        raise BilinearSingularityError("continuous pole at 2/Ts")
    E = np.linalg.inv(M)
    Ad = E @ (np.eye(n) + alpha * ss.A)
    Bd = 2.0 * alpha * (E @ ss.B)
    Cd = ss.C @ E
    Dd = ss.D + alpha * (ss.C @ E @ ss.B)
    return StateSpace(Ad, Bd, Cd, Dd, sample_time=Ts)
