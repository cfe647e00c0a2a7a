"""Near-field power series of the self-similar profile.

Near the origin the profile is analytic,

    Theta(xi) = sum_{k>=s} Theta_k xi^k,  U(xi) = sum_{k>=1} U_k xi^k,
    W(xi) = sum_k W_k xi^k  with  W_k = k U_{k+1},

and matching powers of xi in the profile equations gives a recurrence
for (U_k, Theta_k). The float coefficients are computed in exact rational
arithmetic and rounded once, so each one is correctly rounded. The interval
variant runs the same recurrence through outward-rounded interval operations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .interval import Interval, iv_pow


class SeriesError(ValueError):
    """Invalid series parameters or evaluation outside the convergence region."""


@dataclass(frozen=True)
class ScalingParams:
    s: int
    c_l: float
    theta_s: float = 1.0

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 2:
            raise SeriesError(f"leading order s must be an integer >= 2, got {self.s}")
        if not self.c_l > 2.0:
            raise SeriesError(f"c_l must exceed 2, got {self.c_l}")
        if not self.theta_s > 0.0:
            raise SeriesError(f"theta_s must be positive, got {self.theta_s}")
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "c_l", float(self.c_l))
        object.__setattr__(self, "theta_s", float(self.theta_s))

    @property
    def c_w(self) -> float:
        return -1.0

    @property
    def c_u(self) -> float:
        return self.c_l - 1.0

    @property
    def c_theta(self) -> float:
        return self.c_l - 2.0

    def to_json(self) -> dict:
        return {"s": self.s, "c_l": self.c_l, "theta_s": self.theta_s}


@dataclass(frozen=True)
class SeriesCoefficients:
    """Coefficients indexed from 1; U[0] and Theta[0] are zero placeholders."""

    params: ScalingParams
    U: np.ndarray
    Theta: np.ndarray
    bound_u0: float
    bound_theta0: float
    bound_r: float
    radius_estimate: float = field(default=math.nan)

    @property
    def K(self) -> int:
        return len(self.U) - 1

    @property
    def W(self) -> np.ndarray:
        """W_k = k U_{k+1} for k = 1..K-1 (index 0 is a zero placeholder)."""
        k = np.arange(self.K)
        return k * self.U[1:]

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "U": [float(x) for x in self.U[1:]],
            "Theta": [float(x) for x in self.Theta[1:]],
            "bounds": {"u0": self.bound_u0, "theta0": self.bound_theta0, "r": self.bound_r},
            "radius_estimate": self.radius_estimate,
        }


# -- exact recurrence ---------------------------------------------------------

def _exact_coefficients(s: int, c, theta_s, K: int):
    """Exact U_k, Theta_k for k = 0..K from the matching recurrence (generic field)."""
    one = c - c + 1  # unit of the arithmetic in use
    zero = one - one
    U = [zero] * (K + 1)
    T = [zero] * (K + 1)
    U[1] = ((1 - s) * c - 2) / (s * one)
    T[s] = theta_s
    g = (c - 2) / (s * one)  # equals c + U_1
    U[s] = s * s * theta_s / ((s * c - c - s + 2) * (s - 1))
    for k in range(s + 1, K + 1):
        acc = zero
        for m in range(s, k):
            j = k - m + 1
            if j >= s:
                acc = acc + U[m] * (j * T[j])
        T[k] = -acc / ((k * one / s - 1) * (c - 2))
        acc = zero
        for m in range(s, k):
            j = k - m + 1
            acc = acc + U[m] * ((k - m) ** 2 * U[j])
        U[k] = (k * T[k] - acc) / ((k - 1) + g * (k - 1) ** 2)
    return U, T


def _check_K(params: ScalingParams, K: int):
    if K < params.s + 1:
        raise SeriesError(f"need K >= s + 1 = {params.s + 1}, got {K}")


def build_coefficients(params: ScalingParams, K: int = 50, with_radius: bool = True) -> SeriesCoefficients:
    _check_K(params, K)
    U, T = _exact_coefficients(params.s, Fraction(params.c_l), Fraction(params.theta_s), K)
    Uf = np.array([float(x) for x in U])
    Tf = np.array([float(x) for x in T])
    u0, th0, r = rigorous_bounds(params)
    coeffs = SeriesCoefficients(params, Uf, Tf, u0, th0, r)
    if with_radius and K >= 2 * params.s + 2:
        coeffs = SeriesCoefficients(params, Uf, Tf, u0, th0, r, estimate_radius(coeffs))
    return coeffs


def build_coefficients_interval(params: ScalingParams, K: int = 21):
    """Interval enclosures of U_k and Theta_k, k = 0..K (index 0 unused)."""
    _check_K(params, K)
    c = Interval(params.c_l)
    th = Interval(params.theta_s)
    return _exact_coefficients(params.s, c, th, K)


def recurrence_residuals(coeffs: SeriesCoefficients):
    """Residuals of the two matching equations evaluated exactly on the stored floats.

    Returns a list of (k, res_theta, max_summand_theta, res_w, max_summand_w).
    """
    p = coeffs.params
    c = Fraction(p.c_l)
    U = [Fraction(float(x)) for x in coeffs.U]
    T = [Fraction(float(x)) for x in coeffs.Theta]
    out = []
    for k in range(1, coeffs.K + 1):
        terms_t = [(2 - c) * T[k], k * c * T[k]]
        terms_t += [(k - m + 1) * T[k - m + 1] * U[m] for m in range(1, k)]
        terms_w = [(k - 1) * U[k], c * (k - 1) ** 2 * U[k], -k * T[k]]
        terms_w += [U[m] * (k - m) ** 2 * U[k - m + 1] for m in range(1, k)]
        out.append((
            k,
            float(sum(terms_t)), float(max(abs(x) for x in terms_t)),
            float(sum(terms_w)), float(max(abs(x) for x in terms_w)),
        ))
    return out


def residual_ulps(coeffs: SeriesCoefficients) -> np.ndarray:
    """Per-k residual in units of the ulp of the largest summand (max of both equations)."""
    out = []
    for _, rt, mt, rw, mw in recurrence_residuals(coeffs):
        e = 0.0
        if mt > 0.0:
            e = max(e, abs(rt) / math.ulp(mt))
        if mw > 0.0:
            e = max(e, abs(rw) / math.ulp(mw))
        out.append(e)
    return np.array(out)


# -- coefficient bounds -------------------------------------------------------

def _abc(params: ScalingParams):
    s = params.s
    c = Fraction(params.c_l)
    th = Fraction(params.theta_s)
    A = min((c - 2) / (s * (s + 1)), 2 * (c - 2) / (9 * s))
    B = 2 * (c - 2) / (9 * s)
    C = max(s * th / (A * B), s ** 4 * th / (A * (s * c - c - s + 2)))
    return A, B, C


def rigorous_bounds(params: ScalingParams) -> tuple[float, float, float]:
    """(u0, theta0, r) with |U_k| <= u0 r^k / k^2 and |Theta_k| <= theta0 r^k / k for k >= s."""
    A, B, C = _abc(params)
    if params.s == 2:
        r = float(C)
        u0 = float(A / C)
        th0 = float(A * B / C)
    else:
        r = float(C) ** (1.0 / (params.s - 1))
        u0 = float(A) / r
        th0 = u0 * float(B)
    return u0, th0, r


def rigorous_bounds_enclosure(params: ScalingParams) -> tuple[Interval, Interval, Interval]:
    """Interval enclosures of the exact (u0, theta0, r) triple."""
    A, B, C = _abc(params)
    s = params.s
    if s == 2:
        r = Interval.from_fraction(C)
    else:
        guess = float(C) ** (1.0 / (s - 1))
        lo, hi = guess, guess
        Ci = Interval.from_fraction(C)
        for _ in range(64):
            if iv_pow(Interval(lo), s - 1).hi <= Ci.lo:
                break
            lo = math.nextafter(lo, 0.0)
        for _ in range(64):
            if iv_pow(Interval(hi), s - 1).lo >= Ci.hi:
                break
            hi = math.nextafter(hi, math.inf)
        r = Interval(lo, hi)
    u0 = Interval.from_fraction(A) / r
    th0 = u0 * Interval.from_fraction(B)
    return u0, th0, r


def check_initial_bounds(params: ScalingParams, u0, theta0, r) -> tuple[bool, bool, bool, bool]:
    """Evaluate the four starting inequalities exactly for the given triple.

    The last one is tested with <=, which is all the induction needs.
    """
    s = params.s
    c = Fraction(params.c_l)
    th = Fraction(params.theta_s)
    u0, theta0, r = Fraction(u0), Fraction(theta0), Fraction(r)
    Us = s * s * th / ((s * c - c - s + 2) * (s - 1))
    g = (c - 2) / s
    return (
        abs(Us) <= u0 * r ** s / (s * s),
        abs(th) <= theta0 * r ** s / s,
        (s + 1) * u0 * r / g <= 1,
        Fraction(9, 4) * (theta0 / u0 + u0 * r) / g <= 1,
    )


def check_bound_triple_exact(params: ScalingParams) -> tuple[bool, bool, bool, bool]:
    """The four inequalities for the exact A/B/C triple, via u0 r^(s-1) = A and theta0 = u0 B."""
    A, B, C = _abc(params)
    s = params.s
    c = Fraction(params.c_l)
    th = Fraction(params.theta_s)
    Us = s * s * th / ((s * c - c - s + 2) * (s - 1))
    g = (c - 2) / s
    return (
        abs(Us) <= A * C / (s * s),
        th <= A * B * C / s,
        (s + 1) * A / g <= 1,
        Fraction(9, 4) * (B + A) / g <= 1,
    )


def truncation_bound(u0, theta0, r, m: int, eta_s: float, c_l: float) -> tuple[float, float, float]:
    """Upper bounds on the tails of the far-chart series truncated after m terms.

    Returned in the order (b_U, b_Theta, b_W). Inputs may be floats or Intervals;
    every quantity is evaluated with outward rounding and the upper endpoint kept.
    """
    bU, bT, bW = truncation_bound_interval(u0, theta0, r, m, Interval(eta_s), c_l)
    return bU.hi, bT.hi, bW.hi


def _pow_c(x: Interval, c: float) -> Interval:
    """Enclosure of x**c for x > 0 (exact repeated products for integer c)."""
    if c == int(c) and 0 <= c <= 64:
        return iv_pow(x, int(c))
    lo = math.pow(x.lo, c)
    hi = math.pow(x.hi, c)
    if lo > hi:
        lo, hi = hi, lo
    for _ in range(4):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
    return Interval(max(lo, 0.0), hi)


def truncation_bound_interval(u0, theta0, r, m: int, eta_s: Interval, c_l: float):
    u0, theta0, r = Interval.coerce(u0), Interval.coerce(theta0), Interval.coerce(r)
    z = _pow_c(eta_s, c_l)
    rz = r * z
    if rz.hi >= 1.0:
        raise SeriesError(f"divergent tail: r * eta_s^c_l = {rz.hi} >= 1")
    tail = Interval(1.0) - rz
    eta2 = eta_s * eta_s
    bU = u0 * iv_pow(r, m + 1) * iv_pow(z, m) / (Interval((m + 1) ** 2) * tail)
    bT = theta0 * iv_pow(rz, m + 1) * (eta2 / z) / (Interval(m + 1) * tail)
    bW = u0 * iv_pow(r, m + 2) * iv_pow(z, m + 1) / (Interval(m + 2) * tail)
    return bU, bT, bW


# -- evaluation ---------------------------------------------------------------

def _horner(a, x):
    acc = 0.0
    for v in reversed(a):
        acc = acc * x + v
    return acc


def evaluate_series(coeffs: SeriesCoefficients, xi: float):
    """(U, W, Theta) at xi in the near-field chart."""
    from .odes import ProfileState

    if not (xi >= 0.0) or (math.isfinite(coeffs.radius_estimate) and xi >= coeffs.radius_estimate):
        raise SeriesError(f"xi = {xi} outside the estimated radius {coeffs.radius_estimate}")
    U = xi * _horner(coeffs.U[1:], xi)
    W = xi * _horner(coeffs.W[1:], xi)
    T = xi * _horner(coeffs.Theta[1:], xi)
    return ProfileState("near", xi, U, W, T)


def evaluate_series_dxi(coeffs: SeriesCoefficients, xi: float):
    """Term-wise xi-derivatives (U', W', Theta') of the truncated series."""
    k = np.arange(coeffs.K + 1, dtype=float)
    dU = _horner((k * coeffs.U)[1:], xi)
    Wk = np.zeros(coeffs.K + 1)
    Wk[: coeffs.K] = coeffs.W
    dW = _horner((k * Wk)[1:], xi)
    dT = _horner((k * coeffs.Theta)[1:], xi)
    return dU, dW, dT


def evaluate_series_far(coeffs: SeriesCoefficients, eta_s: float):
    """(U_hat, W_hat, Theta_hat) at eta_s via U/xi, W and Theta xi^(2/c - 1), xi = eta^c."""
    from .odes import ProfileState

    c = coeffs.params.c_l
    z = eta_s ** c
    if math.isfinite(coeffs.radius_estimate) and z >= coeffs.radius_estimate:
        raise SeriesError(f"eta_s^c = {z} outside the estimated radius {coeffs.radius_estimate}")
    Uh = _horner(coeffs.U[1:], z)
    Wh = z * _horner(coeffs.W[1:], z)
    Th = eta_s * eta_s * _horner(coeffs.Theta[1:], z)
    return ProfileState("far", eta_s, Uh, Wh, Th)


def estimate_radius(coeffs: SeriesCoefficients, kmax: int = 50) -> float:
    """Half the smaller convergence radius from log|Theta_k|, log|U_k| vs k fits."""
    s = coeffs.params.s
    top = min(kmax, coeffs.K)
    rates = []
    for arr in (coeffs.Theta, coeffs.U):
        k = np.arange(s, top + 1)
        v = np.abs(np.asarray(arr[s: top + 1], dtype=float))
        keep = v > 0
        if keep.sum() < 2:
            raise SeriesError("degenerate radius fit: fewer than two nonzero coefficients")
        slope, _ = np.polyfit(k[keep], np.log(v[keep]), 1)
        rates.append(math.exp(slope))
    return 0.5 * min(1.0 / rates[0], 1.0 / rates[1])


def radius_from_sequence(k, a) -> float:
    """Growth rate r from a log|a_k| = k log r + c fit, zeros skipped."""
    k = np.asarray(k, dtype=float)
    v = np.abs(np.asarray(a, dtype=float))
    keep = v > 0
    if keep.sum() < 2:
        raise SeriesError("degenerate radius fit: fewer than two nonzero coefficients")
    slope, _ = np.polyfit(k[keep], np.log(v[keep]), 1)
    return math.exp(slope)
