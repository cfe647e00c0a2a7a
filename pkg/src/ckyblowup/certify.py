"""Validated integration of the far-field system and sign certificates for G(c_l).

Each step of forward Euler is recentred at the interval midpoints:

    y(x_{n+1}) = m + h f(x_n, m) + (I + h J)(y(x_n) - m) + h^2/2 y''(x*)

with J the Jacobian enclosed over the state intervals (mean-value form)
and y'' enclosed over an a-priori box that contains the whole trajectory
on [x_n, x_{n+1}]. Every operation is outward rounded, so the true
solution stays inside the enclosure at every node.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import _backend
from .interval import Interval, ZeroInDivisor, iv_hull, iv_pow
from .series import (
    ScalingParams,
    _pow_c,
    build_coefficients_interval,
    check_bound_triple_exact,
    rigorous_bounds_enclosure,
    truncation_bound_interval,
)

GPOSITIVE = "GPositive"
GNEGATIVE = "GNegative"
INCONCLUSIVE = "Inconclusive"

ONE = Interval(1.0)
TWO = Interval(2.0)
FOUR = Interval(4.0)
HALF = Interval(0.5)

DEFAULT_WIDTH_CAP = 1e-2
DEFAULT_H = 2.9e-6
DEFAULT_M = 20
DEFAULT_ETA_TARGET = 3.0
CHECKPOINT_EVERY = 100_000


class CertifyError(ArithmeticError):
    """A validated step cannot proceed (denominator, positivity or width failure)."""


@dataclass(frozen=True)
class IntervalState:
    eta: float
    U_hat: Interval
    W_hat: Interval
    Theta_hat: Interval

    def to_json(self) -> dict:
        return {
            "eta": self.eta,
            "U_hat": self.U_hat.to_json(),
            "W_hat": self.W_hat.to_json(),
            "Theta_hat": self.Theta_hat.to_json(),
        }


@dataclass(frozen=True)
class AprioriBox:
    theta: Interval
    u: Interval
    w: Interval


@dataclass
class Certificate:
    s: int
    c_l: float
    eta_target: float
    step_size: float
    verdict: str
    final_state: IntervalState
    condition_values: dict
    config: dict = field(default_factory=dict)
    checkpoints: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "params": {"s": self.s, "c_l": self.c_l},
            "verdict": self.verdict,
            "eta_target": self.eta_target,
            "step_size": self.step_size,
            "final_state": self.final_state.to_json(),
            "condition_values": {k: v.to_json() for k, v in self.condition_values.items()},
            "config": self.config,
            "checkpoints": [c.to_json() for c in self.checkpoints],
            "diagnostics": self.diagnostics,
        }


# -- initial enclosure ----------------------------------------------------------

def default_eta_s(s: int, c_l: float) -> float:
    """Largest start point in {0.7, 0.5, 0.3, 0.2, 0.1} with r * eta_s^c_l <= 0.3."""
    _, _, r = rigorous_bounds_enclosure(ScalingParams(s, c_l))
    for eta in (0.7, 0.5, 0.3, 0.2, 0.1):
        if (r * _pow_c(Interval(eta), c_l)).hi <= 0.3:
            return eta
    return 0.1


def validated_initial(s: int, c_l: float, m: int = DEFAULT_M, eta_s: float = 0.1) -> IntervalState:
    """Enclosures of (U_hat, W_hat, Theta_hat)(eta_s) from the interval series plus tail bounds."""
    params = ScalingParams(s, c_l)
    if not all(check_bound_triple_exact(params)):
        raise CertifyError("coefficient bound triple fails the starting inequalities")
    U, T = build_coefficients_interval(params, m + 1)
    u0, th0, r = rigorous_bounds_enclosure(params)
    E = Interval(eta_s)
    Z = _pow_c(E, c_l)
    bU, bT, bW = truncation_bound_interval(u0, th0, r, m, E, c_l)

    accU = Interval(0.0)
    accT = Interval(0.0)
    accW = Interval(0.0)
    for k in range(m, 0, -1):
        accU = accU * Z + U[k]
        accT = accT * Z + T[k]
        accW = accW * Z + Interval(float(k)) * U[k + 1]
    Uh = accU + Interval(-bU.hi, bU.hi)
    Th = (E * E) * accT + Interval(-bT.hi, bT.hi)
    Wh = Z * accW + Interval(-bW.hi, bW.hi)
    return IntervalState(float(eta_s), Uh, Wh, Th)


# -- enclosures of the right-hand side and its derivatives ----------------------

def far_rhs_interval(X: Interval, U: Interval, W: Interval, T: Interval, C: Interval):
    """Interval far-field right-hand side, returned as (U', W', Theta')."""
    cu = C + U
    ecu = X * cu
    tmc = TWO - C
    cm2 = C - TWO
    dT = ((tmc * T) * U) / ecu
    dW = (-(C * W)) / ecu + ((C * cm2) * T) / ((cu * cu) * ((X * X) * X))
    dU = (C * W) / X
    return dU, dW, dT


def jacobian_enclosure(eta, box, c_l):
    """Jacobian of (W', U', Theta') with respect to (W, U, Theta) over the box.

    `box` is an AprioriBox or anything with theta/u/w Interval fields.
    """
    X = Interval.coerce(eta)
    C = Interval(c_l) if not isinstance(c_l, Interval) else c_l
    U, W, T = box.u, box.w, box.theta
    tmc = TWO - C
    cm2 = C - TWO
    cu = C + U
    cu2 = cu * cu
    cu3 = cu2 * cu
    eta2 = X * X
    eta3 = eta2 * X
    ecu = X * cu
    zero = Interval(0.0)
    J_WW = -(C / ecu)
    J_WU = (C * ((cu * eta2) * W - (TWO * cm2) * T)) / (cu3 * eta3)
    J_WT = (C * cm2) / (cu2 * eta3)
    J_UW = C / X
    J_TU = ((C * tmc) * T) / (cu2 * X)
    J_TT = (tmc * U) / ecu
    return [
        [J_WW, J_WU, J_WT],
        [J_UW, zero, zero],
        [zero, J_TU, J_TT],
    ]


def second_derivative_enclosure(eta, box, c_l):
    """(W'', U'', Theta'') along the far-field flow, enclosed over eta x box."""
    E = Interval.coerce(eta)
    C = Interval(c_l) if not isinstance(c_l, Interval) else c_l
    U, W, T = box.u, box.w, box.theta
    cm2 = C - TWO
    cu = C + U
    cu2 = cu * cu
    cu3 = cu2 * cu
    e2 = E * E
    e4 = e2 * e2
    ewc = (e2 * W) * cu
    U2 = (C * ((C * cm2) * T - ewc * (cu + C))) / (e4 * cu2)
    T2 = ((cm2 * T) * (((U * U) * (C - ONE) + C * U) - (C * C) * W)) / (e2 * cu2)
    W2 = (C * (ewc * ((cu + C) + C * W)
               - (cm2 * T) * (((C + ONE) * U + (TWO * C) * W) + FOUR * C))) / (e4 * cu3)
    return W2, U2, T2


def apriori_exponents(s: int, c_l: float) -> tuple[int, int]:
    """Integer exponents bracketing the growth rates of Theta_hat over one step."""
    c = Fraction(c_l)
    return math.ceil(s * c - c + 2), math.floor(2 - c)


def _apriori(state: IntervalState, X1: Interval, c_l: float, s: int, ks) -> AprioriBox:
    k_up, k_dn = ks
    U, W, T = state.U_hat, state.W_hat, state.Theta_hat
    if T.lo <= 0.0:
        raise CertifyError("Theta_hat enclosure not positive")
    X0 = Interval(state.eta)
    H = X1 - X0
    C = Interval(c_l)
    cm2 = C - TWO
    rho = X1 / X0
    th_hi = (T * iv_pow(rho, k_up)).hi
    th_lo = (T / iv_pow(rho, -k_dn)).lo
    s2c = Interval(float(s * s)) * C
    x03 = (X0 * X0) * X0
    w_max = (W + ((s2c * Interval(th_hi)) * H) / (cm2 * x03)).hi
    WM = Interval(w_max)
    u_max = (U + ((C * WM) * H) / X0).hi
    cu_min = C + Interval(U.lo)
    if cu_min.lo <= 0.0:
        raise CertifyError("c_l + U_hat reaches zero")
    w_min = (W - (H * (C * WM)) / (X0 * cu_min)).lo
    return AprioriBox(
        theta=iv_hull(T, Interval(th_lo, th_hi)),
        u=iv_hull(U, Interval(U.lo, u_max)),
        w=iv_hull(W, Interval(w_min, w_max)),
    )


def apriori_enclosure(state: IntervalState, h: float, c_l: float, s: int) -> AprioriBox:
    """Box containing the trajectory for eta in [state.eta, state.eta + h]."""
    X1 = Interval(state.eta) + Interval(h)
    return _apriori(state, X1, c_l, s, apriori_exponents(s, c_l))


def validated_step_to(state: IntervalState, x1: float, c_l: float, s: int, ks=None) -> IntervalState:
    """Advance the enclosure from state.eta to the node x1."""
    if ks is None:
        ks = apriori_exponents(s, c_l)
    X0 = Interval(state.eta)
    X1 = Interval(x1)
    H = X1 - X0
    E = Interval(state.eta, x1)
    C = Interval(c_l)
    U, W, T = state.U_hat, state.W_hat, state.Theta_hat
    box = _apriori(state, X1, c_l, s, ks)

    MU, MW, MT = Interval(U.mid), Interval(W.mid), Interval(T.mid)
    dU, dW, dT = far_rhs_interval(X0, MU, MW, MT, C)
    DU, DW, DT = U - MU, W - MW, T - MT
    J = jacobian_enclosure(X0, AprioriBox(T, U, W), C)
    PW = ((ONE + H * J[0][0]) * DW + (H * J[0][1]) * DU) + (H * J[0][2]) * DT
    PU = (H * J[1][0]) * DW + DU
    PT = (H * J[2][1]) * DU + (ONE + H * J[2][2]) * DT
    W2, U2, T2 = second_derivative_enclosure(E, box, C)
    HH = (H * H) * HALF
    nU = MU + ((H * dU + PU) + HH * U2)
    nW = MW + ((H * dW + PW) + HH * W2)
    nT = MT + ((H * dT + PT) + HH * T2)
    return IntervalState(x1, nU, nW, nT)


def validated_step(state: IntervalState, h: float, c_l: float, s: int) -> IntervalState:
    """One validated Euler step to the representable node fl(state.eta + h)."""
    if not h > 0.0:
        raise CertifyError("step size must be positive")
    return validated_step_to(state, state.eta + h, c_l, s)


def abort_reason(state: IntervalState, c_l: float, width_cap: float) -> str:
    for name, iv in (("U_hat", state.U_hat), ("W_hat", state.W_hat), ("Theta_hat", state.Theta_hat)):
        if iv.width > width_cap:
            return f"{name} width {iv.width:.3e} exceeds cap {width_cap:g} at eta={state.eta}"
    if state.Theta_hat.lo <= 0.0:
        return f"Theta_hat enclosure reaches zero at eta={state.eta}"
    if c_l + state.U_hat.lo <= 0.0:
        return f"c_l + U_hat reaches zero at eta={state.eta}"
    return ""


def node(eta_s: float, eta_target: float, n_steps: int, n: int) -> float:
    if n >= n_steps:
        return eta_target
    return eta_s + n * ((eta_target - eta_s) / n_steps)


def step_count(eta_s: float, eta_target: float, h: float) -> int:
    return max(1, int(round((eta_target - eta_s) / h)))


# -- sign certificate -----------------------------------------------------------

def sign_conditions(state: IntervalState, c_l: float) -> tuple[str, dict]:
    """Evaluate the positivity test u0 > 0 and the pair of negativity tests."""
    U, W, T = state.U_hat, state.W_hat, state.Theta_hat
    C = Interval(c_l)
    E = Interval(state.eta)
    vals = {"u0": U}
    if U.lo > 0.0:
        return GPOSITIVE, vals
    up2 = U + TWO
    vals["u0_plus_2"] = up2
    if up2.lo <= 0.0:
        return INCONCLUSIVE, vals
    try:
        term = ((C - TWO) * T) / ((up2 * (ONE + U / C)) * (E * E))
    except ZeroInDivisor:
        return INCONCLUSIVE, vals
    neg = (U + C * W) + term
    vals["negativity_functional"] = neg
    if neg.hi < 0.0:
        return GNEGATIVE, vals
    return INCONCLUSIVE, vals


def run_validated(state0: IntervalState, c_l: float, s: int, eta_target: float, n_steps: int,
                  width_cap: float = DEFAULT_WIDTH_CAP, checkpoint_every: int = CHECKPOINT_EVERY,
                  backend=None):
    """Run n_steps validated steps; returns (state, steps_done, abort_reason, checkpoints, decreases)."""
    k = backend or _backend.kernels()
    return k.validated_run(c_l, s, state0.eta, eta_target, n_steps, state0, width_cap, checkpoint_every)


def certify_sign(s: int, c_l: float, eta_target: float = DEFAULT_ETA_TARGET, h: float = DEFAULT_H,
                 m: int = DEFAULT_M, eta_s: float | None = None,
                 width_cap: float = DEFAULT_WIDTH_CAP, checkpoint_every: int = CHECKPOINT_EVERY,
                 backend=None) -> Certificate:
    if eta_s is None:
        eta_s = default_eta_s(s, c_l)
    n_steps = step_count(eta_s, eta_target, h)
    config = {
        "s": s, "c_l": c_l, "eta_s": eta_s, "eta_target": eta_target, "h": h, "m": m,
        "n_steps": n_steps, "width_cap": width_cap, "checkpoint_every": checkpoint_every,
    }
    t0 = time.perf_counter()
    diag = {}
    try:
        st0 = validated_initial(s, c_l, m, eta_s)
    except (ArithmeticError, ValueError) as exc:
        zero = IntervalState(eta_s, Interval(0.0), Interval(0.0), Interval(0.0))
        return Certificate(s, c_l, eta_target, h, INCONCLUSIVE, zero, {}, config,
                           diagnostics={"abort": f"initial enclosure failed: {exc}"})
    diag["initial_state"] = st0.to_json()
    k = backend or _backend.kernels()
    final, done, reason, checkpoints, decreases = run_validated(
        st0, c_l, s, eta_target, n_steps, width_cap, checkpoint_every, k)
    diag.update({"backend": k.NAME, "steps_done": done, "width_decreases": decreases,
                 "seconds": time.perf_counter() - t0})
    if reason or done < n_steps:
        diag["abort"] = reason or "stopped early"
        return Certificate(s, c_l, eta_target, h, INCONCLUSIVE, final, {}, config, checkpoints, diag)
    verdict, vals = sign_conditions(final, c_l)
    return Certificate(s, c_l, eta_target, h, verdict, final, vals, config, checkpoints, diag)
