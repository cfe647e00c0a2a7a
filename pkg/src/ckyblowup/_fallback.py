"""Pure-Python/numpy versions of the hot kernels.

These define the reference expression trees; the compiled core evaluates
the same trees in the same order, so fixed-step RK4 results and interval
enclosures agree bit for bit between the two backends.
"""
from __future__ import annotations

import math

import numpy as np

NAME = "python"

OK = 0
SINGULAR = 1
NONFINITE = 2


class KernelError(ArithmeticError):
    def __init__(self, code: int, where: float, msg: str = ""):
        super().__init__(msg or f"kernel failure code {code} at {where!r}")
        self.code = code
        self.where = where


# -- profile ODE right-hand sides ---------------------------------------------

def near_rhs(c: float, x: float, U: float, W: float, T: float):
    ut = c * x + U
    if ut == 0.0 or x == 0.0:
        raise KernelError(SINGULAR, x, f"near-field rhs singular at xi={x!r}")
    cm2 = c - 2.0
    dT = cm2 * T / ut
    dW = cm2 * T / (ut * ut) - W / ut
    dU = W + U / x
    return dU, dW, dT


def far_rhs(c: float, x: float, U: float, W: float, T: float):
    cu = c + U
    if cu == 0.0 or x == 0.0:
        raise KernelError(SINGULAR, x, f"far-field rhs singular at eta={x!r}")
    ecu = x * cu
    tmc = 2.0 - c
    cm2 = c - 2.0
    dT = tmc * T * U / ecu
    dW = -(c * W) / ecu + c * cm2 * T / ((cu * cu) * (x * x * x))
    dU = c * W / x
    return dU, dW, dT


def _rk4(f, c, x0, x1, n, U, W, T, stride):
    h = (x1 - x0) / n
    hh = 0.5 * h
    h6 = h / 6.0
    ns = n // stride + 1 if stride > 0 else 0
    xs = np.empty(ns)
    Us = np.empty(ns)
    Ws = np.empty(ns)
    Ts = np.empty(ns)
    j = 0
    if ns:
        xs[0], Us[0], Ws[0], Ts[0] = x0, U, W, T
        j = 1
    for i in range(n):
        x = x0 + i * h
        a1, b1, c1 = f(c, x, U, W, T)
        a2, b2, c2 = f(c, x + hh, U + hh * a1, W + hh * b1, T + hh * c1)
        a3, b3, c3 = f(c, x + hh, U + hh * a2, W + hh * b2, T + hh * c2)
        a4, b4, c4 = f(c, x + h, U + h * a3, W + h * b3, T + h * c3)
        U = U + h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        W = W + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        T = T + h6 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        if not (math.isfinite(U) and math.isfinite(W) and math.isfinite(T)):
            raise KernelError(NONFINITE, x + h, f"non-finite state at {x + h!r}")
        if ns and (i + 1) % stride == 0:
            xs[j], Us[j], Ws[j], Ts[j] = x0 + (i + 1) * h, U, W, T
            j += 1
    return U, W, T, xs[:j], Us[:j], Ws[:j], Ts[:j]


def rk4_near(c, x0, x1, n, U, W, T, stride=0):
    return _rk4(near_rhs, c, x0, x1, n, U, W, T, stride)


def rk4_far(c, x0, x1, n, U, W, T, stride=0):
    return _rk4(far_rhs, c, x0, x1, n, U, W, T, stride)


# -- validated far-field run --------------------------------------------------

def validated_run(c, s, eta_s, eta_target, n_steps, state, width_cap, checkpoint_every):
    """Loop of validated Euler steps; see certify.validated_step for the math."""
    from . import certify

    ks = certify.apriori_exponents(s, c)
    cur = state
    checkpoints = []
    decreases = 0
    prev_w = (cur.U_hat.width, cur.W_hat.width, cur.Theta_hat.width)
    for n in range(n_steps):
        x1 = certify.node(eta_s, eta_target, n_steps, n + 1)
        try:
            nxt = certify.validated_step_to(cur, x1, c, s, ks)
        except (ArithmeticError, certify.CertifyError) as exc:
            return cur, n, str(exc), checkpoints, decreases
        w = (nxt.U_hat.width, nxt.W_hat.width, nxt.Theta_hat.width)
        if w[0] < prev_w[0] or w[1] < prev_w[1] or w[2] < prev_w[2]:
            decreases += 1
        prev_w = w
        cur = nxt
        reason = certify.abort_reason(cur, c, width_cap)
        if reason:
            return cur, n + 1, reason, checkpoints, decreases
        if checkpoint_every and (n + 1) % checkpoint_every == 0:
            checkpoints.append(cur)
    return cur, n_steps, "", checkpoints, decreases


# -- particle kernels ---------------------------------------------------------

def velocity(q: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = len(q)
    u = np.zeros(n)
    if n < 2:
        return u
    g = np.zeros(n)
    g[1:] = w[1:] / q[1:]
    seg = 0.5 * (g[1:-1] + g[2:]) * (q[2:] - q[1:-1])  # j = 1..N-1
    suffix = np.cumsum(seg[::-1])[::-1]
    u[1:-1] = -(q[1:-1] * suffix)
    return u


def theta_x(q: np.ndarray, th: np.ndarray) -> np.ndarray:
    n = len(q)
    out = np.zeros(n)
    if n < 3:
        if n == 2:
            out[1] = (th[1] - th[0]) / (q[1] - q[0])
        return out
    qi, qm, qp = q[1:-1], q[:-2], q[2:]
    ti, tm, tp = th[1:-1], th[:-2], th[2:]
    out[1:-1] = ((ti - tp) / (qi - qp) + (ti - tm) / (qi - qm)) - (tp - tm) / (qp - qm)
    a, b, e = n - 3, n - 2, n - 1
    out[e] = ((th[e] - th[a]) / (q[e] - q[a]) + (th[e] - th[b]) / (q[e] - q[b])) \
        - (th[b] - th[a]) / (q[b] - q[a])
    return out


def max_compression(q: np.ndarray, u: np.ndarray) -> float:
    if len(q) < 2:
        return 0.0
    rate = (u[:-1] - u[1:]) / (q[1:] - q[:-1])
    return float(max(rate.max(), 0.0))


def rk4_particles(q, w, th, dt):
    """One RK4 step of dq/dt = u(q, w), dw/dt = theta_x(q, theta); theta is fixed."""
    hh = 0.5 * dt
    h6 = dt / 6.0
    a1 = velocity(q, w)
    b1 = theta_x(q, th)
    q2 = q + hh * a1
    w2 = w + hh * b1
    a2 = velocity(q2, w2)
    b2 = theta_x(q2, th)
    q3 = q + hh * a2
    w3 = w + hh * b2
    a3 = velocity(q3, w3)
    b3 = theta_x(q3, th)
    q4 = q + dt * a3
    w4 = w + dt * b3
    a4 = velocity(q4, w4)
    b4 = theta_x(q4, th)
    qn = q + h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    wn = w + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    return qn, wn
