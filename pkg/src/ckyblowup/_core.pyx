# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, legacy_implicit_noexcept=True
"""Compiled kernels: interval primitives, validated Euler loop, RK4 sweeps, particle step.

Every expression mirrors the pure-Python reference in _fallback.py and
certify.py term for term, so both backends produce identical floats.
Build with -ffp-contract=off: a fused multiply-add would change the
rounding of the error-free transforms.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport nextafter, fabs, INFINITY, isfinite, floor

from ._fallback import KernelError

cnp.import_array()

NAME = "compiled"

cdef double SPLITTER = 134217729.0  # 2**27 + 1
cdef double TINY = 2.0 ** -900
cdef double HUGE = 2.0 ** 995

# error flags raised by interval operations inside one step
cdef int ERR_NONFINITE = 1
cdef int ERR_ZERODIV = 2
cdef int ERR_POSITIVITY = 4
cdef int ERR_DENOM = 8
cdef int g_err = 0


cdef struct iv:
    double lo
    double hi


cdef inline double _down(double x) nogil:
    return nextafter(x, -INFINITY)


cdef inline double _up(double x) nogil:
    return nextafter(x, INFINITY)


cdef inline iv mk(double lo, double hi) nogil:
    global g_err
    cdef iv r
    if not (isfinite(lo) and isfinite(hi)):
        g_err |= ERR_NONFINITE
    r.lo = lo
    r.hi = hi
    return r


cdef inline iv pt(double x) nogil:
    return mk(x, x)


cdef inline double add_rd(double a, double b) nogil:
    global g_err
    cdef double s = a + b
    cdef double bb = s - a
    cdef double e = (a - (s - bb)) + (b - bb)
    if not isfinite(s):
        g_err |= ERR_NONFINITE
    if e >= 0.0:
        return s
    return _down(s)


cdef inline double add_ru(double a, double b) nogil:
    global g_err
    cdef double s = a + b
    cdef double bb = s - a
    cdef double e = (a - (s - bb)) + (b - bb)
    if not isfinite(s):
        g_err |= ERR_NONFINITE
    if e <= 0.0:
        return s
    return _up(s)


cdef inline void two_prod(double a, double b, double *p, double *e) nogil:
    cdef double t, ah, al, bh, bl
    p[0] = a * b
    t = SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    e[0] = al * bl - (((p[0] - ah * bh) - al * bh) - ah * bl)


cdef inline int mul_sign(double a, double b, double p) nogil:
    global g_err
    cdef double pp, e
    if not isfinite(p):
        g_err |= ERR_NONFINITE
        return 0
    if a == 0.0 or b == 0.0:
        return 0
    if fabs(p) < TINY or fabs(a) > HUGE or fabs(b) > HUGE:
        return 2
    two_prod(a, b, &pp, &e)
    return (e > 0.0) - (e < 0.0)


cdef inline double mul_rd(double a, double b) nogil:
    cdef double p = a * b
    cdef int sg = mul_sign(a, b, p)
    if sg == 0 or sg == 1:
        return p
    return _down(p)


cdef inline double mul_ru(double a, double b) nogil:
    cdef double p = a * b
    cdef int sg = mul_sign(a, b, p)
    if sg == 0 or sg == -1:
        return p
    return _up(p)


cdef inline int div_sign(double a, double b, double q) nogil:
    global g_err
    cdef double p, e, r
    if not isfinite(q):
        g_err |= ERR_NONFINITE
        return 0
    if a == 0.0:
        return 0
    if fabs(q) < TINY or fabs(q) > HUGE or fabs(b) > HUGE or fabs(a) < TINY:
        return 2
    two_prod(q, b, &p, &e)
    r = (a - p) - e
    if r == 0.0:
        return 0
    if (r > 0.0) == (b > 0.0):
        return 1
    return -1


cdef inline double div_rd(double a, double b) nogil:
    cdef double q = a / b
    cdef int sg = div_sign(a, b, q)
    if sg == 0 or sg == 1:
        return q
    return _down(q)


cdef inline double div_ru(double a, double b) nogil:
    cdef double q = a / b
    cdef int sg = div_sign(a, b, q)
    if sg == 0 or sg == -1:
        return q
    return _up(q)


cdef inline iv ivadd(iv a, iv b) nogil:
    return mk(add_rd(a.lo, b.lo), add_ru(a.hi, b.hi))


cdef inline iv ivsub(iv a, iv b) nogil:
    return mk(add_rd(a.lo, -b.hi), add_ru(a.hi, -b.lo))


cdef inline iv ivneg(iv a) nogil:
    return mk(-a.hi, -a.lo)


cdef inline iv ivmul(iv a, iv b) nogil:
    cdef double al = a.lo, ah = a.hi, bl = b.lo, bh = b.hi
    cdef double lo, hi, t
    if al >= 0.0:
        if bl >= 0.0:
            return mk(mul_rd(al, bl), mul_ru(ah, bh))
        if bh <= 0.0:
            return mk(mul_rd(ah, bl), mul_ru(al, bh))
        return mk(mul_rd(ah, bl), mul_ru(ah, bh))
    if ah <= 0.0:
        if bl >= 0.0:
            return mk(mul_rd(al, bh), mul_ru(ah, bl))
        if bh <= 0.0:
            return mk(mul_rd(ah, bh), mul_ru(al, bl))
        return mk(mul_rd(al, bh), mul_ru(al, bl))
    if bl >= 0.0:
        return mk(mul_rd(al, bh), mul_ru(ah, bh))
    if bh <= 0.0:
        return mk(mul_rd(ah, bl), mul_ru(al, bl))
    lo = mul_rd(al, bh)
    t = mul_rd(ah, bl)
    if t < lo:
        lo = t
    hi = mul_ru(al, bl)
    t = mul_ru(ah, bh)
    if t > hi:
        hi = t
    return mk(lo, hi)


cdef inline iv ivdiv(iv a, iv b) nogil:
    global g_err
    cdef double al = a.lo, ah = a.hi, bl = b.lo, bh = b.hi
    if bl <= 0.0 and 0.0 <= bh:
        g_err |= ERR_ZERODIV
        return mk(0.0, 0.0)
    if bl > 0.0:
        if al >= 0.0:
            return mk(div_rd(al, bh), div_ru(ah, bl))
        if ah <= 0.0:
            return mk(div_rd(al, bl), div_ru(ah, bh))
        return mk(div_rd(al, bl), div_ru(ah, bl))
    if al >= 0.0:
        return mk(div_rd(ah, bh), div_ru(al, bl))
    if ah <= 0.0:
        return mk(div_rd(ah, bl), div_ru(al, bh))
    return mk(div_rd(ah, bh), div_ru(al, bh))


cdef inline iv ivpow(iv a, int n) nogil:
    cdef iv out = pt(1.0)
    cdef int i
    for i in range(n):
        out = ivmul(out, a)
    return out


cdef inline iv ivhull(iv a, iv b) nogil:
    return mk(a.lo if a.lo < b.lo else b.lo, a.hi if a.hi > b.hi else b.hi)


cdef inline double ivmid(iv a) nogil:
    cdef double m = 0.5 * a.lo + 0.5 * a.hi
    if m < a.lo:
        m = a.lo
    if m > a.hi:
        m = a.hi
    return m


cdef inline double ivwidth(iv a) nogil:
    return add_ru(a.hi, -a.lo)


# -- primitive wrappers (parity tests) -------------------------------------------

def _wrap(iv r):
    global g_err
    cdef int e = g_err
    g_err = 0
    if e & ERR_ZERODIV:
        raise ZeroDivisionError("divisor contains zero")
    if e & ERR_NONFINITE:
        raise ArithmeticError("non-finite endpoint")
    return (r.lo, r.hi)


def iv_add(double alo, double ahi, double blo, double bhi):
    return _wrap(ivadd(mk(alo, ahi), mk(blo, bhi)))


def iv_sub(double alo, double ahi, double blo, double bhi):
    return _wrap(ivsub(mk(alo, ahi), mk(blo, bhi)))


def iv_mul(double alo, double ahi, double blo, double bhi):
    return _wrap(ivmul(mk(alo, ahi), mk(blo, bhi)))


def iv_div(double alo, double ahi, double blo, double bhi):
    return _wrap(ivdiv(mk(alo, ahi), mk(blo, bhi)))


# -- validated Euler step ----------------------------------------------------------

cdef struct vstate:
    double eta
    iv U
    iv W
    iv T


cdef inline void far_rhs_iv(iv X, iv U, iv W, iv T, iv C, iv *dU, iv *dW, iv *dT) nogil:
    cdef iv TWO = pt(2.0)
    cdef iv cu = ivadd(C, U)
    cdef iv ecu = ivmul(X, cu)
    cdef iv tmc = ivsub(TWO, C)
    cdef iv cm2 = ivsub(C, TWO)
    dT[0] = ivdiv(ivmul(ivmul(tmc, T), U), ecu)
    dW[0] = ivadd(ivdiv(ivneg(ivmul(C, W)), ecu),
                  ivdiv(ivmul(ivmul(C, cm2), T), ivmul(ivmul(cu, cu), ivmul(ivmul(X, X), X))))
    dU[0] = ivdiv(ivmul(C, W), X)


cdef inline int vstep(vstate *st, double x1, double c, int s, int k_up, int k_dn) nogil:
    """Advance st to node x1. Returns 0 on success, an error flag otherwise."""
    global g_err
    cdef iv ONE = pt(1.0), TWO = pt(2.0), FOUR = pt(4.0), HALF = pt(0.5)
    cdef iv U = st.U, W = st.W, T = st.T
    cdef iv X0, X1, H, E, C, cm2, tmc, rho, s2c, x03, WM, cu_min
    cdef double th_hi, th_lo, w_max, u_max, w_min
    cdef iv bT, bU, bW
    cdef iv MU, MW, MT, dU, dW, dT, DU, DW, DT
    cdef iv cu, cu2, cu3, eta2, eta3, ecu
    cdef iv J_WW, J_WU, J_WT, J_UW, J_TU, J_TT
    cdef iv PW, PU, PT
    cdef iv e2, e4, ewc, U2, T2, W2, HH

    g_err = 0
    if T.lo <= 0.0:
        return ERR_POSITIVITY
    X0 = pt(st.eta)
    X1 = pt(x1)
    H = ivsub(X1, X0)
    E = mk(st.eta, x1)
    C = pt(c)

    # a-priori box over [x0, x1]
    cm2 = ivsub(C, TWO)
    rho = ivdiv(X1, X0)
    th_hi = ivmul(T, ivpow(rho, k_up)).hi
    th_lo = ivdiv(T, ivpow(rho, -k_dn)).lo
    s2c = ivmul(pt(<double>(s * s)), C)
    x03 = ivmul(ivmul(X0, X0), X0)
    w_max = ivadd(W, ivdiv(ivmul(ivmul(s2c, pt(th_hi)), H), ivmul(cm2, x03))).hi
    WM = pt(w_max)
    u_max = ivadd(U, ivdiv(ivmul(ivmul(C, WM), H), X0)).hi
    cu_min = ivadd(C, pt(U.lo))
    if g_err:
        return g_err
    if cu_min.lo <= 0.0:
        return ERR_DENOM
    w_min = ivsub(W, ivdiv(ivmul(H, ivmul(C, WM)), ivmul(X0, cu_min))).lo
    bT = ivhull(T, mk(th_lo, th_hi))
    bU = ivhull(U, mk(U.lo, u_max))
    bW = ivhull(W, mk(w_min, w_max))

    # Euler update at the midpoints
    MU = pt(ivmid(U))
    MW = pt(ivmid(W))
    MT = pt(ivmid(T))
    far_rhs_iv(X0, MU, MW, MT, C, &dU, &dW, &dT)
    DU = ivsub(U, MU)
    DW = ivsub(W, MW)
    DT = ivsub(T, MT)

    # Jacobian over the state intervals at x0
    tmc = ivsub(TWO, C)
    cm2 = ivsub(C, TWO)
    cu = ivadd(C, U)
    cu2 = ivmul(cu, cu)
    cu3 = ivmul(cu2, cu)
    eta2 = ivmul(X0, X0)
    eta3 = ivmul(eta2, X0)
    ecu = ivmul(X0, cu)
    J_WW = ivneg(ivdiv(C, ecu))
    J_WU = ivdiv(ivmul(C, ivsub(ivmul(ivmul(cu, eta2), W), ivmul(ivmul(TWO, cm2), T))), ivmul(cu3, eta3))
    J_WT = ivdiv(ivmul(C, cm2), ivmul(cu2, eta3))
    J_UW = ivdiv(C, X0)
    J_TU = ivdiv(ivmul(ivmul(C, tmc), T), ivmul(cu2, X0))
    J_TT = ivdiv(ivmul(tmc, U), ecu)
    PW = ivadd(ivadd(ivmul(ivadd(ONE, ivmul(H, J_WW)), DW), ivmul(ivmul(H, J_WU), DU)), ivmul(ivmul(H, J_WT), DT))
    PU = ivadd(ivmul(ivmul(H, J_UW), DW), DU)
    PT = ivadd(ivmul(ivmul(H, J_TU), DU), ivmul(ivadd(ONE, ivmul(H, J_TT)), DT))

    # second derivatives over eta in [x0, x1] and the box
    cm2 = ivsub(C, TWO)
    cu = ivadd(C, bU)
    cu2 = ivmul(cu, cu)
    cu3 = ivmul(cu2, cu)
    e2 = ivmul(E, E)
    e4 = ivmul(e2, e2)
    ewc = ivmul(ivmul(e2, bW), cu)
    U2 = ivdiv(ivmul(C, ivsub(ivmul(ivmul(C, cm2), bT), ivmul(ewc, ivadd(cu, C)))), ivmul(e4, cu2))
    T2 = ivdiv(ivmul(ivmul(cm2, bT),
                     ivsub(ivadd(ivmul(ivmul(bU, bU), ivsub(C, ONE)), ivmul(C, bU)), ivmul(ivmul(C, C), bW))),
               ivmul(e2, cu2))
    W2 = ivdiv(ivmul(C, ivsub(ivmul(ewc, ivadd(ivadd(cu, C), ivmul(C, bW))),
                              ivmul(ivmul(cm2, bT),
                                    ivadd(ivadd(ivmul(ivadd(C, ONE), bU), ivmul(ivmul(TWO, C), bW)), ivmul(FOUR, C))))),
               ivmul(e4, cu3))
    HH = ivmul(ivmul(H, H), HALF)
    if g_err:
        return g_err
    st.U = ivadd(MU, ivadd(ivadd(ivmul(H, dU), PU), ivmul(HH, U2)))
    st.W = ivadd(MW, ivadd(ivadd(ivmul(H, dW), PW), ivmul(HH, W2)))
    st.T = ivadd(MT, ivadd(ivadd(ivmul(H, dT), PT), ivmul(HH, T2)))
    st.eta = x1
    return g_err


cdef inline int wider(iv a, double cap) nogil:
    return ivwidth(a) > cap


_REASONS = {
    ERR_NONFINITE: "non-finite interval endpoint",
    ERR_ZERODIV: "interval division by an interval containing zero",
    ERR_POSITIVITY: "Theta_hat enclosure not positive",
    ERR_DENOM: "c_l + U_hat reaches zero",
}


def validated_run(double c, int s, double eta_s, double eta_target, long n_steps, state,
                  double width_cap, long checkpoint_every):
    """Compiled loop of validated Euler steps; same contract as the Python version."""
    from . import certify
    from .interval import Interval

    cdef int k_up, k_dn
    k_up, k_dn = certify.apriori_exponents(s, c)
    cdef vstate st, prev
    cdef long n, done = n_steps
    cdef int code = 0
    cdef long decreases = 0
    cdef double hstep = (eta_target - eta_s) / n_steps
    cdef double x1
    cdef double w0, w1, w2, p0, p1, p2
    cdef long n_ck = n_steps // checkpoint_every if checkpoint_every > 0 else 0
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ck = np.empty((n_ck, 7))
    cdef long j = 0
    reason = ""

    st.eta = state.eta
    st.U = mk(state.U_hat.lo, state.U_hat.hi)
    st.W = mk(state.W_hat.lo, state.W_hat.hi)
    st.T = mk(state.Theta_hat.lo, state.Theta_hat.hi)
    p0 = ivwidth(st.U)
    p1 = ivwidth(st.W)
    p2 = ivwidth(st.T)
    with nogil:
        for n in range(n_steps):
            if n + 1 >= n_steps:
                x1 = eta_target
            else:
                x1 = eta_s + (n + 1) * hstep
            prev = st
            code = vstep(&st, x1, c, s, k_up, k_dn)
            if code:
                st = prev
                done = n
                break
            w0 = ivwidth(st.U)
            w1 = ivwidth(st.W)
            w2 = ivwidth(st.T)
            if w0 < p0 or w1 < p1 or w2 < p2:
                decreases += 1
            p0 = w0
            p1 = w1
            p2 = w2
            if w0 > width_cap or w1 > width_cap or w2 > width_cap:
                code = -1
                done = n + 1
                break
            if st.T.lo <= 0.0:
                code = -2
                done = n + 1
                break
            if c + st.U.lo <= 0.0:
                code = -3
                done = n + 1
                break
            if checkpoint_every > 0 and (n + 1) % checkpoint_every == 0 and j < n_ck:
                ck[j, 0] = st.eta
                ck[j, 1] = st.U.lo
                ck[j, 2] = st.U.hi
                ck[j, 3] = st.W.lo
                ck[j, 4] = st.W.hi
                ck[j, 5] = st.T.lo
                ck[j, 6] = st.T.hi
                j += 1

    def mkstate(double eta, double a, double b, double c_, double d, double e, double f):
        return certify.IntervalState(eta, Interval(a, b), Interval(c_, d), Interval(e, f))

    final = mkstate(st.eta, st.U.lo, st.U.hi, st.W.lo, st.W.hi, st.T.lo, st.T.hi)
    if code > 0:
        reason = "; ".join(v for k, v in _REASONS.items() if code & k) + f" at eta={st.eta}"
    elif code < 0:
        reason = certify.abort_reason(final, c, width_cap)
    checkpoints = [mkstate(*ck[i]) for i in range(j)]
    return final, done, reason, checkpoints, decreases


# -- RK4 sweeps of the profile ODEs ------------------------------------------------

cdef inline int near_rhs_c(double c, double x, double U, double W, double T,
                           double *dU, double *dW, double *dT) nogil:
    cdef double ut = c * x + U
    cdef double cm2
    if ut == 0.0 or x == 0.0:
        return 1
    cm2 = c - 2.0
    dT[0] = cm2 * T / ut
    dW[0] = cm2 * T / (ut * ut) - W / ut
    dU[0] = W + U / x
    return 0


cdef inline int far_rhs_c(double c, double x, double U, double W, double T,
                          double *dU, double *dW, double *dT) nogil:
    cdef double cu = c + U
    cdef double ecu, tmc, cm2
    if cu == 0.0 or x == 0.0:
        return 1
    ecu = x * cu
    tmc = 2.0 - c
    cm2 = c - 2.0
    dT[0] = tmc * T * U / ecu
    dW[0] = -(c * W) / ecu + c * cm2 * T / ((cu * cu) * (x * x * x))
    dU[0] = c * W / x
    return 0


ctypedef int (*rhs_fn)(double, double, double, double, double, double *, double *, double *) noexcept nogil


cdef _rk4(rhs_fn f, double c, double x0, double x1, long n, double U, double W, double T, long stride):
    cdef double h = (x1 - x0) / n
    cdef double hh = 0.5 * h
    cdef double h6 = h / 6.0
    cdef long ns = n // stride + 1 if stride > 0 else 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.empty(ns)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] Us = np.empty(ns)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] Ws = np.empty(ns)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] Ts = np.empty(ns)
    cdef double a1, b1, c1, a2, b2, c2, a3, b3, c3, a4, b4, c4, x
    cdef long i, j = 0
    cdef int bad = 0
    cdef double where = x0
    if ns:
        xs[0] = x0
        Us[0] = U
        Ws[0] = W
        Ts[0] = T
        j = 1
    with nogil:
        for i in range(n):
            x = x0 + i * h
            bad = f(c, x, U, W, T, &a1, &b1, &c1)
            bad |= f(c, x + hh, U + hh * a1, W + hh * b1, T + hh * c1, &a2, &b2, &c2)
            bad |= f(c, x + hh, U + hh * a2, W + hh * b2, T + hh * c2, &a3, &b3, &c3)
            bad |= f(c, x + h, U + h * a3, W + h * b3, T + h * c3, &a4, &b4, &c4)
            if bad:
                where = x
                break
            U = U + h6 * (((a1 + 2.0 * a2) + 2.0 * a3) + a4)
            W = W + h6 * (((b1 + 2.0 * b2) + 2.0 * b3) + b4)
            T = T + h6 * (((c1 + 2.0 * c2) + 2.0 * c3) + c4)
            if not (isfinite(U) and isfinite(W) and isfinite(T)):
                bad = 2
                where = x + h
                break
            if ns and (i + 1) % stride == 0:
                xs[j] = x0 + (i + 1) * h
                Us[j] = U
                Ws[j] = W
                Ts[j] = T
                j += 1
    if bad == 1:
        raise KernelError(1, where, f"profile rhs singular at {where!r}")
    if bad:
        raise KernelError(2, where, f"non-finite state at {where!r}")
    return U, W, T, xs[:j], Us[:j], Ws[:j], Ts[:j]


def rk4_near(double c, double x0, double x1, long n, double U, double W, double T, long stride=0):
    return _rk4(near_rhs_c, c, x0, x1, n, U, W, T, stride)


def rk4_far(double c, double x0, double x1, long n, double U, double W, double T, long stride=0):
    return _rk4(far_rhs_c, c, x0, x1, n, U, W, T, stride)


def near_rhs(double c, double x, double U, double W, double T):
    cdef double a, b, d
    if near_rhs_c(c, x, U, W, T, &a, &b, &d):
        raise KernelError(1, x, f"near-field rhs singular at xi={x!r}")
    return a, b, d


def far_rhs(double c, double x, double U, double W, double T):
    cdef double a, b, d
    if far_rhs_c(c, x, U, W, T, &a, &b, &d):
        raise KernelError(1, x, f"far-field rhs singular at eta={x!r}")
    return a, b, d


# -- particle kernels -----------------------------------------------------------------

cdef void _velocity(const double[::1] q, const double[::1] w, double[::1] u) nogil:
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t j
    cdef double acc = 0.0, gj, gj1
    u[0] = 0.0
    if n < 2:
        return
    u[n - 1] = 0.0
    for j in range(n - 2, 0, -1):
        gj = w[j] / q[j]
        gj1 = w[j + 1] / q[j + 1]
        acc = acc + 0.5 * (gj + gj1) * (q[j + 1] - q[j])
        u[j] = -(q[j] * acc)


cdef void _theta_x(const double[::1] q, const double[::1] th, double[::1] out) nogil:
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t i, a, b, e
    out[0] = 0.0
    if n < 3:
        if n == 2:
            out[1] = (th[1] - th[0]) / (q[1] - q[0])
        return
    for i in range(1, n - 1):
        out[i] = ((th[i] - th[i + 1]) / (q[i] - q[i + 1]) + (th[i] - th[i - 1]) / (q[i] - q[i - 1])) \
            - (th[i + 1] - th[i - 1]) / (q[i + 1] - q[i - 1])
    a = n - 3
    b = n - 2
    e = n - 1
    out[e] = ((th[e] - th[a]) / (q[e] - q[a]) + (th[e] - th[b]) / (q[e] - q[b])) \
        - (th[b] - th[a]) / (q[b] - q[a])


def velocity(q, w):
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    out = np.zeros(qv.shape[0])
    cdef double[::1] ov = out
    _velocity(qv, wv, ov)
    return out


def theta_x(q, th):
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(th, dtype=np.float64)
    out = np.zeros(qv.shape[0])
    cdef double[::1] ov = out
    _theta_x(qv, tv, ov)
    return out


def max_compression(q, u):
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t i, n = qv.shape[0]
    cdef double best = 0.0, r
    with nogil:
        for i in range(n - 1):
            r = (uv[i] - uv[i + 1]) / (qv[i + 1] - qv[i])
            if r > best:
                best = r
    return best


def rk4_particles(q, w, th, double dt):
    """One RK4 step of dq/dt = u(q, w), dw/dt = theta_x(q, theta); theta is fixed."""
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(th, dtype=np.float64)
    cdef Py_ssize_t n = qv.shape[0], i
    cdef double hh = 0.5 * dt, h6 = dt / 6.0
    buf = np.empty((10, n))
    cdef double[:, ::1] B = buf
    cdef double[::1] a1 = B[0], b1 = B[1], a2 = B[2], b2 = B[3], a3 = B[4], b3 = B[5]
    cdef double[::1] a4 = B[6], b4 = B[7], qs = B[8], ws = B[9]
    qn = np.empty(n)
    wn = np.empty(n)
    cdef double[::1] qo = qn, wo = wn
    with nogil:
        _velocity(qv, wv, a1)
        _theta_x(qv, tv, b1)
        for i in range(n):
            qs[i] = qv[i] + hh * a1[i]
            ws[i] = wv[i] + hh * b1[i]
        _velocity(qs, ws, a2)
        _theta_x(qs, tv, b2)
        for i in range(n):
            qs[i] = qv[i] + hh * a2[i]
            ws[i] = wv[i] + hh * b2[i]
        _velocity(qs, ws, a3)
        _theta_x(qs, tv, b3)
        for i in range(n):
            qs[i] = qv[i] + dt * a3[i]
            ws[i] = wv[i] + dt * b3[i]
        _velocity(qs, ws, a4)
        _theta_x(qs, tv, b4)
        for i in range(n):
            qo[i] = qv[i] + h6 * (((a1[i] + 2.0 * a2[i]) + 2.0 * a3[i]) + a4[i])
            wo[i] = wv[i] + h6 * (((b1[i] + 2.0 * b2[i]) + 2.0 * b3[i]) + b4[i])
    return qn, wn
