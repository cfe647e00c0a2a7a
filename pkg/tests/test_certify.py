"""Validated far-field integration and sign certificates."""
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ckyblowup import _backend, certify
from ckyblowup.certify import (
    GNEGATIVE,
    GPOSITIVE,
    INCONCLUSIVE,
    AprioriBox,
    IntervalState,
    abort_reason,
    apriori_enclosure,
    certify_sign,
    default_eta_s,
    far_rhs_interval,
    jacobian_enclosure,
    second_derivative_enclosure,
    sign_conditions,
    validated_initial,
    validated_step,
)
from ckyblowup.interval import Interval
from ckyblowup.odes import rhs_far
from ckyblowup.series import ScalingParams, build_coefficients, evaluate_series_far


def _far(c):
    def f(x, y):
        return list(rhs_far(x, tuple(y), c))
    return f


def _truth(c, eta0, y0, etas):
    sol = solve_ivp(_far(c), (eta0, etas[-1]), y0, method="DOP853", t_eval=etas,
                    rtol=1e-13, atol=1e-16)
    return sol.y.T


def _contains(state, y, slack=0.0):
    U, W, T = y
    return all(iv.lo - slack <= v <= iv.hi + slack
               for iv, v in ((state.U_hat, U), (state.W_hat, W), (state.Theta_hat, T)))


@pytest.fixture(scope="module")
def cert_s2_c3():
    return certify_sign(2, 3.0, checkpoint_every=100_000)


# -- initial enclosure --------------------------------------------------------------

@pytest.mark.parametrize("s,c,eta", [(2, 3.0, 0.1), (2, 8.0, 0.7), (3, 3.3, 0.1)])
def test_initial_enclosure_contains_series(s, c, eta):
    st = validated_initial(s, c, 20, eta)
    co = build_coefficients(ScalingParams(s, c), 50)
    ref = evaluate_series_far(co, eta)
    assert _contains(st, (ref.U, ref.W, ref.Theta))
    assert max(st.U_hat.width, st.W_hat.width, st.Theta_hat.width) < 1e-12


def test_default_start_point():
    assert default_eta_s(2, 3.0) == 0.1
    assert default_eta_s(2, 8.0) == 0.7


# -- enclosures of f, J and y'' -----------------------------------------------------

def _sample_box(rng, box, n=200):
    for _ in range(n):
        yield tuple(rng.uniform(iv.lo, iv.hi) for iv in (box.u, box.w, box.theta))


def test_rhs_enclosure_contains_point_values():
    rng = np.random.default_rng(1)
    C = Interval(3.0)
    box = AprioriBox(theta=Interval(0.5, 0.6), u=Interval(-1.2, -1.1), w=Interval(0.3, 0.35))
    X = Interval(0.4, 0.41)
    dU, dW, dT = far_rhs_interval(X, box.u, box.w, box.theta, C)
    for U, W, T in _sample_box(rng, box):
        for x in (0.4, 0.405, 0.41):
            d = rhs_far(x, (U, W, T), 3.0)
            assert d.U in dU and d.W in dW and d.Theta in dT


def test_jacobian_enclosure_contains_finite_differences():
    rng = np.random.default_rng(2)
    c = 3.5
    box = AprioriBox(theta=Interval(0.5, 0.6), u=Interval(-1.2, -1.1), w=Interval(0.3, 0.35))
    J = jacobian_enclosure(0.5, box, c)
    h = 1e-6
    for U, W, T in _sample_box(rng, box, 50):
        y = np.array([W, U, T])

        def f(v):
            d = rhs_far(0.5, (v[1], v[0], v[2]), c)
            return np.array([d.W, d.U, d.Theta])

        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            col = (f(y + e) - f(y - e)) / (2 * h)
            for i in range(3):
                iv = J[i][j]
                tol = 1e-6 * (1 + abs(col[i]))
                assert iv.lo - tol <= col[i] <= iv.hi + tol, (i, j)


def test_second_derivative_enclosure_contains_trajectory_values():
    c = 3.0
    co = build_coefficients(ScalingParams(2, c), 50)
    st = evaluate_series_far(co, 0.1)
    etas = np.linspace(0.5, 0.51, 21)
    ys = _truth(c, 0.1, st.as_array(), np.concatenate([[0.1], etas]))[1:]
    box = AprioriBox(
        theta=Interval(ys[:, 2].min() * 0.999, ys[:, 2].max() * 1.001),
        u=Interval(ys[:, 0].min() - 1e-3, ys[:, 0].max() + 1e-3),
        w=Interval(ys[:, 1].min() - 1e-3, ys[:, 1].max() + 1e-3),
    )
    W2, U2, T2 = second_derivative_enclosure(Interval(0.5, 0.51), box, c)
    # second differences of the DOP853 trajectory
    h = etas[1] - etas[0]
    dd = (ys[2:] - 2 * ys[1:-1] + ys[:-2]) / h ** 2
    for row in dd:
        assert U2.lo - 1e-4 <= row[0] <= U2.hi + 1e-4
        assert W2.lo - 1e-4 <= row[1] <= W2.hi + 1e-4
        assert T2.lo - 1e-4 <= row[2] <= T2.hi + 1e-4


def test_apriori_box_contains_step():
    c = 3.0
    st = validated_initial(2, c, 20, 0.1)
    h = 1e-3
    box = apriori_enclosure(st, h, c, 2)
    y0 = [st.U_hat.mid, st.W_hat.mid, st.Theta_hat.mid]
    ys = _truth(c, 0.1, y0, np.linspace(0.1, 0.1 + h, 11))
    for U, W, T in ys:
        assert U in box.u and W in box.w and T in box.theta


def test_apriori_box_contains_fine_rk4_for_random_states():
    rng = np.random.default_rng(11)
    kern = _backend.kernels()
    for _ in range(100):
        c = rng.uniform(2.5, 8.0)
        s = int(rng.integers(2, 6))
        eta = rng.uniform(0.2, 3.0)
        U, W, T = rng.uniform(-1.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.05, 2.0)
        h = 1e-3
        st = IntervalState(eta, Interval(U), Interval(W), Interval(T))
        box = apriori_enclosure(st, h, c, s)
        _, _, _, _, Us, Ws, Ts = kern.rk4_far(c, eta, eta + h, 1000, U, W, T, 1)
        assert np.all((Us >= box.u.lo) & (Us <= box.u.hi))
        assert np.all((Ws >= box.w.lo) & (Ws <= box.w.hi))
        assert np.all((Ts >= box.theta.lo) & (Ts <= box.theta.hi))


def test_validated_step_contains_true_step():
    c = 3.0
    st = validated_initial(2, c, 20, 0.1)
    y0 = [st.U_hat.mid, st.W_hat.mid, st.Theta_hat.mid]
    cur = st
    for _ in range(50):
        cur = validated_step(cur, 1e-4, c, 2)
    ys = _truth(c, 0.1, y0, np.array([0.1, cur.eta]))
    assert _contains(cur, ys[-1])


def test_step_size_must_be_positive():
    st = validated_initial(2, 3.0, 20, 0.1)
    with pytest.raises(certify.CertifyError):
        validated_step(st, 0.0, 3.0, 2)


# -- full certificates ----------------------------------------------------------

def test_certificate_s2_c3_negative(cert_s2_c3):
    cert = cert_s2_c3
    assert cert.verdict == GNEGATIVE
    assert cert.final_state.eta == 3.0
    assert cert.condition_values["negativity_functional"].hi < 0.0
    assert -2.0 < cert.final_state.U_hat.lo < cert.final_state.U_hat.hi < 0.0


def test_checkpoints_contain_reference_solution(cert_s2_c3):
    cert = cert_s2_c3
    assert len(cert.checkpoints) == 10
    co = build_coefficients(ScalingParams(2, 3.0), 50)
    y0 = evaluate_series_far(co, 0.1).as_array()
    # the last checkpoint is the final node
    assert cert.checkpoints[-1] == cert.final_state
    etas = np.array([cp.eta for cp in cert.checkpoints])
    ys = _truth(3.0, 0.1, y0, etas)
    for cp, y in zip(cert.checkpoints, ys):
        assert _contains(cp, y), cp.eta


def test_checkpoints_contain_fine_rk4_on_same_nodes(cert_s2_c3):
    # RK4 on the certification nodes, one substep per node
    kern = _backend.kernels()
    n = cert_s2_c3.config["n_steps"]
    co = build_coefficients(ScalingParams(2, 3.0), 50)
    st = evaluate_series_far(co, 0.1)
    U, W, T = kern.rk4_far(3.0, 0.1, 3.0, n, st.U, st.W, st.Theta)[:3]
    assert _contains(cert_s2_c3.final_state, (U, W, T))


def test_certificate_s2_c8_positive():
    cert = certify_sign(2, 8.0)
    assert cert.verdict == GPOSITIVE
    assert cert.config["eta_s"] == 0.7
    assert cert.final_state.U_hat.lo > 0.0


def test_sign_conditions_inconclusive_straddling_zero():
    st = IntervalState(3.0, Interval(-0.1, 0.1), Interval(0.5), Interval(1.0))
    verdict, vals = sign_conditions(st, 3.0)
    assert verdict == INCONCLUSIVE and "u0" in vals


def test_abort_on_width_cap():
    cert = certify_sign(2, 3.0, h=1e-3, width_cap=1e-12)
    assert cert.verdict == INCONCLUSIVE
    assert "exceeds cap" in cert.diagnostics["abort"]


def test_abort_reason_messages():
    good = IntervalState(1.0, Interval(-1.0), Interval(0.5), Interval(1.0))
    assert abort_reason(good, 3.0, 1e-2) == ""
    bad = IntervalState(1.0, Interval(-1.0), Interval(0.5), Interval(-1e-3, 1.0))
    assert "exceeds cap" in abort_reason(bad, 3.0, 1e-2)
    assert "reaches zero" in abort_reason(bad, 3.0, 10.0)
    neg = IntervalState(1.0, Interval(-3.5, -3.4), Interval(0.5), Interval(1.0))
    assert "c_l + U_hat" in abort_reason(neg, 3.0, 10.0)


def test_validated_run_backend_parity():
    if len(_backend.available()) < 2:
        pytest.skip("compiled core not built")
    st0 = validated_initial(2, 3.0, 20, 0.1)
    eta1 = certify.node(0.1, 3.0, 1_000_000, 3000)
    outs = [_backend.kernels(b).validated_run(3.0, 2, 0.1, eta1, 3000, st0, 1e-2, 1000)
            for b in ("compiled", "python")]
    assert outs[0][0] == outs[1][0]
    assert outs[0][1:3] == outs[1][1:3]
    assert outs[0][3] == outs[1][3]


def test_certificate_json(cert_s2_c3):
    d = cert_s2_c3.to_json()
    assert d["verdict"] == GNEGATIVE
    assert d["params"] == {"s": 2, "c_l": 3.0}
    assert len(d["final_state"]["U_hat"]) == 2
    assert d["config"]["n_steps"] == cert_s2_c3.config["n_steps"]
