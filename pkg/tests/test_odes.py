"""Profile ODEs: right-hand sides, chart maps, RK4, G, shooting, profiles and limits."""
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ckyblowup import certify
from ckyblowup.odes import (
    Chart,
    GConfig,
    ProfileError,
    ProfileState,
    ShootingError,
    SingularRHS,
    compute_profile,
    eval_G,
    far_limits,
    far_to_infinity,
    far_to_near,
    find_root_cl,
    infinity_initial,
    infinity_to_far,
    integrate_chart,
    near_to_far,
    rhs_far,
    rhs_infinity,
    rhs_near,
    rk4_integrate,
)
from ckyblowup.series import ScalingParams, build_coefficients, evaluate_series_far

ROOT_S2 = 3.7956934  # shooting root for s = 2 with the default pipeline


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(20240518)


def _random_far_states(rng, n=100):
    for _ in range(n):
        c = rng.uniform(2.2, 9.0)
        eta = rng.uniform(0.2, 5.0)
        U = rng.uniform(-1.5, 3.0)
        W = rng.uniform(0.0, 2.0)
        T = rng.uniform(0.0, 3.0)
        yield c, ProfileState(Chart.FAR, eta, U, W, T)


# -- right-hand sides -------------------------------------------------------------

def test_theta_zero_is_invariant():
    d = rhs_near(0.5, (0.3, 0.2, 0.0), 3.0)
    assert d.Theta == 0.0
    assert rhs_far(0.5, (0.3, 0.2, 0.0), 3.0).Theta == 0.0


def test_w_prime_positive_where_w_vanishes():
    d = rhs_near(0.5, (0.1, 0.0, 0.7), 3.0)
    assert d.W > 0.0


def test_far_trivial_ray():
    d = rhs_far(1.3, (0.4, 0.0, 0.0), 3.5)
    assert d == (0.0, 0.0, 0.0)


def test_far_u_prime_sign():
    d = rhs_far(2.0, (0.1, 0.3, 1.0), 4.0)
    assert d.U == pytest.approx(4.0 * 0.3 / 2.0) and d.U > 0


def test_singular_rhs():
    with pytest.raises(SingularRHS):
        rhs_near(1.0, (-3.0, 1.0, 1.0), 3.0)
    with pytest.raises(SingularRHS):
        rhs_far(1.0, (-3.0, 1.0, 1.0), 3.0)
    with pytest.raises(SingularRHS):
        rhs_infinity(0.0, (1.0, 1.0, 1.0), 3.0)
    with pytest.raises(SingularRHS):
        rhs_infinity(0.5, (-6.0, 1.0, 1.0), 3.0)


def test_near_to_far_chain_rule(rng):
    """d/deta of the mapped near-field state equals rhs_far at the mapped state."""
    for c, far in _random_far_states(rng):
        near = far_to_near(far, c)
        if c * near.position + near.U == 0.0:
            continue
        xi = near.position
        dn = rhs_near(xi, near, c)
        dxi = c * far.position ** (c - 1.0)  # d xi / d eta
        p = 2.0 / c - 1.0
        dU = (dn.U / xi - near.U / xi ** 2) * dxi
        dW = dn.W * dxi
        dT = (dn.Theta * xi ** p + near.Theta * p * xi ** (p - 1.0)) * dxi
        df = rhs_far(far.position, far, c)
        for a, b in ((dU, df.U), (dW, df.W), (dT, df.Theta)):
            assert a == pytest.approx(b, rel=1e-10, abs=1e-12 * (abs(b) + 1))


def test_far_to_infinity_chain_rule(rng):
    for c, far in _random_far_states(rng):
        inf = far_to_infinity(far, c)
        eta = far.position
        df = rhs_far(eta, far, c)
        dz = -eta * eta  # d eta / d zeta
        want = ((df.U * eta + far.U) * dz, (df.W * eta + far.W) * dz, df.Theta * dz)
        got = rhs_infinity(inf.position, inf, c)
        for a, b in zip(got, want):
            assert a == pytest.approx(b, rel=1e-10, abs=1e-12 * (abs(b) + 1))


def test_chart_round_trips(rng):
    for c, far in _random_far_states(rng, 20):
        back = near_to_far(far_to_near(far, c), c)
        assert back.U == pytest.approx(far.U, rel=1e-12)
        assert back.Theta == pytest.approx(far.Theta, rel=1e-12)
        back = infinity_to_far(far_to_infinity(far, c), c)
        assert back.W == pytest.approx(far.W, rel=1e-14)


def test_infinity_initial_values():
    st = infinity_initial(0.99, 3.5, 3.8)
    assert st.U == pytest.approx(-3.8 * 0.99)
    assert st.position == 0.0 and st.chart is Chart.INFINITY
    assert rhs_infinity(0.3, (0.0, 1.0, 2.0), 3.0).Theta == 0.0


def test_profile_state_validates():
    with pytest.raises(ValueError):
        ProfileState("near", -1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        ProfileState("sideways", 1.0, 0.0, 0.0, 0.0)


# -- RK4 ----------------------------------------------------------------------------

def test_rk4_order_on_exponential():
    errs = []
    for n in (10, 20, 40):
        y, _, _ = rk4_integrate(lambda x, y: y, 1.0, 0.0, 1.0, n)
        errs.append(abs(y - math.e))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(14.0 < r < 17.0 for r in ratios)


def test_rk4_constant_solution_exact():
    y, xs, ys = rk4_integrate(lambda x, y: np.zeros(3), np.array([1.0, 2.0, 3.0]), 0.0, 5.0, 17, 1)
    assert np.array_equal(y, [1.0, 2.0, 3.0])
    assert len(xs) == 18 and np.all(ys == [1.0, 2.0, 3.0])


def _far_order(backend):
    c = 3.5
    st = ProfileState(Chart.FAR, 1.0, -0.5, 0.3, 1.0)
    ref, _ = integrate_chart(st, 10.0, 64_000, c, backend=backend)
    errs = []
    for n in (250, 500, 1000):
        out, _ = integrate_chart(st, 10.0, n, c, backend=backend)
        errs.append(abs(out.U - ref.U))
    return [math.log2(errs[i] / errs[i + 1]) for i in range(2)]


def test_rk4_observed_order_far_field(backend):
    for p in _far_order(backend):
        assert 3.8 <= p <= 4.2


def test_generic_rk4_matches_kernel():
    c = 3.0
    st = ProfileState(Chart.FAR, 1.0, -0.5, 0.3, 1.0)
    out, _ = integrate_chart(st, 2.0, 200, c, backend="python")

    def f(x, y):
        return np.array(rhs_far(x, tuple(y), c))

    y, _, _ = rk4_integrate(f, st.as_array(), 1.0, 2.0, 200)
    assert y == pytest.approx(out.as_array(), rel=1e-13)


def test_rk4_far_against_dop853():
    c = 3.0
    co = build_coefficients(ScalingParams(2, c), 50)
    st = evaluate_series_far(co, 0.1)
    out, _ = integrate_chart(st, 3.0, 100_000, c)

    def f(x, y):
        return list(rhs_far(x, tuple(y), c))

    sol = solve_ivp(f, (0.1, 3.0), st.as_array(), method="DOP853", rtol=1e-13, atol=1e-16)
    assert out.as_array() == pytest.approx(sol.y[:, -1], rel=1e-9)


def test_rk4_far_agrees_with_certified_midpoints():
    cert = certify.certify_sign(2, 3.0)
    fin = cert.final_state
    co = build_coefficients(ScalingParams(2, 3.0), 50)
    st = evaluate_series_far(co, 0.1)
    out, _ = integrate_chart(st, 3.0, 1_000_000, 3.0)
    assert abs(out.U - fin.U_hat.mid) < 1e-6
    assert abs(out.W - fin.W_hat.mid) < 1e-6
    assert abs(out.Theta - fin.Theta_hat.mid) < 1e-6


def test_far_u_monotone_along_trajectories():
    for c in (3.0, ROOT_S2, 8.0):
        co = build_coefficients(ScalingParams(2, c), 50)
        eta0 = 0.1 if c < 5 else 0.7
        st = evaluate_series_far(co, eta0)
        _, path = integrate_chart(st, 50.0, 200_000, c, sample_every=10)
        pos = path.W[:-1] > 0
        assert np.all(np.diff(path.U)[pos] >= 0.0)


# -- G and shooting -------------------------------------------------------------------

def test_G_signs():
    assert eval_G(2, 3.0) < 0.0
    assert eval_G(2, 8.0) > 0.0


@pytest.mark.parametrize("s", [2, 3])
def test_G_above_minus_two(s):
    for c in (2.5, 3.0, 4.0, 6.0, 8.0, 12.0):
        assert eval_G(s, c) > -2.0


def test_G_sampled_monotone_s2():
    cs = np.linspace(3.0, 8.0, 11)
    g = [eval_G(2, c) for c in cs]
    assert np.all(np.diff(g) > 0.0)


@pytest.mark.parametrize("s,c", [(2, 3.0), (2, 8.0), (3, 3.0)])
def test_G_invariant_under_theta_scaling_at_matched_points(s, c):
    # Theta_s -> 4 Theta_s maps xi -> lam xi with lam^(1-s) = 4, so U/xi at
    # eta corresponds to U/xi at eta * lam^(-1/c) of the unscaled profile
    lam = 4.0 ** (1.0 / (1 - s))
    a = eval_G(s, c, GConfig(theta_s=4.0))
    b = eval_G(s, c, GConfig(eta_max=1e5 * lam ** (-1.0 / c), xi_match=1.0 / lam))
    assert a == pytest.approx(b, rel=1e-8)


def test_G_rejects_c_at_most_two():
    with pytest.raises(ValueError):
        eval_G(2, 2.0)


def test_shooting_s2_root_and_contract():
    res = find_root_cl(2)
    assert res.c_l_root == pytest.approx(3.7967, abs=2e-3)
    lo, hi = res.bracket
    assert hi - lo <= 1e-5
    assert res.G_lo < 0.0 < res.G_hi
    assert len(res.samples) == res.iterations + 2
    # width halves every iteration
    assert hi - lo == pytest.approx(5.0 / 2 ** res.iterations, rel=1e-12)


def test_shooting_invalid_bracket():
    with pytest.raises(ShootingError):
        find_root_cl(2, 3.0, 3.5, config=GConfig(n_far=100_000))
    with pytest.raises(ShootingError):
        find_root_cl(2, 4.0, 3.0)


def test_shooting_parallel_matches_serial():
    cfg = GConfig(n_far=100_000, n_near=2000)
    a = find_root_cl(2, tol=1e-3, config=cfg)
    b = find_root_cl(2, tol=1e-3, config=cfg, parallel=True)
    assert a.to_json() == b.to_json()


# -- profiles and far limits ----------------------------------------------------------------

@pytest.fixture(scope="module")
def profile_s2():
    return compute_profile(2, ROOT_S2)


def test_profile_normalisation(profile_s2):
    p = profile_s2
    assert p.W_s[0] == 0.0
    assert p.W_s[-1] == 1.0
    assert p.W_s.max() == 1.0
    assert 0.0 < p.xi0 < 10.0


def test_profile_positivity(profile_s2):
    p = profile_s2
    assert np.all(p.W[1:] > 0.0) and np.all(p.Theta[1:] > 0.0)


def test_profile_first_maximizer(profile_s2):
    p = profile_s2
    i = int(np.argmax(p.W))
    assert p.xi[i] == p.xi0 and np.all(p.W[:i] < p.W_max)


def test_profile_without_interior_maximum():
    with pytest.raises(ProfileError):
        compute_profile(2, ROOT_S2, xi_max=0.5)


def test_far_limits_at_root():
    fl = far_limits(2, ROOT_S2)
    assert fl.converged, fl.diagnostic
    assert fl.Theta_inf > 0.0
    # U_hat ~ G + A/eta with A = -c W_inf
    assert abs(fl.U_eta_inf + ROOT_S2 * fl.W_inf) / abs(fl.U_eta_inf) < 1e-2


def test_far_limits_drift_off_root():
    fl = far_limits(2, 3.0)
    assert not fl.converged
    assert "not a root" in fl.diagnostic
