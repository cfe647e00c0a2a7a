"""Fast (non-validated) integration of the self-similar profile equations.

Three charts are used for the same trajectory:

* near field, variable xi, unknowns (U, W, Theta);
* far field, eta = xi**(1/c), unknowns U_hat = U/xi, W_hat = W,
  Theta_hat = Theta * xi**(2/c - 1);
* infinity, zeta = 1/eta, unknowns U_tilde = U_hat*eta, W_tilde = W_hat*eta,
  Theta_tilde = Theta_hat.

Fixed-step RK4 along the near and far charts runs in the compiled core when
it is available (see ``_backend``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _backend
from ._fallback import KernelError
from .series import ScalingParams, build_coefficients, evaluate_series


class SingularRHS(ArithmeticError):
    """The right-hand side was evaluated where a denominator vanishes."""


class ShootingError(ValueError):
    pass


class ProfileError(RuntimeError):
    pass


class Chart(str, enum.Enum):
    NEAR = "near"
    FAR = "far"
    INFINITY = "infinity"


@dataclass(frozen=True)
class ProfileState:
    chart: Chart
    position: float
    U: float
    W: float
    Theta: float

    def __post_init__(self):
        object.__setattr__(self, "chart", Chart(self.chart))
        if not self.position >= 0.0:
            raise ValueError(f"position must be >= 0, got {self.position!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.U, self.W, self.Theta])


class Derivatives(NamedTuple):
    U: float
    W: float
    Theta: float


# -- right-hand sides ---------------------------------------------------------

def rhs_near(xi: float, state: ProfileState | tuple, c_l: float) -> Derivatives:
    """d/dxi of (U, W, Theta), written with U_tilde = c*xi + U."""
    U, W, T = _uwt(state)
    try:
        return Derivatives(*_kern_rhs("near_rhs", c_l, xi, U, W, T))
    except KernelError as exc:
        raise SingularRHS(str(exc)) from None


def rhs_far(eta: float, state: ProfileState | tuple, c_l: float) -> Derivatives:
    U, W, T = _uwt(state)
    try:
        return Derivatives(*_kern_rhs("far_rhs", c_l, eta, U, W, T))
    except KernelError as exc:
        raise SingularRHS(str(exc)) from None


def rhs_infinity(zeta: float, state: ProfileState | tuple, c_l: float) -> Derivatives:
    """d/dzeta of (U_tilde, W_tilde, Theta_tilde).

    zeta = 0 is a singular point of the U_tilde equation; use
    ``infinity_initial`` for the values there.
    """
    U, W, T = _uwt(state)
    den = U * zeta + c_l
    if zeta == 0.0:
        raise SingularRHS("the infinity chart is singular at zeta = 0; see infinity_initial")
    if den == 0.0:
        raise SingularRHS(f"c + U_tilde*zeta vanishes at zeta={zeta!r}")
    dT = (c_l - 2.0) * T * U / den
    dW = -(T * c_l * (c_l - 2.0) + U * W * den) / (den * den)
    dU = -(U + c_l * W) / zeta
    return Derivatives(dU, dW, dT)


def infinity_initial(W_inf: float, Theta_inf: float, c_l: float) -> ProfileState:
    """State at zeta = 0 given the far-field limits; U_tilde(0) = -c W_inf."""
    return ProfileState(Chart.INFINITY, 0.0, -c_l * W_inf, W_inf, Theta_inf)


def _uwt(state):
    if isinstance(state, ProfileState):
        return state.U, state.W, state.Theta
    U, W, T = state
    return float(U), float(W), float(T)


def _kern_rhs(name, c, x, U, W, T):
    return getattr(_backend.kernels(), name)(float(c), float(x), float(U), float(W), float(T))


# -- chart changes ------------------------------------------------------------

def near_to_far(state: ProfileState, c_l: float) -> ProfileState:
    xi = state.position
    if xi <= 0.0:
        raise SingularRHS("the far chart needs xi > 0")
    eta = xi ** (1.0 / c_l)
    return ProfileState(Chart.FAR, eta, state.U / xi, state.W, state.Theta * xi ** (2.0 / c_l - 1.0))


def far_to_near(state: ProfileState, c_l: float) -> ProfileState:
    eta = state.position
    xi = eta ** c_l
    return ProfileState(Chart.NEAR, xi, state.U * xi, state.W, state.Theta * xi ** (1.0 - 2.0 / c_l))


def far_to_infinity(state: ProfileState, c_l: float) -> ProfileState:
    eta = state.position
    if eta <= 0.0:
        raise SingularRHS("the infinity chart needs eta > 0")
    return ProfileState(Chart.INFINITY, 1.0 / eta, state.U * eta, state.W * eta, state.Theta)


def infinity_to_far(state: ProfileState, c_l: float) -> ProfileState:
    zeta = state.position
    if zeta <= 0.0:
        raise SingularRHS("zeta = 0 corresponds to eta = infinity")
    eta = 1.0 / zeta
    return ProfileState(Chart.FAR, eta, state.U / eta, state.W / eta, state.Theta)


# -- integration --------------------------------------------------------------

def rk4_integrate(rhs: Callable, y0, x0: float, x1: float, n_steps: int, sample_every: int = 0):
    """Classical RK4 with the fixed step (x1 - x0)/n_steps for y' = rhs(x, y).

    ``y0`` may be a float or a 1-d array. Returns ``(y1, xs, ys)``; the
    samples include the initial point and every ``sample_every``-th step
    (empty when ``sample_every`` is 0).
    """
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    scalar = np.ndim(y0) == 0
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    h = (x1 - x0) / n_steps
    xs, ys = [], []
    if sample_every:
        xs.append(x0)
        ys.append(y.copy())
    for i in range(n_steps):
        x = x0 + i * h
        k1 = np.asarray(rhs(x, y), dtype=float)
        k2 = np.asarray(rhs(x + 0.5 * h, y + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(rhs(x + 0.5 * h, y + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(rhs(x + h, y + h * k3), dtype=float)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise SingularRHS(f"non-finite state at x={x + h!r}")
        if sample_every and (i + 1) % sample_every == 0:
            xs.append(x0 + (i + 1) * h)
            ys.append(y.copy())
    out = float(y[0]) if scalar else y
    return out, np.array(xs), np.array(ys)


@dataclass
class ChartPath:
    """Samples of one chart-local integration."""

    chart: Chart
    x: np.ndarray
    U: np.ndarray
    W: np.ndarray
    Theta: np.ndarray

    def rows(self):
        for i in range(len(self.x)):
            yield self.chart.value, self.x[i], self.U[i], self.W[i], self.Theta[i]


def integrate_chart(state: ProfileState, x1: float, n_steps: int, c_l: float,
                    sample_every: int = 0, backend: str | None = None):
    """RK4 along the near or far chart with the kernel backend.

    Returns the final ProfileState and a ChartPath of samples.
    """
    k = _backend.kernels(backend)
    if state.chart is Chart.NEAR:
        fn = k.rk4_near
    elif state.chart is Chart.FAR:
        fn = k.rk4_far
    else:
        raise ValueError("use rk4_integrate with rhs_infinity for the infinity chart")
    try:
        U, W, T, xs, Us, Ws, Ts = fn(float(c_l), float(state.position), float(x1), int(n_steps),
                                     state.U, state.W, state.Theta, int(sample_every))
    except KernelError as exc:
        raise SingularRHS(str(exc)) from None
    final = ProfileState(state.chart, x1, U, W, T)
    return final, ChartPath(state.chart, np.asarray(xs), np.asarray(Us), np.asarray(Ws), np.asarray(Ts))


# -- decay functional and shooting ---------------------------------------------

@dataclass(frozen=True)
class GConfig:
    """Pipeline knobs for evaluating G; the defaults follow the reference pipeline."""

    K: int = 50
    theta_s: float = 1.0
    n_near: int = 10_000
    n_far: int = 1_000_000
    xi_match: float = 1.0
    eta_max: float = 1.0e5
    backend: str | None = None

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def handoff_point(coeffs) -> float:
    """Where the series hands over to RK4: half the estimated radius."""
    r = coeffs.radius_estimate
    if not math.isfinite(r) or r <= 0.0:
        raise ProfileError("series radius estimate unavailable; increase K")
    return 0.5 * r


def _near_start(s: int, c_l: float, cfg: GConfig):
    coeffs = build_coefficients(ScalingParams(s, c_l, cfg.theta_s), cfg.K)
    xi0 = min(handoff_point(coeffs), 0.5 * cfg.xi_match)
    return coeffs, evaluate_series(coeffs, xi0)


def eval_G(s: int, c_l: float, config: GConfig | None = None) -> float:
    """Approximate G(c_l) by U_hat at eta = eta_max (the tail is not certified)."""
    cfg = config or GConfig()
    if not c_l > 2.0:
        raise ValueError("c_l must exceed 2")
    _, st = _near_start(s, c_l, cfg)
    st, _ = integrate_chart(st, cfg.xi_match, cfg.n_near, c_l, backend=cfg.backend)
    far = near_to_far(st, c_l)
    far, _ = integrate_chart(far, cfg.eta_max, cfg.n_far, c_l, backend=cfg.backend)
    return far.U


@dataclass
class ShootingResult:
    s: int
    c_l_root: float
    bracket: tuple[float, float]
    G_lo: float
    G_hi: float
    iterations: int
    samples: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "c_l_root": self.c_l_root,
            "bracket": list(self.bracket),
            "G_lo": self.G_lo,
            "G_hi": self.G_hi,
            "iterations": self.iterations,
            "samples": [list(p) for p in self.samples],
        }


def find_root_cl(s: int, c_lo: float = 3.0, c_hi: float = 8.0, tol: float = 1e-5,
                 config: GConfig | None = None, parallel: bool = False) -> ShootingResult:
    """Bisection for the sign change of G on [c_lo, c_hi]."""
    if not c_lo < c_hi:
        raise ShootingError("need c_lo < c_hi")
    cfg = config or GConfig()
    if parallel:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=2) as ex:
            g_lo, g_hi = ex.map(eval_G, (s, s), (c_lo, c_hi), (cfg, cfg))
    else:
        g_lo, g_hi = eval_G(s, c_lo, cfg), eval_G(s, c_hi, cfg)
    samples = [(c_lo, g_lo), (c_hi, g_hi)]
    if not (g_lo < 0.0 < g_hi):
        raise ShootingError(f"G does not change sign from - to + on [{c_lo}, {c_hi}]: "
                            f"G = {g_lo!r}, {g_hi!r}")
    it = 0
    while c_hi - c_lo > tol:
        mid = 0.5 * (c_lo + c_hi)
        g = eval_G(s, mid, cfg)
        samples.append((mid, g))
        if g < 0.0:
            c_lo, g_lo = mid, g
        else:
            c_hi, g_hi = mid, g
        it += 1
    return ShootingResult(s, 0.5 * (c_lo + c_hi), (c_lo, c_hi), g_lo, g_hi, it, samples)


# -- profiles ------------------------------------------------------------------

@dataclass
class Profile:
    s: int
    c_l: float
    xi: np.ndarray
    U: np.ndarray
    W: np.ndarray
    Theta: np.ndarray
    W_max: float
    xi0: float
    grid: np.ndarray
    W_s: np.ndarray

    def rows(self):
        for i in range(len(self.xi)):
            yield "near", self.xi[i], self.U[i], self.W[i], self.Theta[i]


def compute_profile(s: int, c_l: float, xi_max: float = 10.0, h: float = 9e-4,
                    n_series: int = 64, n_grid: int = 1001, K: int = 50,
                    backend: str | None = None) -> Profile:
    """Dense near-field profile on [0, xi_max] and the rescaled W_s on [0, 1].

    W_s(x) = W(x*xi0)/W_max where W_max is the largest sample and xi0 its
    first location; off-sample values use linear interpolation.
    """
    coeffs = build_coefficients(ScalingParams(s, c_l), K)
    x0 = handoff_point(coeffs)
    if x0 >= xi_max:
        raise ProfileError("xi_max lies inside the series region")
    xs_ser = np.linspace(0.0, x0, n_series + 1)
    ser = [evaluate_series(coeffs, float(x)) for x in xs_ser]
    n = max(1, math.ceil((xi_max - x0) / h))
    _, path = integrate_chart(ser[-1], xi_max, n, c_l, sample_every=1, backend=backend)
    xi = np.concatenate([xs_ser, path.x[1:]])
    U = np.concatenate([[p.U for p in ser], path.U[1:]])
    W = np.concatenate([[p.W for p in ser], path.W[1:]])
    T = np.concatenate([[p.Theta for p in ser], path.Theta[1:]])
    i = int(np.argmax(W))
    if i == len(W) - 1:
        raise ProfileError(f"W has no interior maximum on [0, {xi_max}]")
    W_max, xi0 = float(W[i]), float(xi[i])
    grid = np.linspace(0.0, 1.0, n_grid)
    W_s = np.interp(grid * xi0, xi, W) / W_max
    W_s[-1] = 1.0  # grid*xi0 hits the sample exactly; guard against rounding of 1.0*xi0
    return Profile(s, c_l, xi, U, W, T, W_max, xi0, grid, W_s)


# -- far-field limits ---------------------------------------------------------

@dataclass
class FarLimits:
    W_inf: float
    Theta_inf: float
    U_eta_inf: float
    G_offset: float
    etas: tuple[float, ...]
    W_eta: tuple[float, ...]
    Theta: tuple[float, ...]
    U_eta: tuple[float, ...]
    drift: float
    converged: bool
    diagnostic: str = ""

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        for k in ("etas", "W_eta", "Theta", "U_eta"):
            d[k] = list(d[k])
        return d


def _richardson(vals, etas):
    # error ~ 1/eta, successive etas a fixed ratio apart
    q = etas[-1] / etas[-2]
    return vals[-1] + (vals[-1] - vals[-2]) / (q - 1.0)


def far_limits(s: int, c_l: float, etas=(1e3, 1e4, 1e5), h: float = 0.1,
               drift_tol: float = 1e-2, config: GConfig | None = None) -> FarLimits:
    """Estimate W_inf = lim W_hat*eta and Theta_inf = lim Theta_hat.

    ``U_eta_inf`` is the coefficient A in U_hat ~ G + A/eta fitted on the
    last two etas, so a small residual G at an approximate root does not
    swamp it; ``G_offset`` is the fitted G. The drift diagnostic compares
    W_hat*eta at the last two etas. Away from a root of G that product
    behaves like a power of eta and does not settle.
    """
    cfg = config or GConfig()
    _, st = _near_start(s, c_l, cfg)
    st, _ = integrate_chart(st, cfg.xi_match, cfg.n_near, c_l, backend=cfg.backend)
    st = near_to_far(st, c_l)
    W_eta, Th, U_eta = [], [], []
    for e in etas:
        n = max(1, round((e - st.position) / h))
        st, _ = integrate_chart(st, e, n, c_l, backend=cfg.backend)
        W_eta.append(st.W * e)
        Th.append(st.Theta)
        U_eta.append(st.U * e)
    W_inf = _richardson(W_eta, etas)
    T_inf = _richardson(Th, etas)
    e1, e2 = etas[-2], etas[-1]
    U_inf = (U_eta[-2] / e1 - U_eta[-1] / e2) / (1.0 / e1 - 1.0 / e2)
    G_off = U_eta[-1] / e2 - U_inf / e2
    drift = abs(W_eta[-1] - W_eta[-2]) / max(abs(W_eta[-1]), 1e-300)
    ok = drift <= drift_tol and T_inf > 0.0
    diag = "" if ok else (f"W_hat*eta drifts by {drift:.3g} (relative) between eta={etas[-2]:g} "
                          f"and {etas[-1]:g}; c_l={c_l} is probably not a root of G")
    return FarLimits(W_inf, T_inf, U_inf, G_off, tuple(etas), tuple(W_eta), tuple(Th), tuple(U_eta),
                     drift, ok, diag)
