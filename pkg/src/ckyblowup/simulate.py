"""Lagrangian particle simulation of the 1D model

    w_t + u w_x = theta_x,   theta_t + u theta_x = 0,
    u(x) = -x * int_x^1 w(y)/y dy,

on [0, 1] with w = theta = 0 at x = 0. Particles move with u, carry a
fixed theta and integrate dw/dt = theta_x. Time stepping is RK4 with an
adaptive step chosen to keep particles from crossing.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend

DT_CAP = 1e-3
DT_SAFETY = 10.0
DEFAULT_THRESHOLDS = (1e3, 1e4, 1e5)


class ParticleCrossing(RuntimeError):
    """Particle positions stopped being strictly increasing."""

    def __init__(self, t: float, index: int):
        super().__init__(f"particles {index} and {index + 1} crossed at t={t!r}")
        self.t = t
        self.index = index


class WInit(str, enum.Enum):
    COS4PI = "cos4pi"      # w0 = 1 - cos(4 pi x)
    QUADRATIC = "quadratic"  # w0 = x - x^2


@dataclass(frozen=True)
class Layout:
    """Uniform inner block on [0, x_split] plus a uniform outer block on (x_split, 1]."""

    n_inner: int = 100_001
    n_outer: int = 99_900
    x_split: float = 1e-3
    name: str = "full"

    @property
    def n_particles(self) -> int:
        return self.n_inner + self.n_outer

    @property
    def inner_spacing(self) -> float:
        return self.x_split / (self.n_inner - 1)

    @property
    def outer_spacing(self) -> float:
        return (1.0 - self.x_split) / self.n_outer

    def positions(self) -> np.ndarray:
        inner = np.linspace(0.0, self.x_split, self.n_inner)
        k = np.arange(1, self.n_outer + 1)
        outer = self.x_split + k * self.outer_spacing
        outer[-1] = 1.0
        return np.concatenate([inner, outer])

    def to_json(self) -> dict:
        return {"name": self.name, "n_inner": self.n_inner, "n_outer": self.n_outer,
                "x_split": self.x_split, "inner_spacing": self.inner_spacing,
                "outer_spacing": self.outer_spacing, "n_particles": self.n_particles}


FULL = Layout()
DESK = Layout(10_001, 9_990, 1e-3, "desk")
PRESETS = {"full": FULL, "desk": DESK}


def layout_for(preset: str | Layout) -> Layout:
    if isinstance(preset, Layout):
        return preset
    try:
        return PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown layout preset {preset!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class ParticleSystem:
    q: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    t: float = 0.0
    config: dict = field(default_factory=dict)

    def copy(self) -> "ParticleSystem":
        return replace(self, q=self.q.copy(), theta=self.theta.copy(), w=self.w.copy(),
                       config=dict(self.config))

    @property
    def n(self) -> int:
        return len(self.q)

    def argmax_w(self) -> int:
        return int(np.argmax(self.w))  # first index on ties


def initial_w(kind: WInit | str, x: np.ndarray) -> np.ndarray:
    kind = WInit(kind)
    if kind is WInit.COS4PI:
        return 1.0 - np.cos(4.0 * np.pi * x)
    return x - x * x


def initial_theta(s: int, x: np.ndarray) -> np.ndarray:
    """(1 - cos(pi x))**(s/2); vanishes to order s at the origin."""
    return (1.0 - np.cos(np.pi * x)) ** (0.5 * s)


def init_particles(s: int, w_init: WInit | str = WInit.COS4PI,
                   layout: str | Layout = "full") -> ParticleSystem:
    lay = layout_for(layout)
    q = lay.positions()
    th = initial_theta(s, q)
    w = initial_w(w_init, q)
    th[0] = 0.0
    w[0] = 0.0
    cfg = {"s": s, "w_init": WInit(w_init).value, "layout": lay.to_json()}
    return ParticleSystem(q, th, w, 0.0, cfg)


# -- discrete operators -------------------------------------------------------

def velocity(sys: ParticleSystem, backend: str | None = None) -> np.ndarray:
    """Trapezoid rule for -q_i * int_{q_i}^1 w/y dy via suffix sums."""
    return np.asarray(_backend.kernels(backend).velocity(sys.q, sys.w))


def theta_x(sys: ParticleSystem, backend: str | None = None) -> np.ndarray:
    return np.asarray(_backend.kernels(backend).theta_x(sys.q, sys.theta))


def adaptive_dt(sys: ParticleSystem, u: np.ndarray | None = None, backend: str | None = None) -> float:
    """min(1/(10 * max compression rate), 1e-3); no compression means the cap."""
    k = _backend.kernels(backend)
    if u is None:
        u = k.velocity(sys.q, sys.w)
    rate = k.max_compression(sys.q, u)
    if rate <= 0.0:
        return DT_CAP
    return min(1.0 / rate / DT_SAFETY, DT_CAP)


def _check_order(q: np.ndarray, t: float):
    bad = np.flatnonzero(np.diff(q) <= 0.0)
    if bad.size:
        raise ParticleCrossing(t, int(bad[0]))


def step(sys: ParticleSystem, dt: float | None = None, backend: str | None = None) -> tuple[ParticleSystem, float]:
    """One RK4 step; velocity and theta_x are re-evaluated at every stage."""
    k = _backend.kernels(backend)
    if dt is None:
        dt = adaptive_dt(sys, backend=backend)
    qn, wn = k.rk4_particles(sys.q, sys.w, sys.theta, dt)
    qn = np.asarray(qn)
    _check_order(qn, sys.t + dt)
    return ParticleSystem(qn, sys.theta, np.asarray(wn), sys.t + dt, sys.config), dt


@dataclass
class Snapshot:
    """Particle state stored when w_max first reaches ``threshold`` or t reaches ``at_time``."""

    threshold: float
    t: float
    w_max: float
    q: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    u: np.ndarray
    at_time: float = math.nan

    @property
    def q_max(self) -> float:
        return float(self.q[int(np.argmax(self.w))])

    def rows(self):
        for i in range(len(self.q)):
            yield self.q[i], self.theta[i], self.w[i], self.u[i]


@dataclass
class BlowupTrace:
    t: np.ndarray
    w_max: np.ndarray
    q_max: np.ndarray
    dt: np.ndarray
    snapshots: list[Snapshot]
    stop_reason: str
    config: dict

    def rows(self):
        for i in range(len(self.t)):
            yield self.t[i], self.w_max[i], self.q_max[i], self.dt[i]

    def snapshot_at(self, threshold: float) -> Snapshot:
        for snap in self.snapshots:
            if snap.threshold == threshold:
                return snap
        raise KeyError(f"no snapshot stored for w_max threshold {threshold:g}")

    def snapshot_at_time(self, t: float) -> Snapshot:
        for snap in self.snapshots:
            if snap.at_time == t:
                return snap
        raise KeyError(f"no snapshot stored for t = {t!r}")


def run_until(sys: ParticleSystem, w_max_limit: float | None = 1e5, t_max: float | None = None,
              thresholds=DEFAULT_THRESHOLDS, times=(), max_steps: int = 10_000_000,
              backend: str | None = None) -> BlowupTrace:
    """Step until w_max reaches w_max_limit or t reaches t_max.

    The trace gets one row per state (the initial one included). A snapshot
    is stored the first time w_max reaches each threshold, and at each of
    ``times``; the step is shortened to land on those times exactly.
    """
    if w_max_limit is None and t_max is None:
        raise ValueError("give w_max_limit or t_max")
    k = _backend.kernels(backend)
    pending = sorted(float(x) for x in thresholds)
    pending_t = sorted(float(x) for x in times)
    ts, wm, qm, dts = [], [], [], []
    snaps: list[Snapshot] = []
    cur = sys
    reason = "max_steps"
    for _ in range(max_steps + 1):
        i = cur.argmax_w()
        w_hi = float(cur.w[i])
        u = np.asarray(k.velocity(cur.q, cur.w))
        dt = adaptive_dt(cur, u, backend)
        ts.append(cur.t)
        wm.append(w_hi)
        qm.append(float(cur.q[i]))
        dts.append(dt)
        while pending and w_hi >= pending[0]:
            snaps.append(Snapshot(pending.pop(0), cur.t, w_hi, cur.q.copy(), cur.theta.copy(),
                                  cur.w.copy(), u))
        while pending_t and cur.t >= pending_t[0]:
            snaps.append(Snapshot(math.nan, cur.t, w_hi, cur.q.copy(), cur.theta.copy(),
                                  cur.w.copy(), u, pending_t.pop(0)))
        if w_max_limit is not None and w_hi >= w_max_limit:
            reason = "w_max_limit"
            break
        if t_max is not None and cur.t >= t_max:
            reason = "t_max"
            break
        if t_max is not None:
            dt = min(dt, t_max - cur.t)
        if pending_t and cur.t + dt > pending_t[0]:
            dt = pending_t[0] - cur.t
        try:
            cur, _ = step(cur, dt, backend)
        except ParticleCrossing as exc:
            reason = f"crossing: {exc}"
            break
    return BlowupTrace(np.array(ts), np.array(wm), np.array(qm), np.array(dts), snaps, reason,
                       dict(sys.config))
