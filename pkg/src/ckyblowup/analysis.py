"""Exponent fits, Hoelder fits and rescaled-profile comparison.

Blow-up rates are read off the trace with the affine relation

    (d/dt log f)^-1  ~  t/c - T/c      for f ~ (T - t)**c,

so a least-squares line y = a t + b through the centered-difference data
gives c = 1/a and T = -b/a.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# per-s regression windows and Hoelder-fit times for the reference layout
# with w0 = 1 - cos(4 pi x)
REFERENCE_WINDOWS = {
    2: (0.64371, 0.64391),
    3: (0.6804297, 0.6804300),
    4: (0.6571218, 0.6571221),
    5: (0.59698511, 0.59698515),
}
REFERENCE_HOLDER_TIMES = {2: 0.64391, 3: 0.6804302, 4: 0.6571223, 5: 0.59698517}
HOLDER_WINDOW = (1e-10, 1e-9)


class FitError(ValueError):
    pass


@dataclass
class FitResult:
    slope: float
    intercept: float
    exponent: float
    T_estimate: float
    window: tuple[float, float]
    residual_rms: float
    n_samples: int

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["window"] = list(self.window)
        return d


def _lstsq_line(x: np.ndarray, y: np.ndarray):
    A = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (a * x + b)
    return float(a), float(b), float(np.sqrt(np.mean(res * res)))


def log_rate_inverse(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """(d/dt log f)^-1 at interior samples by two-point centered differences.

    Works on a non-uniform grid; returns an array of len(t) - 2.
    """
    lf = np.log(f)
    d = (lf[2:] - lf[:-2]) / (t[2:] - t[:-2])
    return 1.0 / d


def fit_exponent(trace, field: str = "w_max", window: tuple[float, float] | None = None,
                 min_samples: int = 10) -> FitResult:
    """Affine fit of (d/dt log field)^-1 against t over ``window``.

    ``trace`` is anything with ``t`` and the named field as arrays.
    """
    if field not in ("w_max", "q_max"):
        raise FitError(f"field must be w_max or q_max, not {field!r}")
    t = np.asarray(trace.t, dtype=float)
    f = np.asarray(getattr(trace, field), dtype=float)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    lo, hi = window
    if not lo < hi:
        raise FitError(f"degenerate window {window!r}")
    # centered differences need a neighbor on each side
    idx = np.flatnonzero((t >= lo) & (t <= hi))
    idx = idx[(idx > 0) & (idx < len(t) - 1)]
    if idx.size < min_samples:
        raise FitError(f"only {idx.size} samples in window {window!r}; need {min_samples}")
    sl = slice(idx[0] - 1, idx[-1] + 2)
    ts, fs = t[sl], f[sl]
    if np.any(fs <= 0.0):
        raise FitError(f"{field} must be positive in the fit window")
    y = log_rate_inverse(ts, fs)
    x = ts[1:-1]
    a, b, rms = _lstsq_line(x, y)
    if a == 0.0:
        raise FitError("zero slope; the field does not follow a power law here")
    return FitResult(a, b, 1.0 / a, -b / a, (float(lo), float(hi)), rms, int(x.size))


def auto_window(trace, w_hi: float | None = None, decades: float = 1.0) -> tuple[float, float]:
    """Times over which w_max climbs the last ``decades`` below ``w_hi``."""
    t = np.asarray(trace.t)
    w = np.asarray(trace.w_max)
    if w_hi is None:
        w_hi = float(w[-1])
    w_lo = w_hi / 10.0 ** decades
    inside = np.flatnonzero((w >= w_lo) & (w <= w_hi))
    if inside.size < 2:
        raise FitError(f"trace never spans w_max in [{w_lo:g}, {w_hi:g}]")
    return float(t[inside[0]]), float(t[inside[-1]])


@dataclass
class HolderFit:
    alpha: float
    log_C: float
    x_window: tuple[float, float]
    residual_rms: float
    n_samples: int

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["x_window"] = list(self.x_window)
        return d


def fit_holder(snapshot, x_window: tuple[float, float] = HOLDER_WINDOW) -> HolderFit:
    """Slope of ln|u| against ln x over the particles in ``x_window``.

    The velocity is negative near the origin, so its magnitude is fitted.
    """
    q = np.asarray(snapshot.q)
    u = np.abs(np.asarray(snapshot.u))
    lo, hi = x_window
    m = (q >= lo) & (q <= hi)
    if m.sum() < 2:
        raise FitError(f"fewer than two particles in {x_window!r}")
    if np.any(u[m] <= 0.0):
        raise FitError("velocity vanishes inside the Hoelder window")
    a, b, rms = _lstsq_line(np.log(q[m]), np.log(u[m]))
    return HolderFit(a, b, (float(lo), float(hi)), rms, int(m.sum()))


class Source(str, enum.Enum):
    SELF_SIMILAR = "self_similar_eq"
    SIMULATION = "simulation_snapshot"


@dataclass
class RescaledProfile:
    grid: np.ndarray
    values: np.ndarray
    source: Source
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.grid)):
            yield self.grid[i], self.values[i]


def default_grid(n: int = 1001) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def rescale_snapshot(snapshot, grid: np.ndarray | None = None) -> RescaledProfile:
    """w(xi * q_max)/w_max on a uniform grid, by piecewise-linear interpolation."""
    q = np.asarray(snapshot.q)
    w = np.asarray(snapshot.w)
    i = int(np.argmax(w))
    if i == 0 or i == len(w) - 1:
        raise FitError("w_max sits on the boundary; no interior maximizer")
    grid = default_grid() if grid is None else np.asarray(grid)
    w_max, q_max = float(w[i]), float(q[i])
    vals = np.interp(grid * q_max, q, w) / w_max
    meta = {"t": float(snapshot.t), "w_max": w_max, "q_max": q_max}
    return RescaledProfile(grid, vals, Source.SIMULATION, meta)


def rescale_equation_profile(profile, grid: np.ndarray | None = None) -> RescaledProfile:
    """RescaledProfile from an odes.Profile, resampled on ``grid`` if given."""
    if grid is None:
        g, v = profile.grid, profile.W_s
    else:
        g = np.asarray(grid)
        v = np.interp(g * profile.xi0, profile.xi, profile.W) / profile.W_max
    meta = {"s": profile.s, "c_l": profile.c_l, "W_max": profile.W_max, "xi0": profile.xi0}
    return RescaledProfile(g, v, Source.SELF_SIMILAR, meta)


def compare_profiles(a: RescaledProfile, b: RescaledProfile) -> tuple[float, float]:
    """(sup, rms) of |a - b| on a's grid; b is resampled linearly if needed."""
    vb = b.values
    if len(a.grid) != len(b.grid) or not np.array_equal(a.grid, b.grid):
        vb = np.interp(a.grid, b.grid, b.values)
    d = np.abs(a.values - vb)
    return float(d.max()), float(math.sqrt(np.mean(d * d)))
