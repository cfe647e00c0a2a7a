"""Closed binary64 intervals with outward rounding.

Each elementary operation is evaluated in round-to-nearest and its exact
rounding error is recovered with an error-free transform (TwoSum for
sums, Dekker's TwoProduct for products, an exact residual for quotients).
An endpoint is moved one ulp outward only when the error points outward,
so results coincide with what directed hardware rounding would give.
When the error-free transform is not valid (tiny or huge operands) the
endpoint is moved outward unconditionally, which is still an enclosure.
"""
from __future__ import annotations

import math
from fractions import Fraction

_INF = math.inf
_SPLITTER = 134217729.0  # 2**27 + 1
# below this magnitude the product error may underflow; above, the split overflows
_TINY = 2.0 ** -900
_HUGE = 2.0 ** 995

_nextafter = math.nextafter


class NonFiniteResult(ArithmeticError):
    """An interval endpoint overflowed or became NaN."""


class ZeroInDivisor(ZeroDivisionError):
    """Division by an interval that contains zero."""


def _down(x: float) -> float:
    y = _nextafter(x, -_INF)
    if y == -_INF:
        raise NonFiniteResult(f"rounding {x!r} down overflows")
    return y


def _up(x: float) -> float:
    y = _nextafter(x, _INF)
    if y == _INF:
        raise NonFiniteResult(f"rounding {x!r} up overflows")
    return y


def two_sum(a: float, b: float) -> tuple[float, float]:
    """Return (s, e) with s = fl(a + b) and a + b = s + e exactly."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def _split(a: float) -> tuple[float, float]:
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a: float, b: float) -> tuple[float, float]:
    """Return (p, e) with p = fl(a * b) and a * b = p + e exactly (no under/overflow)."""
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = al * bl - (((p - ah * bh) - al * bh) - ah * bl)
    return p, e


def add_rd(a: float, b: float) -> float:
    s, e = two_sum(a, b)
    if s != s or s in (_INF, -_INF):
        raise NonFiniteResult(f"{a!r} + {b!r}")
    return s if e >= 0.0 else _down(s)


def add_ru(a: float, b: float) -> float:
    s, e = two_sum(a, b)
    if s != s or s in (_INF, -_INF):
        raise NonFiniteResult(f"{a!r} + {b!r}")
    return s if e <= 0.0 else _up(s)


def _mul_err_sign(a: float, b: float, p: float) -> int:
    """Sign of a*b - p, or 2 when it cannot be decided exactly."""
    if p != p or p in (_INF, -_INF):
        raise NonFiniteResult(f"{a!r} * {b!r}")
    if a == 0.0 or b == 0.0:
        return 0
    ap = abs(p)
    if ap < _TINY or abs(a) > _HUGE or abs(b) > _HUGE:
        return 2
    _, e = two_prod(a, b)
    return (e > 0.0) - (e < 0.0)


def mul_rd(a: float, b: float) -> float:
    p = a * b
    sg = _mul_err_sign(a, b, p)
    return p if sg == 0 or sg == 1 else _down(p)


def mul_ru(a: float, b: float) -> float:
    p = a * b
    sg = _mul_err_sign(a, b, p)
    return p if sg == 0 or sg == -1 else _up(p)


def _div_err_sign(a: float, b: float, q: float) -> int:
    """Sign of a/b - q, or 2 when it cannot be decided exactly."""
    if q != q or q in (_INF, -_INF):
        raise NonFiniteResult(f"{a!r} / {b!r}")
    if a == 0.0:
        return 0
    if abs(q) < _TINY or abs(q) > _HUGE or abs(b) > _HUGE or abs(a) < _TINY:
        return 2
    p, e = two_prod(q, b)
    # a - p is exact for a correctly rounded quotient; the sign of the
    # rounded difference equals the sign of the exact residual a - q*b
    r = (a - p) - e
    if r == 0.0:
        return 0
    pos = (r > 0.0) == (b > 0.0)
    return 1 if pos else -1


def div_rd(a: float, b: float) -> float:
    q = a / b
    sg = _div_err_sign(a, b, q)
    return q if sg == 0 or sg == 1 else _down(q)


def div_ru(a: float, b: float) -> float:
    q = a / b
    sg = _div_err_sign(a, b, q)
    return q if sg == 0 or sg == -1 else _up(q)


def _check(x: float) -> float:
    if x != x or x in (_INF, -_INF):
        raise NonFiniteResult(f"non-finite endpoint {x!r}")
    return x


class Interval:
    """Closed interval [lo, hi] of binary64 numbers. Immutable."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: float, hi: float | None = None):
        lo = float(lo)
        hi = lo if hi is None else float(hi)
        _check(lo)
        _check(hi)
        if lo > hi:
            raise ValueError(f"malformed interval [{lo!r}, {hi!r}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, name, value):
        raise AttributeError("Interval is immutable")

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @classmethod
    def from_fraction(cls, q) -> "Interval":
        """Tightest binary64 interval containing the rational q."""
        q = Fraction(q)
        x = float(q)
        fx = Fraction(x)
        if fx == q:
            return cls(x, x)
        if fx < q:
            return cls(x, _up(x))
        return cls(_down(x), x)

    @classmethod
    def coerce(cls, v) -> "Interval":
        if isinstance(v, Interval):
            return v
        if isinstance(v, (int, Fraction)):
            return cls.from_fraction(v)
        return cls(v, v)

    # arithmetic
    def __add__(self, other):
        return iv_add(self, Interval.coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, Interval.coerce(other))

    def __rsub__(self, other):
        return iv_sub(Interval.coerce(other), self)

    def __mul__(self, other):
        return iv_mul(self, Interval.coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return iv_div(self, Interval.coerce(other))

    def __rtruediv__(self, other):
        return iv_div(Interval.coerce(other), self)

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __pow__(self, n: int):
        return iv_pow(self, n)

    # set operations
    def __contains__(self, x) -> bool:
        return iv_contains(self, x)

    def __eq__(self, other):
        if not isinstance(other, Interval):
            return NotImplemented
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    @property
    def mid(self) -> float:
        return iv_midpoint(self)

    @property
    def width(self) -> float:
        return iv_width(self)

    def to_json(self) -> list:
        return [self.lo, self.hi]

    @classmethod
    def from_json(cls, pair) -> "Interval":
        lo, hi = pair
        return cls(lo, hi)


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(add_rd(a.lo, b.lo), add_ru(a.hi, b.hi))


def iv_sub(a: Interval, b: Interval) -> Interval:
    return Interval(add_rd(a.lo, -b.hi), add_ru(a.hi, -b.lo))


def iv_mul(a: Interval, b: Interval) -> Interval:
    al, ah, bl, bh = a.lo, a.hi, b.lo, b.hi
    if al >= 0.0:
        if bl >= 0.0:
            return Interval(mul_rd(al, bl), mul_ru(ah, bh))
        if bh <= 0.0:
            return Interval(mul_rd(ah, bl), mul_ru(al, bh))
        return Interval(mul_rd(ah, bl), mul_ru(ah, bh))
    if ah <= 0.0:
        if bl >= 0.0:
            return Interval(mul_rd(al, bh), mul_ru(ah, bl))
        if bh <= 0.0:
            return Interval(mul_rd(ah, bh), mul_ru(al, bl))
        return Interval(mul_rd(al, bh), mul_ru(al, bl))
    # a straddles zero
    if bl >= 0.0:
        return Interval(mul_rd(al, bh), mul_ru(ah, bh))
    if bh <= 0.0:
        return Interval(mul_rd(ah, bl), mul_ru(al, bl))
    lo = min(mul_rd(al, bh), mul_rd(ah, bl))
    hi = max(mul_ru(al, bl), mul_ru(ah, bh))
    return Interval(lo, hi)


def iv_div(a: Interval, b: Interval) -> Interval:
    bl, bh = b.lo, b.hi
    if bl <= 0.0 <= bh:
        raise ZeroInDivisor(f"divisor {b!r} contains zero")
    al, ah = a.lo, a.hi
    if bl > 0.0:
        if al >= 0.0:
            return Interval(div_rd(al, bh), div_ru(ah, bl))
        if ah <= 0.0:
            return Interval(div_rd(al, bl), div_ru(ah, bh))
        return Interval(div_rd(al, bl), div_ru(ah, bl))
    if al >= 0.0:
        return Interval(div_rd(ah, bh), div_ru(al, bl))
    if ah <= 0.0:
        return Interval(div_rd(ah, bl), div_ru(al, bh))
    return Interval(div_rd(ah, bh), div_ru(al, bh))


def iv_pow(a: Interval, n: int) -> Interval:
    """Integer power by repeated multiplication (n >= 0)."""
    if n < 0:
        return iv_div(Interval(1.0), iv_pow(a, -n))
    out = Interval(1.0)
    for _ in range(n):
        out = iv_mul(out, a)
    return out


def iv_midpoint(a: Interval) -> float:
    m = 0.5 * a.lo + 0.5 * a.hi
    # guards the subnormal corner where halving loses the ordering
    return min(max(m, a.lo), a.hi)


def iv_width(a: Interval) -> float:
    return add_ru(a.hi, -a.lo)


def iv_contains(a: Interval, x) -> bool:
    if isinstance(x, Interval):
        return a.lo <= x.lo and x.hi <= a.hi
    if isinstance(x, (int, Fraction)):
        return Fraction(a.lo) <= x <= Fraction(a.hi)
    return a.lo <= x <= a.hi


def iv_hull(a: Interval, b: Interval) -> Interval:
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def iv_overlaps(a: Interval, b: Interval) -> bool:
    return a.lo <= b.hi and b.lo <= a.hi
