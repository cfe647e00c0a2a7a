"""Interval arithmetic against an exact rational oracle."""
import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ckyblowup import _backend
from ckyblowup.interval import (
    Interval,
    NonFiniteResult,
    ZeroInDivisor,
    add_rd,
    add_ru,
    div_rd,
    div_ru,
    iv_hull,
    iv_overlaps,
    mul_rd,
    mul_ru,
    two_prod,
    two_sum,
)

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e300, max_value=1e300)
moderate = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e100, max_value=1e100)


def F(x):
    return Fraction(x)


def ivs(elem=moderate):
    return st.tuples(elem, elem).map(lambda p: Interval(min(p), max(p)))


def _guard(fn, *args):
    # overflow is reported rather than enclosed; those cases are out of scope here
    try:
        return fn(*args)
    except NonFiniteResult:
        assume(False)


def _exact_ends(op, a, b):
    ends = [op(F(x), F(y)) for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    return min(ends), max(ends)


@given(finite, finite)
def test_two_sum_is_error_free(a, b):
    s, e = two_sum(a, b)
    if math.isfinite(s):
        assert F(s) + F(e) == F(a) + F(b)


@given(st.floats(min_value=-1e150, max_value=1e150, allow_nan=False))
def test_two_prod_is_error_free(a):
    b = 1.0 / 3.0 + a * 1e-3
    p, e = two_prod(a, b)
    if abs(p) > 2.0 ** -900:
        assert F(p) + F(e) == F(a) * F(b)


@given(finite, finite)
def test_directed_add(a, b):
    exact = F(a) + F(b)
    try:
        lo, hi = add_rd(a, b), add_ru(a, b)
    except NonFiniteResult:
        return
    assert F(lo) <= exact <= F(hi)
    # one ulp at most, and exact results stay points
    assert hi == lo or math.nextafter(lo, math.inf) == hi


@given(moderate, moderate)
def test_directed_mul_div(a, b):
    exact = F(a) * F(b)
    assert F(mul_rd(a, b)) <= exact <= F(mul_ru(a, b))
    if b != 0.0:
        q = F(a) / F(b)
        assert F(_guard(div_rd, a, b)) <= q <= F(_guard(div_ru, a, b))


@settings(max_examples=400)
@given(ivs(), ivs())
def test_operations_contain_exact_endpoint_results(a, b):
    for op, fn in ((lambda x, y: x + y, Interval.__add__),
                   (lambda x, y: x - y, Interval.__sub__),
                   (lambda x, y: x * y, Interval.__mul__)):
        lo, hi = _exact_ends(op, a, b)
        r = _guard(fn, a, b)
        assert F(r.lo) <= lo and hi <= F(r.hi)
    if b.lo > 0 or b.hi < 0:
        lo, hi = _exact_ends(lambda x, y: x / y, a, b)
        r = _guard(Interval.__truediv__, a, b)
        assert F(r.lo) <= lo and hi <= F(r.hi)


@given(ivs(), st.integers(min_value=0, max_value=6))
def test_integer_power_contains_samples(a, n):
    r = _guard(Interval.__pow__, a, n)
    for x in (a.lo, a.hi, a.mid):
        assert F(r.lo) <= F(x) ** n <= F(r.hi)


def test_exact_operations_stay_points():
    a = Interval(1.5)
    assert a + Interval(0.25) == Interval(1.75)
    assert a * Interval(2.0) == Interval(3.0)
    assert Interval(3.0) / Interval(2.0) == Interval(1.5)


def test_inexact_results_are_one_ulp_wide():
    r = Interval(1.0) / Interval(3.0)
    assert r.lo < r.hi == math.nextafter(r.lo, math.inf)
    assert F(r.lo) < Fraction(1, 3) < F(r.hi)


def test_division_by_zero_containing_interval():
    with pytest.raises(ZeroInDivisor):
        Interval(1.0) / Interval(-1.0, 1.0)
    with pytest.raises(ZeroDivisionError):
        Interval(1.0) / Interval(0.0, 2.0)


def test_overflow_is_reported():
    with pytest.raises(NonFiniteResult):
        Interval(1e308) * Interval(10.0)
    # the quotient rounds to the largest float; rounding up must not yield inf
    with pytest.raises(NonFiniteResult):
        div_ru(1.9995836413345889e+99, 1.1123053220580585e-209)
    with pytest.raises(NonFiniteResult):
        Interval(float("nan"))


def test_malformed_interval():
    with pytest.raises(ValueError):
        Interval(2.0, 1.0)


def test_from_fraction_is_tightest():
    r = Interval.from_fraction(Fraction(1, 10))
    assert r.lo < r.hi == math.nextafter(r.lo, math.inf)
    assert Fraction(1, 10) in r
    assert Interval.from_fraction(Fraction(3, 4)) == Interval(0.75)


def test_tiny_operands_still_enclose():
    a = Interval(1e-200)
    r = a * a
    assert r.lo <= 0.0 <= r.hi or F(r.lo) <= F(1e-200) ** 2 <= F(r.hi)
    q = Interval(1e-300) / Interval(1e10)
    assert F(q.lo) <= F(1e-300) / F(1e10) <= F(q.hi)


def test_midpoint_width_and_set_ops():
    a = Interval(-1.0, 3.0)
    assert a.mid == 1.0
    assert a.width == 4.0
    assert 0.0 in a and Interval(0.0, 1.0) in a and 5.0 not in a
    assert iv_hull(Interval(0.0, 1.0), Interval(2.0, 3.0)) == Interval(0.0, 3.0)
    assert iv_overlaps(Interval(0.0, 1.0), Interval(1.0, 2.0))
    assert not iv_overlaps(Interval(0.0, 1.0), Interval(1.5, 2.0))
    # width of huge intervals rounds up
    w = Interval(-1e308, 1e308)
    with pytest.raises(NonFiniteResult):
        w.width


def test_immutable_and_json_round_trip():
    a = Interval(0.1, 0.2)
    with pytest.raises(AttributeError):
        a.lo = 0.0
    assert Interval.from_json(a.to_json()) == a
    assert hash(a) == hash(Interval(0.1, 0.2))


@pytest.mark.skipif("compiled" not in _backend.available(), reason="compiled core not built")
@settings(max_examples=300)
@given(ivs(), ivs())
def test_compiled_primitives_match_python(a, b):
    core = _backend.kernels("compiled")
    pairs = [(core.iv_add, Interval.__add__), (core.iv_sub, Interval.__sub__),
             (core.iv_mul, Interval.__mul__)]
    if b.lo > 0 or b.hi < 0:
        pairs.append((core.iv_div, Interval.__truediv__))
    for cfn, pfn in pairs:
        try:
            want = pfn(a, b)
        except NonFiniteResult:
            with pytest.raises(ArithmeticError):
                cfn(a.lo, a.hi, b.lo, b.hi)
            continue
        assert cfn(a.lo, a.hi, b.lo, b.hi) == (want.lo, want.hi)
