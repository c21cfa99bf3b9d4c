import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcrystals.errors import PrecisionExhausted
from fcrystals.fields import ExtensionTower
from fcrystals.series import TruncatedSeries, ZeroToPrecision

T2 = ExtensionTower(2, 1)
T3 = ExtensionTower(3, 1)


def S(ints, offset=0, precision=8, tower=T2):
    return TruncatedSeries.from_int_coeffs(tower, offset, ints, precision)


def test_difference_of_squares():
    a = S([1, 1], precision=3)  # 1 + eps + O(eps^3)
    b = S([1, -1], precision=3)
    prod = a * b
    assert prod.precision == 3
    assert prod == S([1, 0, -1], precision=3)


def test_geometric_series_inverse():
    a = S([1, -1], precision=4, tower=T3)
    inv = a.inv()
    assert inv.precision == 4
    assert inv == S([1, 1, 1, 1], precision=4, tower=T3)


def test_monomial_inverse_precision_loss():
    a = S([1], offset=1, precision=3)  # eps + O(eps^3)
    inv = a.inv()
    assert inv.offset == -1
    assert inv.precision == 1  # prec - 2*val
    assert inv.coeff(-1) == T2.one()
    assert (a * inv).compare(TruncatedSeries.one(T2, 2), 2) == "equal"


def test_sigma_fixes_eps():
    a = S([1], offset=3, precision=9)
    assert a.sigma() == a


def test_sigma_coefficientwise_frobenius():
    tower = ExtensionTower(2, 1)
    lvl = tower.extend(2)
    w = tower.gen(lvl)
    a = TruncatedSeries(tower, 0, (w, w), 5)  # w + w*eps
    s = a.sigma()
    w1 = w + tower.one()
    assert s.coeff(0) == w1 and s.coeff(1) == w1


def test_sigma_fixes_base_coefficient_series():
    rng = random.Random(0)
    for _ in range(10):
        coeffs = [rng.randrange(2) for _ in range(6)]
        a = S(coeffs, precision=7)
        assert a.sigma() == a


def test_valuation_examples():
    a = S([1, 0, 1], offset=3, precision=9)  # eps^3 + eps^5
    assert a.valuation() == 3
    assert S([2], precision=5, tower=T3).valuation() == 0
    z = TruncatedSeries.zero(T2, 8)
    v = z.valuation()
    assert isinstance(v, ZeroToPrecision) and v.precision == 8


def test_zero_to_precision_comparison_is_three_valued():
    a = S([1], offset=0, precision=8)
    b = S([1], offset=0, precision=8)
    assert a.compare(b) == "equal"
    assert a.compare(S([1, 1], precision=8)) == "unequal"
    lowprec = S([1], offset=0, precision=5)
    # agreement holds as far as both are known, but cannot be certified at 8
    assert a.compare(lowprec) == "unknown"
    assert a.agrees(lowprec)
    with pytest.raises(PrecisionExhausted):
        a == lowprec


def test_inv_of_zero_to_precision_rejected():
    with pytest.raises(PrecisionExhausted):
        TruncatedSeries.zero(T2, 8).inv()


def test_precision_floor_helper():
    from fcrystals.series import ensure_floor

    assert ensure_floor(7) == 7
    with pytest.raises(PrecisionExhausted):
        ensure_floor(2, "pivot division")


small_series = st.builds(
    lambda ints, off: S(ints, offset=off, precision=10, tower=T3),
    st.lists(st.integers(0, 2), min_size=1, max_size=5),
    st.integers(-2, 2),
)


@settings(max_examples=40, deadline=None)
@given(small_series, small_series)
def test_valuation_additive_and_sigma_commutes(a, b):
    prod = a * b
    va, vb, vp = a.valuation(), b.valuation(), prod.valuation()
    if not isinstance(va, ZeroToPrecision) and not isinstance(vb, ZeroToPrecision):
        if not isinstance(vp, ZeroToPrecision):
            assert vp == va + vb
        assert a.sigma().valuation() == va
    assert (a * b).sigma().compare(a.sigma() * b.sigma()) == "equal"
    assert (a + b).sigma().compare(a.sigma() + b.sigma()) == "equal"


def _perturb_beyond_precision(a, junk):
    """Append junk coefficients strictly beyond a's precision window."""
    pad = a.precision - a.offset - len(a.coeffs)
    zero = a.tower.zero()
    coeffs = a.coeffs + (zero,) * pad + tuple(a.tower.from_int(n) for n in junk)
    return TruncatedSeries(a.tower, a.offset, coeffs, a.precision)


@settings(max_examples=40, deadline=None)
@given(small_series, small_series, st.lists(st.integers(1, 2), min_size=1, max_size=3))
def test_results_never_exceed_precision_contract(a, b, junk):
    # perturbing an input beyond its stated precision must not change results
    perturbed = _perturb_beyond_precision(a, junk)
    pa, pb = a * b, perturbed * b
    assert pa.precision == pb.precision
    assert pa.agrees(pb)
    assert (a + b).agrees(perturbed + b)


def test_perturbation_beyond_precision_inv():
    a = S([1, 1, 1], precision=4, tower=T3)
    bigger = _perturb_beyond_precision(a, [2, 2])
    assert a.inv().compare(bigger.inv()) == "equal"


def test_mul_by_int_and_shift():
    a = S([1, 2], precision=6, tower=T3)
    assert (a * 2).coeff(0) == T3.from_int(2)
    sh = a.shift(3)
    assert sh.valuation() == 3
    assert sh.precision == 9
