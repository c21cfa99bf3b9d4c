"""Truncated Laurent series over a field tower, with explicit precision.

A series is known modulo eps^precision.  Zero-to-precision is a distinct
state (empty coefficient list); its valuation is a marker object carrying
the precision, and callers that need a decision must treat the marker as
"unknown beyond precision".
"""

from __future__ import annotations

from .errors import PrecisionExhausted, PreconditionError

# precision-consuming algorithms (lattice pivots, twisted-map inverses) call
# ensure_floor before working at a given absolute precision; plain series
# arithmetic only tracks precision, since inversion preserves the relative
# precision window and must support results like eps^-1 + O(eps)
PRECISION_FLOOR = 4


def ensure_floor(precision, context=""):
    if precision < PRECISION_FLOOR:
        raise PrecisionExhausted(
            f"precision {precision} below floor {PRECISION_FLOOR}"
            + (f" in {context}" if context else "")
        )
    return precision


class ZeroToPrecision:
    """Marker for "zero as far as we can see", carrying the precision bound."""

    __slots__ = ("precision",)

    def __init__(self, precision):
        self.precision = precision

    def __eq__(self, other):
        return isinstance(other, ZeroToPrecision) and self.precision == other.precision

    def __repr__(self):
        return f"ZeroToPrecision({self.precision})"


class TruncatedSeries:
    """sum coeffs[i] * eps^(offset+i), known modulo eps^precision.

    Normalized: the leading stored coefficient is nonzero (or there are no
    coefficients at all), trailing zeros and coefficients at or beyond the
    precision are dropped.
    """

    __slots__ = ("tower", "offset", "coeffs", "precision")

    def __init__(self, tower, offset, coeffs, precision):
        start = 0
        n = len(coeffs)
        while start < n and coeffs[start].is_zero():
            start += 1
        offset += start
        end = min(n, start + max(0, precision - offset))
        while end > start and coeffs[end - 1].is_zero():
            end -= 1
        coeffs = tuple(coeffs[start:end])
        if not coeffs:
            offset = 0
        object.__setattr__(self, "tower", tower)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "precision", precision)

    def __setattr__(self, *a):
        raise AttributeError("TruncatedSeries is immutable")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, tower, precision):
        return cls(tower, 0, (), precision)

    @classmethod
    def one(cls, tower, precision):
        return cls(tower, 0, (tower.one(),), precision)

    @classmethod
    def constant(cls, value, precision):
        return cls(value.tower, 0, (value,), precision)

    @classmethod
    def eps_power(cls, tower, k, precision):
        return cls(tower, k, (tower.one(),), precision)

    @classmethod
    def from_int_coeffs(cls, tower, offset, ints, precision):
        return cls(tower, offset, tuple(tower.from_int(n) for n in ints), precision)

    # -- inspection ---------------------------------------------------------

    def is_zero(self):
        return not self.coeffs

    def valuation(self):
        """Index of the first nonzero coefficient, or a ZeroToPrecision marker."""
        if not self.coeffs:
            return ZeroToPrecision(self.precision)
        return self.offset

    def valuation_or_raise(self):
        v = self.valuation()
        if isinstance(v, ZeroToPrecision):
            raise PrecisionExhausted(
                f"valuation undecidable: zero to precision {v.precision}"
            )
        return v

    def coeff(self, n):
        """Coefficient of eps^n (zero element if absent; error beyond precision)."""
        if n >= self.precision:
            raise PrecisionExhausted(f"coefficient {n} beyond precision {self.precision}")
        i = n - self.offset
        if not self.coeffs or i < 0 or i >= len(self.coeffs):
            return self.tower.zero()
        return self.coeffs[i]

    def __repr__(self):
        if not self.coeffs:
            return f"O(eps^{self.precision})"
        parts = []
        for i, c in enumerate(self.coeffs):
            if not c.is_zero():
                parts.append(f"{c}*eps^{self.offset + i}")
        return " + ".join(parts) + f" + O(eps^{self.precision})"

    # -- precision bookkeeping ---------------------------------------------------

    def truncate(self, precision):
        """The same value at lower precision."""
        if precision >= self.precision:
            return self
        return TruncatedSeries(self.tower, self.offset, self.coeffs, precision)

    def shift(self, k):
        """Multiply by eps^k (precision shifts with the value)."""
        return TruncatedSeries(self.tower, self.offset + k, self.coeffs, self.precision + k)

    # -- ring operations -----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, int):
            other = TruncatedSeries.constant(self.tower.from_int(other), self.precision)
        prec = min(self.precision, other.precision)
        if not self.coeffs:
            return other.truncate(prec)
        if not other.coeffs:
            return self.truncate(prec)
        lo = min(self.offset, other.offset)
        hi = min(max(self.offset + len(self.coeffs), other.offset + len(other.coeffs)), prec)
        zero = self.tower.zero()
        out = [zero] * max(0, hi - lo)
        for i, c in enumerate(self.coeffs):
            j = self.offset + i - lo
            if 0 <= j < len(out):
                out[j] = out[j] + c
        for i, c in enumerate(other.coeffs):
            j = other.offset + i - lo
            if 0 <= j < len(out):
                out[j] = out[j] + c
        return TruncatedSeries(self.tower, lo, out, prec)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(
            self.tower, self.offset, tuple(-c for c in self.coeffs), self.precision
        )

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, int):
            other = TruncatedSeries.constant(self.tower.from_int(other), self.precision)
        # precision contract: min(prec_a + val_b, prec_b + val_a), where the
        # valuation of a zero-to-precision factor is its precision bound
        va = self.offset if self.coeffs else self.precision
        vb = other.offset if other.coeffs else other.precision
        prec = min(self.precision + vb, other.precision + va)
        if not self.coeffs or not other.coeffs:
            return TruncatedSeries.zero(self.tower, prec)
        lo = self.offset + other.offset
        out_len = min(len(self.coeffs) + len(other.coeffs) - 1, max(0, prec - lo))
        zero = self.tower.zero()
        out = [zero] * out_len
        for i, a in enumerate(self.coeffs):
            if a.is_zero():
                continue
            jmax = min(len(other.coeffs), out_len - i)
            for j in range(jmax):
                b = other.coeffs[j]
                if not b.is_zero():
                    out[i + j] = out[i + j] + a * b
        return TruncatedSeries(self.tower, lo, out, prec)

    __rmul__ = __mul__

    def inv(self):
        """Inverse; costs 2 * valuation of absolute precision."""
        if not self.coeffs:
            raise PrecisionExhausted(
                f"cannot invert a series that is zero to precision {self.precision}"
            )
        v = self.offset
        n = self.precision - 2 * v  # result precision
        m = self.precision - v  # number of unit-part coefficients we may use
        a = self.coeffs
        zero = self.tower.zero()
        u = [a[i] if i < len(a) else zero for i in range(m)]
        b0 = u[0].inv()
        out = [zero] * m
        out[0] = b0
        for k in range(1, min(m, n + v)):
            acc = zero
            for i in range(1, k + 1):
                if i < len(u) and not u[i].is_zero() and not out[k - i].is_zero():
                    acc = acc + u[i] * out[k - i]
            out[k] = -(b0 * acc)
        return TruncatedSeries(self.tower, -v, out, n)

    def __truediv__(self, other):
        return self * other.inv()

    # -- semilinear operations ---------------------------------------------------

    def sigma(self):
        """Coefficientwise q-power Frobenius; fixes eps, keeps precision."""
        return TruncatedSeries(
            self.tower, self.offset, tuple(c.frobenius() for c in self.coeffs), self.precision
        )

    def sigma_pow(self, k):
        """Coefficientwise q^k-power for any integer k."""
        if k == 0:
            return self
        return TruncatedSeries(
            self.tower, self.offset, tuple(c.sigma_pow(k) for c in self.coeffs), self.precision
        )

    def max_level(self):
        lvl = 0
        for c in self.coeffs:
            if c.level > lvl:
                lvl = c.level
        return lvl

    # -- comparisons ---------------------------------------------------------

    def compare(self, other, decision_precision=None):
        """Three-valued comparison: 'equal', 'unequal', or 'unknown'.

        The decision precision defaults to the larger of the two stated
        precisions; a difference that vanishes only to a lower precision
        cannot certify equality and yields 'unknown'.
        """
        if decision_precision is None:
            decision_precision = max(self.precision, other.precision)
        d = self - other
        if d.coeffs:
            return "unequal"
        if d.precision >= decision_precision:
            return "equal"
        return "unknown"

    def agrees(self, other, precision=None):
        """True when the two values agree to the given (or shared) precision."""
        if precision is None:
            precision = min(self.precision, other.precision)
        return self.compare(other, decision_precision=precision) == "equal"

    def __eq__(self, other):
        if isinstance(other, int):
            other = TruncatedSeries.constant(self.tower.from_int(other), self.precision)
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        c = self.compare(other)
        if c == "unknown":
            raise PrecisionExhausted("series comparison undecidable at this precision")
        return c == "equal"

    def __hash__(self):
        return hash((id(self.tower), self.offset, self.coeffs))


def series_arithmetic(a, b, op):
    """Dispatch wrapper: op in {"add", "mul", "inv"} (inv ignores b)."""
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "inv":
        return a.inv()
    raise PreconditionError(f"unknown op {op!r}")
