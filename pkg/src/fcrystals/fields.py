"""Arithmetic in towers of finite fields F_q < F_{q^m} < ...

A tower fixes q = p^d and grows through levels L_0 = F_q < L_1 < L_2 < ...,
each level cut out by a deterministically chosen irreducible polynomial over
the level below (smallest in the lexicographic order on coefficient tuples).
The chain stands in for an algebraically closed field of characteristic p:
whenever an equation needs a larger field, a level is appended on top and
every previously issued element stays valid.

Elements are immutable.  Internally an element of level k is a tuple of
level-(k-1) payloads; level-0 payloads are tuples of ints mod p.  Elements
are always normalized to the smallest level that contains them, so equality
and hashing are structural.
"""

from __future__ import annotations

import itertools
import threading

from .errors import BudgetExceeded, PreconditionError


def is_prime(n):
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


# ---------------------------------------------------------------------------
# payload contexts: raw arithmetic on nested coefficient tuples


class _PrimeCtx:
    """F_p with payloads that are plain ints in [0, p)."""

    def __init__(self, p):
        self.p = p
        self.zero = 0
        self.one = 1

    def add(self, a, b):
        return (a + b) % self.p

    def sub_el(self, a, b):
        return (a - b) % self.p

    def neg(self, a):
        return (-a) % self.p

    def mul(self, a, b):
        return (a * b) % self.p

    def inv(self, a):
        if a == 0:
            raise ZeroDivisionError("inversion of zero")
        return pow(a, -1, self.p)

    def is_zero(self, a):
        return a == 0

    def enumerate(self):
        return range(self.p)


class _ExtCtx:
    """F[x]/(modulus) over a sub-context; payloads are fixed-length tuples."""

    def __init__(self, sub, modulus):
        # modulus: monic, as a tuple of sub-payloads of length deg+1
        self.sub = sub
        self.modulus = modulus
        self.deg = len(modulus) - 1
        self.zero = (sub.zero,) * self.deg
        self.one = (sub.one,) + (sub.zero,) * (self.deg - 1)

    def add(self, a, b):
        s = self.sub
        return tuple(s.add(x, y) for x, y in zip(a, b))

    def sub_el(self, a, b):
        s = self.sub
        return tuple(s.sub_el(x, y) for x, y in zip(a, b))

    def neg(self, a):
        s = self.sub
        return tuple(s.neg(x) for x in a)

    def is_zero(self, a):
        s = self.sub
        return all(s.is_zero(x) for x in a)

    def mul(self, a, b):
        s = self.sub
        n = self.deg
        if n == 1:
            return (s.mul(a[0], b[0]),)
        prod = [s.zero] * (2 * n - 1)
        for i, ai in enumerate(a):
            if s.is_zero(ai):
                continue
            for j, bj in enumerate(b):
                if s.is_zero(bj):
                    continue
                prod[i + j] = s.add(prod[i + j], s.mul(ai, bj))
        for k in range(2 * n - 2, n - 1, -1):
            c = prod[k]
            if s.is_zero(c):
                continue
            prod[k] = s.zero
            for t in range(n):
                prod[k - n + t] = s.sub_el(prod[k - n + t], s.mul(c, self.modulus[t]))
        return tuple(prod[:n])

    def inv(self, a):
        if self.is_zero(a):
            raise ZeroDivisionError("inversion of zero")
        if self.deg == 1:
            return (self.sub.inv(a[0]),)
        s = self.sub
        r0 = list(self.modulus)
        r1 = _poly_trim(s, list(a))
        t0, t1 = [], [s.one]
        while True:
            q, r = _poly_divmod(s, r0, r1)
            if not r:
                break
            t0, t1 = t1, _poly_sub(s, t0, _poly_mul(s, q, t1))
            r0, r1 = r1, r
        # r1 is the gcd, a nonzero constant since the modulus is irreducible
        c = s.inv(r1[0])
        out = [s.mul(c, x) for x in t1]
        out += [s.zero] * (self.deg - len(out))
        return tuple(out[: self.deg])

    def enumerate(self):
        # lexicographic in the coefficient tuple (c_0, ..., c_{deg-1})
        pools = [list(self.sub.enumerate())] * self.deg
        return itertools.product(*pools)


# polynomial helpers over a context (coefficient lists, low degree first)


def _poly_trim(ctx, c):
    while c and ctx.is_zero(c[-1]):
        c.pop()
    return c


def _poly_sub(ctx, a, b):
    n = max(len(a), len(b))
    out = []
    for i in range(n):
        x = a[i] if i < len(a) else ctx.zero
        y = b[i] if i < len(b) else ctx.zero
        out.append(ctx.sub_el(x, y))
    return _poly_trim(ctx, out)


def _poly_mul(ctx, a, b):
    if not a or not b:
        return []
    out = [ctx.zero] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if ctx.is_zero(x):
            continue
        for j, y in enumerate(b):
            out[i + j] = ctx.add(out[i + j], ctx.mul(x, y))
    return _poly_trim(ctx, out)


def _poly_divmod(ctx, a, b):
    a = list(a)
    q = [ctx.zero] * max(0, len(a) - len(b) + 1)
    binv = ctx.inv(b[-1])
    while len(a) >= len(b):
        c = ctx.mul(a[-1], binv)
        k = len(a) - len(b)
        q[k] = c
        for i, x in enumerate(b):
            a[k + i] = ctx.sub_el(a[k + i], ctx.mul(c, x))
        _poly_trim(ctx, a)
        if not a:
            break
    return _poly_trim(ctx, q), a


def _poly_gcd(ctx, a, b):
    a, b = list(a), list(b)
    while b:
        _, r = _poly_divmod(ctx, a, b)
        a, b = b, r
    if a:
        c = ctx.inv(a[-1])
        a = [ctx.mul(c, x) for x in a]
    return a


def _poly_powmod(ctx, base, exp, mod):
    result = [ctx.one]
    base = _poly_divmod(ctx, base, mod)[1]
    while exp:
        if exp & 1:
            result = _poly_divmod(ctx, _poly_mul(ctx, result, base), mod)[1]
        base = _poly_divmod(ctx, _poly_mul(ctx, base, base), mod)[1]
        exp >>= 1
    return result


def _is_irreducible(ctx, coeffs, field_order):
    """Test a monic polynomial (tuple over ctx, length deg+1) for irreducibility."""
    s = len(coeffs) - 1
    if s == 1:
        return True
    mod = list(coeffs)
    x = [ctx.zero, ctx.one]
    xq = _poly_powmod(ctx, x, field_order**s, mod)
    if _poly_trim(ctx, _poly_sub(ctx, xq, x)) != []:
        return False
    for u in range(2, s + 1):
        if s % u == 0 and is_prime(u):
            xk = _poly_powmod(ctx, x, field_order ** (s // u), mod)
            g = _poly_gcd(ctx, _poly_sub(ctx, xk, x), mod)
            if len(g) > 1:
                return False
    return True


# ---------------------------------------------------------------------------
# the tower and its elements


class ExtensionTower:
    """Append-only chain of finite fields over F_q, q = p^d.

    Extension requests are serialized behind a lock; elements hold only
    (level, payload), so they survive later extensions unchanged.
    """

    def __init__(self, p, d=1):
        if not is_prime(p):
            raise PreconditionError(f"{p} is not prime")
        if d < 1:
            raise PreconditionError("d must be positive")
        self.p = p
        self.d = d
        self.q = p**d
        self._prime = _PrimeCtx(p)
        self._lock = threading.Lock()
        f0 = self._find_irreducible(self._prime, d, p)
        self._contexts = [_ExtCtx(self._prime, f0)]
        self._abs_degrees = [d]

    # -- structure -----------------------------------------------------------

    @property
    def num_levels(self):
        return len(self._contexts)

    def context(self, level):
        return self._contexts[level]

    def absolute_degree(self, level):
        """Degree over F_p of the given level."""
        return self._abs_degrees[level]

    def relative_degree(self, level):
        """Degree of the given level over the base F_q."""
        return self._abs_degrees[level] // self.d

    def level_order(self, level):
        return self.p ** self._abs_degrees[level]

    @staticmethod
    def _find_irreducible(ctx, s, order):
        """Lex-smallest monic irreducible of degree s over the context."""
        if s == 1:
            return (ctx.zero, ctx.one)
        for coeffs in itertools.product(list(ctx.enumerate()), repeat=s):
            cand = tuple(coeffs) + (ctx.one,)
            if _is_irreducible(ctx, cand, order):
                return cand
        raise BudgetExceeded("no irreducible polynomial found")  # pragma: no cover

    def extend(self, rel_degree):
        """Append a level of the given relative degree on top; returns its index."""
        if rel_degree < 2:
            raise PreconditionError("extension degree must be >= 2")
        with self._lock:
            top = len(self._contexts) - 1
            ctx = self._contexts[top]
            modulus = self._find_irreducible(ctx, rel_degree, self.level_order(top))
            self._contexts.append(_ExtCtx(ctx, modulus))
            self._abs_degrees.append(self._abs_degrees[top] * rel_degree)
            return len(self._contexts) - 1

    # -- element constructors --------------------------------------------------

    def element(self, level, payload):
        return FieldElement(self, level, payload)

    def from_flat(self, level, coords):
        return FieldElement(self, level, _payload_from_flat(self, level, tuple(coords)))

    def zero(self):
        return FieldElement(self, 0, self._contexts[0].zero)

    def one(self):
        return FieldElement(self, 0, self._contexts[0].one)

    def from_int(self, n):
        ctx = self._contexts[0]
        return FieldElement(self, 0, ((n % self.p),) + (0,) * (ctx.deg - 1))

    def gen(self, level=0):
        """The generator x of the given level over the one below."""
        ctx = self._contexts[level]
        if ctx.deg == 1:
            return FieldElement(self, level, ctx.neg(ctx.modulus[:1]))
        payload = (ctx.sub.zero, ctx.sub.one) + (ctx.sub.zero,) * (ctx.deg - 2)
        return FieldElement(self, level, payload)

    def enumerate_elements(self, level):
        """All elements of the level, lexicographic in coefficient tuples."""
        for payload in self._contexts[level].enumerate():
            yield FieldElement(self, level, payload)

    def random_element(self, level, rng):
        n = rng.randrange(self.level_order(level))
        digits = []
        for _ in range(self._abs_degrees[level]):
            digits.append(n % self.p)
            n //= self.p
        return self.from_flat(level, digits)

    # -- serialization -----------------------------------------------------------

    def describe(self):
        """Structure as nested lists: level polynomials in flat F_p coords."""
        levels = []
        for i, ctx in enumerate(self._contexts):
            coeffs = []
            for c in ctx.modulus:
                if i == 0:
                    coeffs.append([c])
                else:
                    coeffs.append(list(_flatten(self, i - 1, c)))
            levels.append(coeffs)
        return {"p": self.p, "d": self.d, "levels": levels}

    @classmethod
    def from_description(cls, desc):
        tower = cls(desc["p"], desc["d"])
        if desc["levels"] and desc["levels"][0] != tower.describe()["levels"][0]:
            raise PreconditionError("base polynomial mismatch in tower description")
        for i, poly in enumerate(desc["levels"][1:], start=1):
            tower.extend(len(poly) - 1)
            if tower.describe()["levels"][i] != poly:
                raise PreconditionError("tower description is not the deterministic chain")
        return tower

    def __repr__(self):
        degs = " < ".join(f"GF({self.p}^{t})" for t in self._abs_degrees)
        return f"ExtensionTower({degs})"


def _flatten(tower, level, payload):
    if level == 0:
        return tuple(payload)
    out = ()
    for c in payload:
        out += _flatten(tower, level - 1, c)
    return out


def _payload_from_flat(tower, level, coords):
    if level == 0:
        return tuple(c % tower.p for c in coords)
    ctx = tower.context(level)
    step = tower.absolute_degree(level - 1)
    return tuple(
        _payload_from_flat(tower, level - 1, coords[i * step : (i + 1) * step])
        for i in range(ctx.deg)
    )


def _lift_payload(tower, payload, from_level, to_level):
    for lvl in range(from_level + 1, to_level + 1):
        ctx = tower.context(lvl)
        payload = (payload,) + (ctx.sub.zero,) * (ctx.deg - 1)
    return payload


class FieldElement:
    """Immutable element of a tower level, normalized to its minimal level."""

    __slots__ = ("tower", "level", "payload")

    def __init__(self, tower, level, payload):
        while level > 0:
            ctx = tower.context(level)
            sub = ctx.sub
            if all(sub.is_zero(c) for c in payload[1:]):
                payload = payload[0]
                level -= 1
            else:
                break
        object.__setattr__(self, "tower", tower)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "payload", payload)

    def __setattr__(self, *a):
        raise AttributeError("FieldElement is immutable")

    # -- helpers ---------------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, int):
            other = self.tower.from_int(other)
        if other.tower is not self.tower:
            raise PreconditionError("elements belong to different towers")
        if self.level == other.level:
            return self.level, self.payload, other.payload
        lvl = max(self.level, other.level)
        pa = _lift_payload(self.tower, self.payload, self.level, lvl)
        pb = _lift_payload(self.tower, other.payload, other.level, lvl)
        return lvl, pa, pb

    def embed(self, level):
        """The same element viewed at a higher (or equal) level."""
        if level < self.level:
            raise PreconditionError("cannot embed downwards")
        return FieldElement(
            self.tower, level, _lift_payload(self.tower, self.payload, self.level, level)
        )

    def flat_coords(self, level=None):
        if level is None:
            level = self.level
        payload = _lift_payload(self.tower, self.payload, self.level, level)
        return _flatten(self.tower, level, payload)

    def is_zero(self):
        return self.tower.context(self.level).is_zero(self.payload)

    # -- arithmetic ---------------------------------------------------------------

    def __add__(self, other):
        lvl, a, b = self._coerce(other)
        return FieldElement(self.tower, lvl, self.tower.context(lvl).add(a, b))

    __radd__ = __add__

    def __sub__(self, other):
        lvl, a, b = self._coerce(other)
        return FieldElement(self.tower, lvl, self.tower.context(lvl).sub_el(a, b))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return FieldElement(
            self.tower, self.level, self.tower.context(self.level).neg(self.payload)
        )

    def __mul__(self, other):
        lvl, a, b = self._coerce(other)
        return FieldElement(self.tower, lvl, self.tower.context(lvl).mul(a, b))

    __rmul__ = __mul__

    def inv(self):
        return FieldElement(
            self.tower, self.level, self.tower.context(self.level).inv(self.payload)
        )

    def __truediv__(self, other):
        if isinstance(other, int):
            other = self.tower.from_int(other)
        return self * other.inv()

    def __pow__(self, n):
        if n < 0:
            return self.inv() ** (-n)
        result = self.tower.one()
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def frobenius(self):
        """x -> x^q, the arithmetic Frobenius of the tower."""
        return self**self.tower.q

    def frobenius_inverse(self):
        # the q-Frobenius has order t on the element's level F_{q^t}
        t = self.tower.relative_degree(self.level)
        x = self
        for _ in range(t - 1):
            x = x.frobenius()
        return x

    def sigma_pow(self, k):
        """x -> x^(q^k) for any integer k."""
        t = self.tower.relative_degree(self.level)
        k %= t
        x = self
        for _ in range(k):
            x = x.frobenius()
        return x

    # -- comparisons ---------------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, int):
            other = self.tower.from_int(other)
        if not isinstance(other, FieldElement):
            return NotImplemented
        return (
            self.tower is other.tower
            and self.level == other.level
            and self.payload == other.payload
        )

    def __hash__(self):
        return hash((id(self.tower), self.level, self.payload))

    def __repr__(self):
        return f"F<{self.level}>{list(self.flat_coords())}"


# ---------------------------------------------------------------------------
# F_p linear algebra on flattened coordinates


def _rref_mod_p(m, p):
    """In-place reduced row echelon form mod p; returns the pivot columns."""
    if not m:
        return []
    ncols = len(m[0])
    pivots = []
    r = 0
    for c in range(ncols):
        pivot = None
        for i in range(r, len(m)):
            if m[i][c] % p != 0:
                pivot = i
                break
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = pow(m[r][c], -1, p)
        m[r] = [(x * inv) % p for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] % p != 0:
                f = m[i][c]
                m[i] = [(x - f * y) % p for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return pivots


def solve_mod_p(rows, rhs, p):
    """Particular solution of rows * x = rhs over F_p, or None if inconsistent."""
    if not rows:
        return []
    m = [list(r) + [b % p] for r, b in zip(rows, rhs)]
    ncols = len(rows[0])
    pivots = _rref_mod_p(m, p)
    for i in range(len(pivots), len(m)):
        if m[i][-1] % p != 0:
            return None
    if pivots and pivots[-1] == ncols:  # pivot in the rhs column
        return None
    x = [0] * ncols
    for i, c in enumerate(pivots):
        x[c] = m[i][-1]
    return x


def kernel_mod_p(rows, p):
    """Basis of the right kernel of the matrix rows over F_p."""
    if not rows:
        return []
    ncols = len(rows[0])
    m = [list(r) for r in rows]
    pivots = _rref_mod_p(m, p)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        v = [0] * ncols
        v[fc] = 1
        for i, c in enumerate(pivots):
            v[c] = (-m[i][fc]) % p
        basis.append(v)
    return basis


# ---------------------------------------------------------------------------
# Artin-Schreier solving


def trace_to_base(x, level=None):
    """Trace down to F_q from the given level (default: the element's own).

    Works on normalized elements: summing q-Frobenius iterates over the
    relative degree of the target level hits each orbit element equally often,
    which is exactly the trace from that level.
    """
    if level is None:
        level = x.level
    t = x.tower.relative_degree(level)
    acc = x
    y = x
    for _ in range(t - 1):
        y = y.frobenius()
        acc = acc + y
    return acc


def artin_schreier_solve(c):
    """Solve theta^q - theta = c, extending the tower by degree p as needed.

    Returns (theta, extension_degree) where extension_degree is the relative
    degree adjoined over the level of c (1 if the solution already lived
    there).  The representative is the lex-smallest solution among theta + F_q.
    A degree-p step always kills the trace obstruction, since the relative
    trace of a constant is p * c = 0 in characteristic p.
    """
    tower = c.tower
    if c.is_zero():
        return tower.zero(), 1
    start_abs = tower.absolute_degree(c.level)
    level = c.level
    while True:
        if trace_to_base(c, level).is_zero():
            theta = _artin_schreier_at_level(c, level)
            return theta, max(tower.absolute_degree(level) // start_abs, 1)
        if level < tower.num_levels - 1:
            level += 1
        else:
            level = tower.extend(tower.p)


def _artin_schreier_at_level(c, level):
    tower = c.tower
    p = tower.p
    dim = tower.absolute_degree(level)
    cols = []
    for i in range(dim):
        coords = [0] * dim
        coords[i] = 1
        b = tower.from_flat(level, coords)
        img = b.frobenius() - b
        cols.append(img.flat_coords(level))
    rows = [[cols[j][i] for j in range(dim)] for i in range(dim)]
    sol = solve_mod_p(rows, list(c.flat_coords(level)), p)
    if sol is None:  # the trace test should have prevented this
        raise PreconditionError("Artin-Schreier system inconsistent despite zero trace")
    theta = tower.from_flat(level, sol)
    best, best_key = theta, theta.flat_coords(level)
    for a in tower.enumerate_elements(0):
        cand = theta + a
        key = cand.flat_coords(level)
        if key < best_key:
            best, best_key = cand, key
    return best
