"""Lattices in k((eps))^r, sigma-linear maps, and exact linear algebra.

Matrices are tuples of rows of TruncatedSeries.  A Lattice stores its basis
in epsilon-adic column Hermite form, which is the canonical representative:
two lattices are equal iff their canonical forms agree entrywise to shared
precision.  All pivoting is valuation-greedy to minimize precision loss.
"""

from __future__ import annotations

from .errors import PreconditionError, PrecisionExhausted, BudgetExceeded, StabilizationError
from .series import TruncatedSeries, ZeroToPrecision, ensure_floor


# ---------------------------------------------------------------------------
# series matrices (tuples of rows)


def mat_zero(tower, rows, cols, precision):
    z = TruncatedSeries.zero(tower, precision)
    return tuple(tuple(z for _ in range(cols)) for _ in range(rows))


def mat_identity(tower, n, precision):
    one = TruncatedSeries.one(tower, precision)
    z = TruncatedSeries.zero(tower, precision)
    return tuple(tuple(one if i == j else z for j in range(n)) for i in range(n))


def mat_add(a, b):
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a, b):
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_neg(a):
    return tuple(tuple(-x for x in r) for r in a)


def mat_mul(a, b):
    bt = tuple(zip(*b))
    out = []
    for ra in a:
        row = []
        for cb in bt:
            acc = None
            for x, y in zip(ra, cb):
                t = x * y
                acc = t if acc is None else acc + t
            row.append(acc)
        out.append(tuple(row))
    return tuple(out)


def mat_vec(a, v):
    out = []
    for ra in a:
        acc = None
        for x, y in zip(ra, v):
            t = x * y
            acc = t if acc is None else acc + t
        out.append(acc)
    return tuple(out)


def mat_scale(a, s):
    return tuple(tuple(x * s for x in r) for r in a)


def mat_shift(a, k):
    """Multiply every entry by eps^k."""
    return tuple(tuple(x.shift(k) for x in r) for r in a)


def mat_transpose(a):
    return tuple(zip(*a))


def mat_sigma_pow(a, k):
    if k == 0:
        return a
    return tuple(tuple(x.sigma_pow(k) for x in r) for r in a)


def mat_truncate(a, precision):
    return tuple(tuple(x.truncate(precision) for x in r) for r in a)


def mat_kron(a, b):
    """Kronecker product (column-major vec convention: vec(AXB) = (B^T (x) A) vec X)."""
    out = []
    for ra in a:
        for rb in b:
            row = []
            for x in ra:
                for y in rb:
                    row.append(x * y)
            out.append(tuple(row))
    return tuple(out)


def mat_min_valuation(a):
    v = None
    for r in a:
        for x in r:
            xv = x.valuation()
            if isinstance(xv, ZeroToPrecision):
                continue
            if v is None or xv < v:
                v = xv
    return v


def mat_precision(a):
    return min(x.precision for r in a for x in r)


def mat_is_zero(a):
    return all(x.is_zero() for r in a for x in r)


def mat_agrees(a, b, precision=None):
    return all(
        x.agrees(y, precision) for ra, rb in zip(a, b) for x, y in zip(ra, rb)
    )


def vec_matrix(m):
    """Column-major vectorization of an r x r matrix into an r^2 vector."""
    r = len(m)
    return tuple(m[i][j] for j in range(r) for i in range(r))


def unvec_matrix(v):
    r = int(round(len(v) ** 0.5))
    return tuple(tuple(v[j * r + i] for j in range(r)) for i in range(r))


def integral_part(s):
    """Terms of nonnegative degree (an element of k[[eps]] to precision)."""
    if s.offset >= 0:
        return s
    cut = -s.offset
    return TruncatedSeries(s.tower, 0, s.coeffs[cut:], s.precision)


def principal_part(s):
    """Terms of strictly negative degree."""
    if s.offset >= 0:
        return TruncatedSeries.zero(s.tower, s.precision)
    cut = min(len(s.coeffs), -s.offset)
    return TruncatedSeries(s.tower, s.offset, s.coeffs[:cut], s.precision)


# -- Gaussian elimination with valuation-greedy pivoting ----------------------------


def solve_square(a, b):
    """Solve a X = b for square a invertible to precision; b is a matrix."""
    n = len(a)
    aug = [list(ra) + list(rb) for ra, rb in zip(a, b)]
    width = len(aug[0])
    perm = list(range(n))
    for col in range(n):
        best, best_v = None, None
        for i in range(col, n):
            v = aug[i][col].valuation()
            if isinstance(v, ZeroToPrecision):
                continue
            if best is None or v < best_v:
                best, best_v = i, v
        if best is None:
            raise PrecisionExhausted("matrix singular to precision in solve")
        aug[col], aug[best] = aug[best], aug[col]
        ensure_floor(aug[col][col].precision - best_v, "pivot division")
        pivot_inv = aug[col][col].inv()
        aug[col] = [x * pivot_inv for x in aug[col]]
        for i in range(n):
            if i != col:
                f = aug[i][col]
                if not f.is_zero():
                    aug[i] = [x - f * y for x, y in zip(aug[i], aug[col])]
    return tuple(tuple(row[n:]) for row in aug)


def mat_inv(a):
    n = len(a)
    prec = mat_precision(a)
    return solve_square(a, mat_identity(a[0][0].tower, n, prec))


def mat_det(a):
    n = len(a)
    m = [list(r) for r in a]
    sign = 1
    tower = a[0][0].tower
    det = TruncatedSeries.one(tower, mat_precision(a))
    for col in range(n):
        best, best_v = None, None
        for i in range(col, n):
            v = m[i][col].valuation()
            if isinstance(v, ZeroToPrecision):
                continue
            if best is None or v < best_v:
                best, best_v = i, v
        if best is None:
            return TruncatedSeries.zero(tower, mat_precision(a))
        if best != col:
            m[col], m[best] = m[best], m[col]
            sign = -sign
        pivot = m[col][col]
        det = det * pivot
        pinv = pivot.inv()
        for i in range(col + 1, n):
            f = m[i][col]
            if not f.is_zero():
                f = f * pinv
                m[i] = [x - f * y for x, y in zip(m[i], m[col])]
    if sign < 0:
        det = -det
    return det


def solve_in_span(cols, targets, dim):
    """Coordinates X with [cols] X = targets, cols a full-column-rank dim x k system.

    cols and targets are sequences of column vectors.  Raises if the system is
    inconsistent to precision (targets outside the span).
    """
    k = len(cols)
    m = len(targets)
    aug = [[cols[j][i] for j in range(k)] + [t[i] for t in targets] for i in range(dim)]
    pivots = []
    used_rows = []
    for col in range(k):
        best, best_v = None, None
        for i in range(dim):
            if i in used_rows:
                continue
            v = aug[i][col].valuation()
            if isinstance(v, ZeroToPrecision):
                continue
            if best is None or v < best_v:
                best, best_v = i, v
        if best is None:
            raise PreconditionError("columns not independent to precision")
        used_rows.append(best)
        pivots.append((best, col))
        pinv = aug[best][col].inv()
        aug[best] = [x * pinv for x in aug[best]]
        for i in range(dim):
            if i != best:
                f = aug[i][col]
                if not f.is_zero():
                    aug[i] = [x - f * y for x, y in zip(aug[i], aug[best])]
    for i in range(dim):
        if i in used_rows:
            continue
        for j in range(k, k + m):
            if not aug[i][j].is_zero():
                raise PreconditionError("target vector outside the span to precision")
    out = []
    order = {col: row for row, col in pivots}
    for col in range(k):
        row = order[col]
        out.append(tuple(aug[row][k + j] for j in range(m)))
    return tuple(out)  # k x m


# ---------------------------------------------------------------------------
# canonical column Hermite form and lattices


def _hermite_columns(columns, dim):
    """Canonical epsilon-adic column Hermite form.

    Returns (cols, pivot_rows, pivot_vals): columns ordered by strictly
    increasing pivot row; each pivot entry is exactly eps^a; entries of other
    columns in a pivot row are zero (later columns) or reduced mod eps^a
    (earlier columns).  Zero-to-precision columns are dropped.
    """
    cols = [list(c) for c in columns]
    pivot_of_col = {}
    for row in range(dim):
        best, best_v = None, None
        for j, c in enumerate(cols):
            if j in pivot_of_col:
                continue
            v = c[row].valuation()
            if isinstance(v, ZeroToPrecision):
                continue
            if best is None or v < best_v:
                best, best_v = j, v
        if best is None:
            continue
        pivot_of_col[best] = (row, best_v)
        c = cols[best]
        ensure_floor(c[row].precision - best_v, "Hermite pivot")
        unit_inv = c[row].shift(-best_v).inv()
        cols[best] = [x * unit_inv for x in c]
        # exact pivot: overwrite with eps^a at the pivot's precision
        pcol = cols[best]
        pcol[row] = TruncatedSeries.eps_power(
            pcol[row].tower, best_v, pcol[row].precision
        )
        for j, other in enumerate(cols):
            if j == best:
                continue
            e = other[row]
            if e.is_zero():
                continue
            if j in pivot_of_col:
                q = integral_part(e.shift(-best_v))
            else:
                q = e.shift(-best_v)
                if q.offset < 0 and not q.is_zero():
                    raise PreconditionError("pivot not minimal; internal error")
            if q.is_zero():
                continue
            cols[j] = [x - q * y for x, y in zip(other, pcol)]
    ordered = sorted(pivot_of_col.items(), key=lambda kv: kv[1][0])
    out_cols = tuple(tuple(cols[j]) for j, _ in ordered)
    pivot_rows = tuple(rv[0] for _, rv in ordered)
    pivot_vals = tuple(rv[1] for _, rv in ordered)
    for j, c in enumerate(cols):
        if j not in pivot_of_col and not all(x.is_zero() for x in c):
            raise StabilizationError("non-pivot column failed to vanish")  # pragma: no cover
    return out_cols, pivot_rows, pivot_vals


class Lattice:
    """Finitely generated eps-adic lattice, canonicalized eagerly."""

    __slots__ = ("tower", "dim", "cols", "pivot_rows", "pivot_vals", "precision")

    def __init__(self, tower, dim, generators, expect_rank=None, precision=None):
        cols, prows, pvals = _hermite_columns(generators, dim)
        if expect_rank is not None and len(cols) != expect_rank:
            raise PreconditionError(
                f"rank deficiency to precision: got {len(cols)}, expected {expect_rank}"
            )
        object.__setattr__(self, "tower", tower)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "pivot_rows", prows)
        object.__setattr__(self, "pivot_vals", pvals)
        prec = min((x.precision for c in cols for x in c), default=precision or 0)
        object.__setattr__(self, "precision", prec)

    def __setattr__(self, *a):
        raise AttributeError("Lattice is immutable")

    @property
    def rank(self):
        return len(self.cols)

    @classmethod
    def standard(cls, tower, dim, precision):
        return cls(tower, dim, tuple(zip(*mat_identity(tower, dim, precision))))

    @classmethod
    def zero(cls, tower, dim, precision):
        return cls(tower, dim, (), precision=precision)

    def basis_matrix(self):
        """dim x rank matrix whose columns generate the lattice."""
        return tuple(zip(*self.cols))

    def scaled(self, k):
        return Lattice(self.tower, self.dim, tuple(tuple(x.shift(k) for x in c) for c in self.cols))

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        if (
            self.dim != other.dim
            or self.rank != other.rank
            or self.pivot_rows != other.pivot_rows
            or self.pivot_vals != other.pivot_vals
        ):
            return False
        prec = min(self.precision, other.precision)
        for ca, cb in zip(self.cols, other.cols):
            for x, y in zip(ca, cb):
                if not x.agrees(y, prec):
                    return False
        return True

    def __hash__(self):
        return hash((self.dim, self.pivot_rows, self.pivot_vals))

    def __repr__(self):
        return f"Lattice(dim={self.dim}, rank={self.rank}, pivots={list(zip(self.pivot_rows, self.pivot_vals))})"

    # -- operations -------------------------------------------------------------

    def sum(self, other):
        self._check_compatible(other)
        return Lattice(self.tower, self.dim, self.cols + other.cols)

    def coords_of(self, vectors):
        """Coordinates of column vectors in this basis (error if outside span)."""
        return solve_in_span(self.cols, vectors, self.dim)

    def contains_vector(self, v):
        try:
            coords = solve_in_span(self.cols, (v,), self.dim)
        except PreconditionError:
            return False
        for row in coords:
            x = row[0]
            if x.is_zero():
                continue
            if x.valuation() < 0:
                return False
        return True

    def contains_lattice(self, other):
        try:
            coords = solve_in_span(self.cols, other.cols, self.dim)
        except PreconditionError:
            return False
        for row in coords:
            for x in row:
                if not x.is_zero() and x.valuation() < 0:
                    return False
        return True

    def intersect(self, other):
        """Intersection; both lattices must span the same subspace."""
        self._check_compatible(other)
        if self.rank != other.rank:
            raise PreconditionError("intersection requires equal spans")
        k = self.rank
        if k == 0:
            return self
        x = solve_in_span(self.cols, other.cols, self.dim)  # k x k, self-coords of other
        # O^k meet X O^k = dual(dual(O^k) + dual(X O^k)); dual(M O^k) = (M^T)^-1 O^k
        tower = self.tower
        prec = min(self.precision, other.precision)
        xinv_t = mat_transpose(mat_inv(x))
        gens = tuple(zip(*mat_identity(tower, k, prec))) + tuple(zip(*xinv_t))
        s = Lattice(tower, k, gens)
        dual_basis = mat_transpose(mat_inv(s.basis_matrix()))
        coord_lattice_cols = tuple(zip(*dual_basis))
        # transport back through self's basis
        basis = self.basis_matrix()
        out = tuple(mat_vec(basis, c) for c in coord_lattice_cols)
        return Lattice(tower, self.dim, out)

    def index_in(self, other):
        """log_eps of [other : self] for self contained in other (same rank)."""
        if not other.contains_lattice(self):
            raise PreconditionError("index requires containment")
        coords = solve_in_span(other.cols, self.cols, self.dim)
        d = mat_det(coords)
        v = d.valuation()
        if isinstance(v, ZeroToPrecision):
            raise PrecisionExhausted("index undecidable: determinant zero to precision")
        return v

    def min_scale_into(self, other):
        """Least n >= 0 with eps^n * self contained in other (same span)."""
        coords = solve_in_span(other.cols, self.cols, self.dim)
        worst = 0
        for row in coords:
            for x in row:
                v = x.valuation()
                if isinstance(v, ZeroToPrecision):
                    continue
                if -v > worst:
                    worst = -v
        return worst

    def _check_compatible(self, other):
        if self.tower is not other.tower or self.dim != other.dim:
            raise PreconditionError("lattices live in different ambient spaces")


def lattice_canonicalize(tower, dim, generators, expect_full_rank=True):
    """Public canonicalization; errors on rank deficiency when a basis is expected."""
    return Lattice(tower, dim, generators, expect_rank=dim if expect_full_rank else None)


def lattice_ops(a, b, op, vector=None):
    if op == "sum":
        return a.sum(b)
    if op == "intersect":
        return a.intersect(b)
    if op == "member":
        return a.contains_vector(vector)
    if op == "index":
        return a.index_in(b)
    raise PreconditionError(f"unknown op {op!r}")


def lattice_valuation(f, H):
    """v_H(f) = -inf{k : eps^k f in H}; f a vector or matrix over the ambient space."""
    if f and isinstance(f[0], tuple) and len(f) * len(f[0]) == H.dim:
        f = vec_matrix(f)
    if all(x.is_zero() for x in f):
        raise PreconditionError("v_H of a vector that is zero to precision")
    coords = solve_in_span(H.cols, (f,), H.dim)
    vmin = None
    for row in coords:
        v = row[0].valuation()
        if isinstance(v, ZeroToPrecision):
            continue
        if vmin is None or v < vmin:
            vmin = v
    if vmin is None:
        raise PrecisionExhausted("v_H undecidable at this precision")
    return vmin


# ---------------------------------------------------------------------------
# sigma-linear maps


class SigmaMap:
    """v -> A * sigma^twist(v), a sigma^twist-linear bijection of k((eps))^r."""

    __slots__ = ("matrix", "twist")

    def __init__(self, matrix, twist=1):
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "twist", twist)

    def __setattr__(self, *a):
        raise AttributeError("SigmaMap is immutable")

    @property
    def dim(self):
        return len(self.matrix)

    @property
    def tower(self):
        return self.matrix[0][0].tower

    def apply(self, v):
        return mat_vec(self.matrix, tuple(x.sigma_pow(self.twist) for x in v))

    def apply_matrix(self, m):
        return mat_mul(self.matrix, mat_sigma_pow(m, self.twist))

    def apply_lattice(self, lat):
        return Lattice(lat.tower, lat.dim, tuple(self.apply(c) for c in lat.cols))

    def inverse(self):
        """The inverse bijection, as a SigmaMap with opposite twist."""
        return SigmaMap(mat_sigma_pow(mat_inv(self.matrix), -self.twist), -self.twist)

    def compose(self, other):
        """self after other."""
        return SigmaMap(
            mat_mul(self.matrix, mat_sigma_pow(other.matrix, self.twist)),
            self.twist + other.twist,
        )

    def det_valuation(self):
        d = mat_det(self.matrix)
        v = d.valuation()
        if isinstance(v, ZeroToPrecision):
            raise PrecisionExhausted("determinant zero to precision")
        return v


def twisted_power(psi, s):
    """Matrix of psi^s: A sigma(A) ... sigma^(s-1)(A), by a doubling ladder."""
    if s < 1:
        raise PreconditionError("twisted power needs s >= 1")
    t = psi.twist
    # ladder on (matrix, steps): M_{2k} = M_k * sigma^(k t)(M_k)
    bits = bin(s)[2:]
    acc = psi.matrix
    steps = 1
    for b in bits[1:]:
        acc = mat_mul(acc, mat_sigma_pow(acc, steps * t))
        steps *= 2
        if b == "1":
            acc = mat_mul(acc, mat_sigma_pow(psi.matrix, steps * t))
            steps += 1
    return acc


def hodge_polygon(psi):
    """Elementary-divisor exponents (Smith normal form over k[[eps]]), ascending."""
    m = psi.matrix if isinstance(psi, SigmaMap) else psi
    return smith_exponents(m)


def smith_exponents(matrix, total=None):
    """Smith-form exponents with valuation-greedy pivoting, ascending.

    When the last remaining 1x1 block sits beyond the working precision but
    the determinant valuation is known exactly (the total hint), the final
    exponent is inferred from it instead of failing.
    """
    n = len(matrix)
    shift = mat_min_valuation(matrix)
    if shift is None:
        raise PrecisionExhausted("matrix is zero to precision")
    work = [list(r) for r in mat_shift(matrix, -shift)] if shift else [list(r) for r in matrix]
    base = shift if shift else 0
    exps = []
    top = 0
    while top < n:
        best, best_v = None, None
        for i in range(top, n):
            for j in range(top, n):
                v = work[i][j].valuation()
                if isinstance(v, ZeroToPrecision):
                    continue
                if best is None or v < best_v:
                    best, best_v = (i, j), v
        if best is None:
            if total is not None and top == n - 1:
                # exps already carry the shift, so the hint closes the gap
                exps.append(total - sum(exps))
                return tuple(sorted(exps))
            raise PrecisionExhausted("Smith form: remaining block zero to precision")
        bi, bj = best
        work[top], work[bi] = work[bi], work[top]
        for row in work:
            row[top], row[bj] = row[bj], row[top]
        pivot = work[top][top]
        pinv = pivot.inv()
        for i in range(top + 1, n):
            f = work[i][top]
            if not f.is_zero():
                f = f * pinv
                work[i] = [x - f * y for x, y in zip(work[i], work[top])]
        for j in range(top + 1, n):
            f = work[top][j]
            if not f.is_zero():
                f = f * pinv
                for i in range(top, n):
                    work[i][j] = work[i][j] - f * work[i][top]
        exps.append(best_v + base)
        top += 1
    return tuple(sorted(exps))


# ---------------------------------------------------------------------------
# Lang map on lattices and finite quotients


def lang_image(psi, lat, slope_sign):
    """The lattice (psi - 1)(N) for psi isoclinic of the certified sign on
    the span of N.

    Nonzero slope: N + psi(N).  Zero slope: N itself (coefficientwise
    Artin-Schreier surjectivity over the growing tower), which requires
    psi(N) = N.  The certificate is checked against the valuation of the
    determinant of psi restricted to the span.
    """
    if lat.rank == 0:
        return lat
    img = psi.apply_lattice(lat)
    restricted = solve_in_span(lat.cols, tuple(psi.apply(c) for c in lat.cols), lat.dim)
    dv = mat_det(restricted).valuation()
    if isinstance(dv, ZeroToPrecision):
        raise PrecisionExhausted("restricted determinant zero to precision")
    if slope_sign == "zero":
        if dv != 0 or img != lat:
            raise PreconditionError("zero-slope certificate inconsistent: psi(N) != N")
        return lat
    if slope_sign == "positive":
        if dv <= 0:
            raise PreconditionError("positive-slope certificate inconsistent with det valuation")
        return lat.sum(img)
    if slope_sign == "negative":
        if dv >= 0:
            raise PreconditionError("negative-slope certificate inconsistent with det valuation")
        return lat.sum(img)
    raise PreconditionError(f"unknown slope sign {slope_sign!r}")


def lang_fiber_census(psi, n, m, level=None, budget=2**20):
    """Enumerate the additive map psi - 1 on N_n / N_m, N the standard lattice.

    Coefficients are drawn from the given tower level (default: the highest
    level appearing in psi's matrix).  Returns (domain_size, image_size,
    fiber_size); every nonempty fiber is checked to have the same size.
    """
    if m <= n:
        raise PreconditionError("census needs n < m")
    tower = psi.tower
    if level is None:
        level = max(
            (c.level for row in psi.matrix for entry in row for c in entry.coeffs),
            default=0,
        )
    r = psi.dim
    width = m - n
    order = tower.level_order(level)
    domain = order ** (r * width)
    if domain > budget:
        raise BudgetExceeded(f"census domain {domain} exceeds budget {budget}")
    prec = mat_precision(psi.matrix)
    if prec < m + 1:
        raise PrecisionExhausted("psi matrix precision too low for the census window")
    # the map on the quotient is well-defined modulo M' = N_m + psi(N_m)
    em = [tuple(
        TruncatedSeries.eps_power(tower, m, prec) if i == j else TruncatedSeries.zero(tower, prec)
        for i in range(r)
    ) for j in range(r)]
    mprime = Lattice(tower, r, tuple(em) + tuple(psi.apply(c) for c in em))
    elems = list(tower.enumerate_elements(level))

    def encode(vec):
        key = []
        for entry in vec:
            key.append((entry.offset, tuple(c.flat_coords(level) for c in entry.coeffs)))
        return tuple(key)

    def reduce_mod(vec):
        coords = solve_in_span(mprime.cols, (vec,), r)
        frac = tuple(principal_part(row[0]) for row in coords)
        return mat_vec(mprime.basis_matrix(), frac)

    import itertools

    counts = {}
    for assignment in itertools.product(range(len(elems)), repeat=r * width):
        vec = []
        for i in range(r):
            coeffs = [elems[assignment[i * width + t]] for t in range(width)]
            vec.append(TruncatedSeries(tower, n, coeffs, prec))
        vec = tuple(vec)
        img = tuple(x - y for x, y in zip(psi.apply(vec), vec))
        key = encode(reduce_mod(img))
        counts[key] = counts.get(key, 0) + 1
    sizes = set(counts.values())
    if len(sizes) != 1:
        raise StabilizationError(f"fibers of unequal size: {sorted(sizes)}")
    fiber = sizes.pop()
    image_size = len(counts)
    if image_size * fiber != domain:
        raise StabilizationError("fiber law violated")  # pragma: no cover
    return domain, image_size, fiber


def series_kernel(rows, ncols):
    """Basis of the right kernel over k((eps)) of a full-row-rank matrix."""
    m = [list(r) for r in rows]
    nrows = len(m)
    pivots = {}
    used_cols = set()
    r = 0
    for col in range(ncols):
        best, best_v = None, None
        for i in range(r, nrows):
            v = m[i][col].valuation()
            if isinstance(v, ZeroToPrecision):
                continue
            if best is None or v < best_v:
                best, best_v = i, v
        if best is None:
            continue
        m[r], m[best] = m[best], m[r]
        pinv = m[r][col].inv()
        m[r] = [x * pinv for x in m[r]]
        for i in range(nrows):
            if i != r and not m[i][col].is_zero():
                f = m[i][col]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots[col] = r
        used_cols.add(col)
        r += 1
        if r == nrows:
            break
    if not rows:
        r = 0
    free = [c for c in range(ncols) if c not in used_cols]
    tower = rows[0][0].tower if rows else None
    prec = mat_precision(rows) if rows else 0
    out = []
    for fc in free:
        v = [TruncatedSeries.zero(tower, prec) for _ in range(ncols)]
        v[fc] = TruncatedSeries.one(tower, prec)
        for col, ri in pivots.items():
            v[col] = -m[ri][fc]
        out.append(tuple(v))
    return tuple(out)


# ---------------------------------------------------------------------------
# subspace meet standard lattice (saturation)


def field_dependency(vectors, tower):
    """A nontrivial linear dependency over the residue field, or None.

    vectors: list of equal-length tuples of FieldElements.
    """
    if not vectors:
        return None
    k = len(vectors)
    dim = len(vectors[0])
    cols = [list(v) for v in vectors]
    # Gauss on the k columns; record the elimination to express dependencies
    coeffs = [[tower.one() if i == j else tower.zero() for j in range(k)] for i in range(k)]
    used_rows = set()
    for j in range(k):
        pivot_row = None
        for i in range(dim):
            if i in used_rows:
                continue
            if not cols[j][i].is_zero():
                pivot_row = i
                break
        if pivot_row is None:
            out = coeffs[j]
            if all(c.is_zero() for c in out):  # pragma: no cover
                return None
            return tuple(out)
        used_rows.add(pivot_row)
        inv = cols[j][pivot_row].inv()
        for jj in range(j + 1, k):
            f = cols[jj][pivot_row] * inv
            if f.is_zero():
                continue
            cols[jj] = [x - f * y for x, y in zip(cols[jj], cols[j])]
            coeffs[jj] = [x - f * y for x, y in zip(coeffs[jj], coeffs[j])]
    return None


def saturate_in_standard(columns, dim, tower):
    """Basis of span(columns) meet k[[eps]]^dim, columns independent over k((eps))."""
    cols = []
    for c in columns:
        vals = [x.valuation() for x in c if not isinstance(x.valuation(), ZeroToPrecision)]
        if not vals:
            raise PreconditionError("zero column in saturation")
        v = min(vals)
        cols.append([x.shift(-v) for x in c])
    cap = sum(x.precision for c in cols for x in c) + 10
    for _ in range(cap):
        residues = [tuple(x.coeff(0) for x in c) for c in cols]
        dep = field_dependency(residues, tower)
        if dep is None:
            return Lattice(tower, dim, tuple(tuple(c) for c in cols), expect_rank=len(cols))
        j = max(i for i, c in enumerate(dep) if not c.is_zero())
        new = None
        prec = min(x.precision for c in cols for x in c)
        for i, coef in enumerate(dep):
            if coef.is_zero():
                continue
            term = [x * TruncatedSeries.constant(coef, prec) for x in cols[i]]
            new = term if new is None else [a + b for a, b in zip(new, term)]
        vals = [x.valuation() for x in new if not isinstance(x.valuation(), ZeroToPrecision)]
        if not vals:
            raise PrecisionExhausted("saturation combination vanished to precision")
        v = min(vals)
        if v < 1:
            raise StabilizationError("saturation failed to gain valuation")  # pragma: no cover
        cols[j] = [x.shift(-v) for x in new]
    raise StabilizationError("saturation did not stabilize")  # pragma: no cover
