"""F-crystals and F-isocrystals over k((eps)).

Constructors for standard simple objects and twisted direct sums, Newton
polygons through stabilized rescaled Hodge polygons of twisted powers, the
slope decomposition by unit-root splitting plus a contraction iteration, and
the endomorphism crystal with its positive/zero/negative slope split.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import PreconditionError, StabilizationError
from .fields import FieldElement
from .lattices import (
    Lattice,
    SigmaMap,
    mat_agrees,
    mat_det,
    mat_identity,
    mat_inv,
    mat_kron,
    mat_mul,
    mat_precision,
    mat_shift,
    mat_sigma_pow,
    mat_transpose,
    mat_vec,
    saturate_in_standard,
    series_kernel,
    smith_exponents,
    solve_in_span,
    twisted_power,
    vec_matrix,
)
from .series import TruncatedSeries, ZeroToPrecision


class FCrystal:
    """A free module of rank r with a sigma-linear map given by its matrix.

    The pair is an honest F-crystal (rather than only an isocrystal) exactly
    when the matrix is integral; the flag is computed, never asserted.
    """

    __slots__ = ("tower", "matrix", "precision")

    def __init__(self, tower, matrix, precision=None):
        if precision is None:
            precision = mat_precision(matrix)
        object.__setattr__(self, "tower", tower)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "precision", precision)

    def __setattr__(self, *a):
        raise AttributeError("FCrystal is immutable")

    @property
    def rank(self):
        return len(self.matrix)

    @property
    def q(self):
        return self.tower.q

    @property
    def map(self):
        return SigmaMap(self.matrix, 1)

    @property
    def is_integral(self):
        for row in self.matrix:
            for x in row:
                v = x.valuation()
                if not isinstance(v, ZeroToPrecision) and v < 0:
                    return False
        return True

    def twist_left(self, h):
        """The crystal with matrix h * A (a different crystal in general)."""
        return FCrystal(self.tower, mat_mul(h, self.matrix))

    def sigma_conjugate(self, g):
        """Base change by g: the isomorphic crystal with matrix g^-1 A sigma(g)."""
        return FCrystal(self.tower, mat_mul(mat_inv(g), mat_mul(self.matrix, mat_sigma_pow(g, 1))))

    def __repr__(self):
        return f"FCrystal(rank={self.rank}, q={self.q}, precision={self.precision})"


def standard_simple(tower, r, s, precision):
    """Companion-style crystal: e_i -> e_(i+1), e_r -> eps^s e_1; slope s/r."""
    if r < 1:
        raise PreconditionError("rank must be positive")
    zero = TruncatedSeries.zero(tower, precision)
    one = TruncatedSeries.one(tower, precision)
    rows = [[zero] * r for _ in range(r)]
    for i in range(r - 1):
        rows[i + 1][i] = one
    rows[0][r - 1] = TruncatedSeries.eps_power(tower, s, precision)
    return FCrystal(tower, tuple(tuple(row) for row in rows), precision)


def direct_sum(blocks):
    tower = blocks[0].tower
    precision = min(b.precision for b in blocks)
    n = sum(b.rank for b in blocks)
    zero = TruncatedSeries.zero(tower, precision)
    rows = [[zero] * n for _ in range(n)]
    off = 0
    for b in blocks:
        for i in range(b.rank):
            for j in range(b.rank):
                rows[off + i][off + j] = b.matrix[i][j]
        off += b.rank
    return FCrystal(tower, tuple(tuple(r) for r in rows), precision)


def seeded_k_n_element(tower, rank, n, seed, precision, max_level=0):
    """Deterministic pseudo-random h in K_n = {g : g = 1 mod eps^n}, n >= 1."""
    if n < 1:
        raise PreconditionError("K_n twists need n >= 1")
    rng = random.Random(seed)
    rows = []
    for i in range(rank):
        row = []
        for j in range(rank):
            coeffs = [
                tower.random_element(rng.randrange(max_level + 1), rng)
                for _ in range(max(0, precision - n))
            ]
            row.append(TruncatedSeries(tower, n, coeffs, precision))
        rows.append(row)
    h = [list(r) for r in mat_identity(tower, rank, precision)]
    for i in range(rank):
        for j in range(rank):
            h[i][j] = h[i][j] + rows[i][j]
    return tuple(tuple(r) for r in h)


def seeded_gl_element(tower, rank, seed, precision, max_level=0):
    """Deterministic pseudo-random element of K = GL of the standard lattice.

    Built as (lower unipotent) * (unit diagonal) * (upper unipotent) * P,
    so the determinant is a unit by construction.
    """
    rng = random.Random(seed)

    def unipotent(strict_upper):
        m = [list(r) for r in mat_identity(tower, rank, precision)]
        for i in range(rank):
            for j in range(rank):
                if (i < j) == strict_upper and i != j:
                    coeffs = [
                        tower.random_element(rng.randrange(max_level + 1), rng)
                        for _ in range(precision)
                    ]
                    m[i][j] = TruncatedSeries(tower, 0, coeffs, precision)
        return tuple(tuple(r) for r in m)

    diag = [list(r) for r in mat_identity(tower, rank, precision)]
    for i in range(rank):
        unit = [tower.zero()] * precision
        while unit[0].is_zero():
            unit[0] = tower.random_element(rng.randrange(max_level + 1), rng)
        for t in range(1, precision):
            unit[t] = tower.random_element(rng.randrange(max_level + 1), rng)
        diag[i][i] = TruncatedSeries(tower, 0, unit, precision)
    perm = list(range(rank))
    rng.shuffle(perm)
    zero = TruncatedSeries.zero(tower, precision)
    one = TruncatedSeries.one(tower, precision)
    pmat = tuple(
        tuple(one if perm[j] == i else zero for j in range(rank)) for i in range(rank)
    )
    m = mat_mul(unipotent(False), mat_mul(tuple(tuple(r) for r in diag), unipotent(True)))
    return mat_mul(m, pmat)


def build_crystal(blocks, twist=None):
    """Direct sum of blocks, optionally twisted by a seeded h in K_n."""
    phi = direct_sum(blocks) if len(blocks) > 1 else blocks[0]
    if twist is not None:
        seed, n = twist
        h = seeded_k_n_element(phi.tower, phi.rank, n, seed, phi.precision)
        phi = phi.twist_left(h)
    return phi


# ---------------------------------------------------------------------------
# Newton polygon


class NewtonPolygon:
    """Multiset of rational slopes with multiplicities summing to the rank."""

    __slots__ = ("slopes",)

    def __init__(self, slope_multiplicities):
        items = sorted(slope_multiplicities.items())
        for lam, mult in items:
            if mult <= 0:
                raise PreconditionError("multiplicities must be positive")
            if mult % Fraction(lam).denominator != 0:
                raise PreconditionError(
                    f"multiplicity {mult} of slope {lam} not divisible by its denominator"
                )
        object.__setattr__(self, "slopes", tuple(items))

    def __setattr__(self, *a):
        raise AttributeError("NewtonPolygon is immutable")

    @property
    def total_multiplicity(self):
        return sum(m for _, m in self.slopes)

    def as_triples(self):
        """Sorted [numerator, denominator, multiplicity] triples."""
        return [[lam.numerator, lam.denominator, m] for lam, m in self.slopes]

    def union(self, other):
        counts = dict(self.slopes)
        for lam, m in other.slopes:
            counts[lam] = counts.get(lam, 0) + m
        return NewtonPolygon(counts)

    def expanded(self):
        out = []
        for lam, m in self.slopes:
            out.extend([lam] * m)
        return tuple(out)

    def __eq__(self, other):
        if not isinstance(other, NewtonPolygon):
            return NotImplemented
        return self.slopes == other.slopes

    def __hash__(self):
        return hash(self.slopes)

    def __repr__(self):
        inner = ", ".join(f"{lam} x {m}" for lam, m in self.slopes)
        return f"NewtonPolygon({inner})"


def _principal_minor_sums(matrix):
    """Sum of k x k principal minors for k = 1..r (series values)."""
    import itertools

    r = len(matrix)
    out = []
    for k in range(1, r + 1):
        acc = None
        for rows in itertools.combinations(range(r), k):
            sub = tuple(tuple(matrix[i][j] for j in rows) for i in rows)
            d = mat_det(sub)
            acc = d if acc is None else acc + d
        out.append(acc)
    return out


def _charpoly_slopes(psi):
    """Slope multiset of psi from its characteristic polynomial.

    Valid once the matrix entries are fixed by the map's own twist: raise
    psi to the power that rationalizes the entries, read eigenvalue
    valuations off the lower convex hull of the coefficient valuations, and
    rescale.  Coefficients that vanish to precision are checked to lie above
    the hull before being discarded.
    """
    tower = psi.tower
    max_level = 0
    for row in psi.matrix:
        for entry in row:
            for c in entry.coeffs:
                if c.level > max_level:
                    max_level = c.level
    t_rel = tower.relative_degree(max_level)
    u = abs(psi.twist) or 1
    s = t_rel // math.gcd(t_rel, u)
    mat = twisted_power(psi, s) if s > 1 else psi.matrix
    r = len(mat)
    sums = _principal_minor_sums(mat)
    pts = [(0, 0)]
    unknown = []
    for k, c in enumerate(sums, start=1):
        # the charpoly coefficient is (-1)^k times the sum; sign is valuation-irrelevant
        v = c.valuation()
        if isinstance(v, ZeroToPrecision):
            unknown.append((k, v.precision))
        else:
            pts.append((k, v))
    if pts[-1][0] != r:
        raise PrecisionExhausted("determinant zero to precision; cannot read slopes")
    hull = [pts[0]]
    for p in pts[1:]:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (p[0] - x1) >= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)

    def hull_height(x):
        for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
            if x1 <= x <= x2:
                return Fraction(y1) + Fraction(y2 - y1, x2 - x1) * (x - x1)
        raise PrecisionExhausted("hull does not cover the coefficient range")

    for k, bound in unknown:
        if Fraction(bound) <= hull_height(k):
            raise PrecisionExhausted(
                f"charpoly coefficient {k} vanishes to precision {bound}, too close to the hull"
            )
    slopes = []
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        lam = Fraction(y2 - y1, (x2 - x1) * s)
        slopes.extend([lam] * (x2 - x1))
    return tuple(slopes)


def newton_polygon(phi, denom_bound=None, certify=False):
    """Slope multiset of the crystal, exact at finite tower level.

    Primary route: eigenvalue valuations of the twisted power that makes the
    entries rational over the fixed field (characteristic-polynomial Newton
    polygon).  With certify=True the stabilized rescaled-Hodge computation at
    orders s = lcm(1..bound) and 2s is run as an independent check: if it
    stabilizes it must agree; if not, the rescaled Hodge polygons must still
    lie below the answer (majorization) with matching totals.
    """
    psi = phi.map if isinstance(phi, FCrystal) else phi
    r = psi.dim
    slopes = _charpoly_slopes(psi)
    counts = {}
    for lam in slopes:
        counts[lam] = counts.get(lam, 0) + 1
    np_ = NewtonPolygon(counts)
    if certify:
        bound = denom_bound or r
        s = math.lcm(*range(1, bound + 1))
        vdet = psi.det_valuation()
        h1 = smith_exponents(twisted_power(psi, s), total=s * vdet)
        h2 = smith_exponents(twisted_power(psi, 2 * s), total=2 * s * vdet)
        cand1 = tuple(Fraction(e, s) for e in h1)
        cand2 = tuple(Fraction(e, 2 * s) for e in h2)
        if cand1 == cand2 and cand1 != np_.expanded():
            raise StabilizationError(
                f"stabilized Hodge {cand1} disagrees with charpoly slopes {np_.expanded()}"
            )
        expanded = np_.expanded()
        for cand in (cand1, cand2):
            run = 0
            run_np = 0
            for a, b in zip(cand, expanded):
                run += a
                run_np += b
                if run > run_np:
                    raise StabilizationError(
                        f"rescaled Hodge polygon {cand} not below Newton polygon {expanded}"
                    )
            if run != run_np:
                raise StabilizationError("Hodge and Newton totals disagree")
    return np_


# ---------------------------------------------------------------------------
# slope decomposition


@dataclass(frozen=True)
class SlopeDecomposition:
    g: tuple  # change of basis, columns ordered block by block
    blocks: tuple  # FCrystal-like SigmaMap matrices, one per slope
    slopes: tuple  # strictly increasing Fractions, parallel to blocks
    multiplicities: tuple
    residual_valuation: int  # off-block-diagonal entries of g^-1 A sigma(g) vanish to here
    extension_degree: int = 1


def _field_mat_mul(a, b):
    return [
        [sum((x * y for x, y in zip(ra, cb)), start=ra[0].tower.zero()) for cb in zip(*b)]
        for ra in a
    ]


def _field_mat_sigma_pow(a, k):
    return [[x.sigma_pow(k) for x in row] for row in a]


def _field_column_space(mat, tower):
    """Independent columns spanning the column space (Gauss over the field)."""
    if not mat:
        return []
    cols = [list(c) for c in zip(*mat)]
    basis = []
    pivots = []
    for c in cols:
        v = list(c)
        for prow, b in zip(pivots, basis):
            f = v[prow]
            if not f.is_zero():
                f = f * b[prow].inv()
                v = [x - f * y for x, y in zip(v, b)]
        prow = next((i for i, x in enumerate(v) if not x.is_zero()), None)
        if prow is None:
            continue
        pivots.append(prow)
        basis.append(v)
    return basis


def _field_kernel(mat, tower):
    """Right kernel basis of a field matrix (rows of FieldElements)."""
    if not mat:
        return []
    ncols = len(mat[0])
    m = [list(r) for r in mat]
    pivots = {}
    r = 0
    for c in range(ncols):
        pivot = None
        for i in range(r, len(m)):
            if not m[i][c].is_zero():
                pivot = i
                break
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = m[r][c].inv()
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and not m[i][c].is_zero():
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots[c] = r
        r += 1
        if r == len(m):
            break
    free = [c for c in range(ncols) if c not in pivots]
    out = []
    for fc in free:
        v = [tower.zero()] * ncols
        v[fc] = tower.one()
        for c, ri in pivots.items():
            v[c] = -m[ri][fc]
        out.append(v)
    return out


def _stabilize_increasing(psi, lat, cap):
    """Iterate N <- N + psi(N) until stable; needs slopes >= 0."""
    for _ in range(cap):
        nxt = lat.sum(psi.apply_lattice(lat))
        if nxt == lat:
            return lat
        lat = nxt
    raise StabilizationError("increasing lattice iteration did not stabilize")


def _unit_root_subspace(psi, mult):
    """Columns spanning the slope-0 part of psi (slopes >= 0, 0 of the given
    multiplicity): unit-root reduction mod eps, then a contraction iteration
    with the positive-slope gap lifting the splitting through the precision."""
    tower = psi.tower
    dim = psi.dim
    prec = mat_precision(psi.matrix)
    cap = 4 * prec * dim + 8
    lat = _stabilize_increasing(psi, Lattice.standard(tower, dim, prec), cap)
    basis = lat.basis_matrix()
    c = solve_in_span(lat.cols, tuple(psi.apply(col) for col in lat.cols), dim)
    cbar = [[x.coeff(0) for x in row] for row in c]
    # semilinear Fitting mod eps: with f(x) = Cbar x^(q^t), the iterate f^k
    # has matrix D_k = Cbar sigma^t(Cbar) ... sigma^((k-1)t)(Cbar); its image
    # stabilizes on the unit-root part and its kernel on the nilpotent part
    t = psi.twist
    dk = cbar
    for k in range(1, dim):
        dk = _field_mat_mul(dk, _field_mat_sigma_pow(cbar, k * t))
    w_basis = _field_column_space(dk, tower)
    if len(w_basis) != mult:
        raise StabilizationError(
            f"unit-root reduction has rank {len(w_basis)}, expected {mult}"
        )
    ker = _field_kernel(dk, tower)
    # the kernel of f^k is the sigma^(-kt) twist of ker(D_k)
    z_basis = [[x.sigma_pow(-dim * t) for x in v] for v in ker]
    pbar = [list(col) for col in w_basis] + [list(col) for col in z_basis]
    pbar_rows = [[pbar[j][i] for j in range(dim)] for i in range(dim)]
    pmat = tuple(
        tuple(TruncatedSeries.constant(x, prec) for x in row) for row in pbar_rows
    )
    pinv = mat_inv(pmat)
    cp = mat_mul(pinv, mat_mul(c, mat_sigma_pow(pmat, t)))
    m1 = mult
    m2 = dim - mult
    if m2 == 0:
        sel = pmat
        return tuple(mat_vec(basis, col) for col in zip(*sel))
    c00 = tuple(tuple(cp[i][j] for j in range(m1)) for i in range(m1))
    c01 = tuple(tuple(cp[i][j] for j in range(m1, dim)) for i in range(m1))
    c10 = tuple(tuple(cp[i][j] for j in range(m1)) for i in range(m1, dim))
    c11 = tuple(tuple(cp[i][j] for j in range(m1, dim)) for i in range(m1, dim))
    y = tuple(tuple(TruncatedSeries.zero(tower, prec) for _ in range(m1)) for _ in range(m2))
    from .lattices import mat_add

    for _ in range(cap):
        sy = mat_sigma_pow(y, t)
        denom = mat_add(c00, mat_mul(c01, sy))
        y_next = mat_mul(mat_add(c10, mat_mul(c11, sy)), mat_inv(denom))
        if mat_agrees(y_next, y):
            y = y_next
            break
        y = y_next
    else:
        raise StabilizationError("unit-root contraction did not stabilize")
    # columns of P * [I; Y] in lat coordinates, transported to the ambient space
    cols = []
    for j in range(m1):
        coord = []
        for i in range(dim):
            acc = pmat[i][j]
            for i2 in range(m2):
                acc = acc + pmat[i][m1 + i2] * y[i2][j]
            coord.append(acc)
        cols.append(mat_vec(basis, tuple(coord)))
    return tuple(cols)


def _complement_subspace(psi, mult):
    """The span of all positive slopes of psi (slopes >= 0, slope-0 mult given),
    as the annihilator of the slope-0 part of the inverse dual map."""
    bt = mat_transpose(psi.matrix)
    dual_inverse = SigmaMap(mat_sigma_pow(bt, -psi.twist), -psi.twist)
    s_dual = _unit_root_subspace(dual_inverse, mult)
    rows = tuple(tuple(col[i] for i in range(psi.dim)) for col in s_dual)
    return series_kernel(rows, psi.dim)


def _primitive_columns(cols):
    out = []
    for c in cols:
        vals = [x.valuation() for x in c if not isinstance(x.valuation(), ZeroToPrecision)]
        v = min(vals)
        out.append(tuple(x.shift(-v) for x in c))
    return tuple(out)


def slope_decomposition(phi, np=None):
    """Split phi into isoclinic blocks along strictly increasing slopes.

    Splits off the lowest slope: scale the b-th twisted power so the bottom
    becomes slope 0, extract its unit-root subspace and the complementary
    positive part, then recurse on the complement.  The verification data
    (residual valuation of the off-blocks) is stored on the result.
    """
    if np is None:
        np = newton_polygon(phi)
    tower = phi.tower
    r = phi.rank
    prec = phi.precision
    if len(np.slopes) == 1:
        return SlopeDecomposition(
            g=mat_identity(tower, r, prec),
            blocks=(phi.matrix,),
            slopes=(np.slopes[0][0],),
            multiplicities=(np.slopes[0][1],),
            residual_valuation=prec,
        )
    lam, mult = np.slopes[0]
    a, b = lam.numerator, lam.denominator
    big = SigmaMap(mat_shift(twisted_power(phi.map, b), -a), b)
    s0 = _primitive_columns(_unit_root_subspace(big, mult))
    splus = _primitive_columns(_complement_subspace(big, mult))
    # phi-stability gives the induced blocks in coordinates
    a1 = solve_in_span(s0, tuple(phi.map.apply(c) for c in s0), r)
    b2 = solve_in_span(splus, tuple(phi.map.apply(c) for c in splus), r)
    rest = NewtonPolygon(dict(np.slopes[1:]))
    sub = slope_decomposition(FCrystal(tower, b2), np=rest)
    # assemble: columns [S0 | Splus * g_sub]
    splus_mat = tuple(zip(*splus))
    g_cols = list(s0)
    for col in zip(*sub.g):
        g_cols.append(mat_vec(splus_mat, col))
    g = tuple(zip(*g_cols))
    blocks = (a1,) + sub.blocks
    slopes = (lam,) + sub.slopes
    mults = (mult,) + sub.multiplicities
    conj = mat_mul(mat_inv(g), mat_mul(phi.matrix, mat_sigma_pow(g, 1)))
    residual = _offblock_residual(conj, mults)
    return SlopeDecomposition(
        g=g,
        blocks=blocks,
        slopes=slopes,
        multiplicities=mults,
        residual_valuation=residual,
    )


def _offblock_residual(m, mults):
    bounds = [0]
    for k in mults:
        bounds.append(bounds[-1] + k)
    res = None
    for i in range(len(m)):
        for j in range(len(m)):
            bi = next(t for t in range(len(mults)) if bounds[t] <= i < bounds[t + 1])
            bj = next(t for t in range(len(mults)) if bounds[t] <= j < bounds[t + 1])
            if bi == bj:
                continue
            v = m[i][j].valuation()
            if isinstance(v, ZeroToPrecision):
                v = v.precision
            if res is None or v < res:
                res = v
    return res if res is not None else mat_precision(m)


def reassemble(dec, tower):
    """g * blockdiag(blocks) * sigma(g)^-1-style reconstruction for round trips."""
    n = sum(len(b) for b in dec.blocks)
    prec = min(mat_precision(b) for b in dec.blocks)
    zero = TruncatedSeries.zero(tower, prec)
    rows = [[zero] * n for _ in range(n)]
    off = 0
    for b in dec.blocks:
        for i in range(len(b)):
            for j in range(len(b)):
                rows[off + i][off + j] = b[i][j]
        off += len(b)
    blockdiag = tuple(tuple(r) for r in rows)
    return mat_mul(dec.g, mat_mul(blockdiag, mat_inv(mat_sigma_pow(dec.g, 1))))


# ---------------------------------------------------------------------------
# the endomorphism crystal


@dataclass(frozen=True)
class EndCrystal:
    phi: FCrystal
    dec: SlopeDecomposition
    tilde: SigmaMap  # f -> phi f phi^-1 as an r^2 x r^2 sigma-linear matrix
    H: Lattice  # End of the standard lattice, the standard r^2 lattice
    v_plus: Lattice  # V_+ meet H
    v_zero: Lattice  # V_0 meet H
    v_minus: Lattice  # V_- meet H
    hom_blocks: tuple = field(default=(), repr=False)

    @property
    def dim(self):
        return self.phi.rank ** 2


def end_crystal(phi, dec=None):
    """Build End(V) with f -> phi f phi^-1 and the slope split intersected with H."""
    if dec is None:
        dec = slope_decomposition(phi)
    tower = phi.tower
    r = phi.rank
    prec = phi.precision
    a = phi.matrix
    a_inv = mat_inv(a)
    tilde = SigmaMap(mat_kron(mat_transpose(a_inv), a), 1)
    H = Lattice.standard(tower, r * r, prec)
    g = dec.g
    g_inv = mat_inv(g)
    bounds = [0]
    for k in dec.multiplicities:
        bounds.append(bounds[-1] + k)
    nblocks = len(dec.blocks)
    plus_cols, zero_cols, minus_cols = [], [], []
    hom_blocks = []
    for bi in range(nblocks):  # input block (column block of the End matrix)
        for bj in range(nblocks):  # output block
            cols = []
            for v in range(bounds[bi], bounds[bi + 1]):
                for u in range(bounds[bj], bounds[bj + 1]):
                    # g E_{uv} g^-1 = (column u of g) (row v of g^-1)
                    mat_f = tuple(
                        tuple(g[i][u] * g_inv[v][j] for j in range(r)) for i in range(r)
                    )
                    cols.append(vec_matrix(mat_f))
            hom_blocks.append((bi, bj, tuple(cols)))
            if dec.slopes[bi] < dec.slopes[bj]:
                plus_cols.extend(cols)
            elif dec.slopes[bi] > dec.slopes[bj]:
                minus_cols.extend(cols)
            else:
                zero_cols.extend(cols)
    def meet_h(cols):
        if not cols:
            return Lattice.zero(tower, r * r, prec)
        return saturate_in_standard(_primitive_columns(cols), r * r, tower)

    return EndCrystal(
        phi=phi,
        dec=dec,
        tilde=tilde,
        H=H,
        v_plus=meet_h(plus_cols),
        v_zero=meet_h(zero_cols),
        v_minus=meet_h(minus_cols),
        hom_blocks=tuple(hom_blocks),
    )
