"""Level modules, level torsion, and constructive sigma-conjugation.

The level module O_H = O_+ (+) O_0 (+) O_- collects the maximal sublattices
of the slope parts of End(M) stable under phi-tilde (respectively its
inverse, respectively both).  Level torsion is the least n with eps^n H
inside O_H, with the special rule for the non-topologically-nilpotent case.
The conjugator solves h phi = g^-1 phi g for h = 1 mod eps^n constructively,
and small-instance oracles cross-check the theorem at desk scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .config import DEFAULT
from .crystals import FCrystal, end_crystal, newton_polygon, slope_decomposition
from .errors import (
    BudgetExceeded,
    PreconditionError,
    PrecisionExhausted,
    StabilizationError,
)
from .fields import ExtensionTower, artin_schreier_solve, kernel_mod_p
from .lattices import (
    Lattice,
    SigmaMap,
    lang_image,
    mat_identity,
    mat_inv,
    mat_kron,
    mat_mul,
    mat_precision,
    mat_sigma_pow,
    mat_sub,
    mat_transpose,
    mat_vec,
    saturate_in_standard,
    solve_in_span,
    unvec_matrix,
    vec_matrix,
)
from .series import TruncatedSeries, ZeroToPrecision


def _series_key(x):
    return (x.offset, tuple((c.level, c.flat_coords()) for c in x.coeffs))


def lattice_key(lat):
    return (
        lat.pivot_rows,
        lat.pivot_vals,
        tuple(tuple(_series_key(x) for x in col) for col in lat.cols),
    )


def _min_matrix_valuation(m):
    out = None
    for row in m:
        for x in row:
            v = x.valuation()
            if isinstance(v, ZeroToPrecision):
                continue
            if out is None or v < out:
                out = v
    return out


def _field_det(m, tower):
    n = len(m)
    if n == 1:
        return m[0][0]
    det = tower.zero()
    for j in range(n):
        if m[0][j].is_zero():
            continue
        minor = [[m[i][jj] for jj in range(n) if jj != j] for i in range(1, n)]
        term = m[0][j] * _field_det(minor, tower)
        det = det + term if j % 2 == 0 else det - term
    return det


# ---------------------------------------------------------------------------
# sigma-fixed points of slope-zero maps


def _stabilize_equal(psi, lat, cap):
    """A lattice N with psi(N) = N, reached from lat by sum- then image-iteration."""
    for _ in range(cap):
        nxt = lat.sum(psi.apply_lattice(lat))
        if nxt == lat:
            break
        lat = nxt
    else:
        raise StabilizationError("slope-zero lattice sum iteration did not stabilize")
    for _ in range(cap):
        nxt = psi.apply_lattice(lat)
        if nxt == lat:
            return lat
        lat = nxt
    raise StabilizationError("slope-zero lattice image iteration did not stabilize")


def _field_mat_mul(a, b, tower):
    return [
        [
            sum((a[i][t] * b[t][j] for t in range(len(b))), start=tower.zero())
            for j in range(len(b[0]))
        ]
        for i in range(len(a))
    ]


def _matrix_order(mat, tower, cap=20000):
    """Multiplicative order of an invertible constant matrix over the tower."""
    n = len(mat)

    def is_ident(m):
        return all(
            (m[i][j] == tower.one()) if i == j else m[i][j].is_zero()
            for i in range(n)
            for j in range(n)
        )

    acc = mat
    for k in range(1, cap + 1):
        if is_ident(acc):
            return k
        acc = _field_mat_mul(acc, mat, tower)
    raise BudgetExceeded("matrix order exceeds cap")


def fixed_point_module(psi, config=DEFAULT):
    """Rational structure of a slope-zero sigma-linear map.

    Returns (columns, extension_degree): n columns over k((eps)) whose
    F_q((eps))-span is the full fixed space {x : psi(x) = x}.  The tower is
    extended as needed; the working level's relative degree over the base is
    capped by the configured budget.
    """
    tower = psi.tower
    n = psi.dim
    prec = mat_precision(psi.matrix)
    cap = config.iteration_cap_factor * prec * max(n, 1) + 8
    lat = _stabilize_equal(psi, Lattice.standard(tower, n, prec), cap)
    r_basis = lat.basis_matrix()
    c = solve_in_span(lat.cols, tuple(psi.apply(col) for col in lat.cols), n)
    c0 = [[x.coeff(0) for x in row] for row in c]
    entry_level = 0
    for row in c0:
        for x in row:
            if x.level > entry_level:
                entry_level = x.level
    start_rel = tower.relative_degree(entry_level)
    # over F_{q^t} the t-fold twisted product D_t is an honest matrix; the
    # fixed space becomes fully rational once its multiplicative order s is
    # adjoined, since the ts-fold twisted product is then the identity
    t = start_rel
    dt = c0
    for k in range(1, t):
        twisted = [[x.sigma_pow(k) for x in row] for row in c0]
        dt = _field_mat_mul(dt, twisted, tower)
    s = _matrix_order(dt, tower)
    level = entry_level
    if s > 1:
        level = tower.extend(s)
    if tower.relative_degree(level) > config.extension_budget:
        raise BudgetExceeded(
            f"fixed-point solve needs relative degree {tower.relative_degree(level)} "
            f"over the base (budget {config.extension_budget})"
        )
    # F_p-linear kernel of x -> C0 x^(q) - x over the chosen level
    p = tower.p
    D = tower.absolute_degree(level)
    basis_vecs = []
    for j in range(n):
        for c_idx in range(D):
            coords = [0] * D
            coords[c_idx] = 1
            e = tower.from_flat(level, coords)
            vec = [tower.zero()] * n
            vec[j] = e
            basis_vecs.append(vec)
    dim_fp = n * D
    rows = [[0] * dim_fp for _ in range(dim_fp)]
    for col_idx, vec in enumerate(basis_vecs):
        flat = []
        for i in range(n):
            acc = tower.zero()
            for j in range(n):
                if not c0[i][j].is_zero() and not vec[j].is_zero():
                    acc = acc + c0[i][j] * vec[j].frobenius()
            flat.extend((acc - vec[i]).flat_coords(level))
        for row_idx, val in enumerate(flat):
            rows[row_idx][col_idx] = val
    ker = kernel_mod_p(rows, p)
    if len(ker) < tower.d * n:
        raise StabilizationError(
            f"fixed space has F_p-dimension {len(ker)}, expected {tower.d * n}"
        )
    # pick n kernel vectors independent over the big level: they assemble to
    # an invertible P with C0 = P sigma(P)^-1
    chosen = []
    pivot_rows = []
    work = []
    for kv in ker:
        vec = [tower.from_flat(level, kv[j * D : (j + 1) * D]) for j in range(n)]
        v = list(vec)
        for prow, b in zip(pivot_rows, work):
            f = v[prow]
            if not f.is_zero():
                f = f * b[prow].inv()
                v = [x - f * y for x, y in zip(v, b)]
        prow = next((i for i, x in enumerate(v) if not x.is_zero()), None)
        if prow is None:
            continue
        pivot_rows.append(prow)
        work.append(v)
        chosen.append(vec)
        if len(chosen) == n:
            break
    if len(chosen) < n:
        raise StabilizationError("could not assemble a rational basis of fixed vectors")
    pmat = tuple(
        tuple(TruncatedSeries.constant(chosen[j][i], prec) for j in range(n))
        for i in range(n)
    )
    # substitute: P^-1 C sigma(P) has constant term 1, so degree-by-degree
    # lifting is coefficientwise scalar Artin-Schreier
    cpp = mat_mul(mat_inv(pmat), mat_mul(c, mat_sigma_pow(pmat, 1)))
    fixed_coord_cols = []
    for j in range(n):
        y = [[tower.one() if i == j else tower.zero()] for i in range(n)]
        for deg in range(1, prec):
            b = []
            for i in range(n):
                acc = tower.zero()
                for u in range(n):
                    entry = cpp[i][u]
                    for idx in range(1, deg + 1):
                        if idx >= entry.precision:
                            break
                        coeff = entry.coeff(idx)
                        if coeff.is_zero() or deg - idx >= len(y[u]):
                            continue
                        acc = acc + coeff * y[u][deg - idx].frobenius()
                b.append(acc)
            for i in range(n):
                if b[i].is_zero():
                    y[i].append(tower.zero())
                else:
                    theta, _ = artin_schreier_solve(-b[i])
                    y[i].append(theta)
        fixed_coord_cols.append(tuple(TruncatedSeries(tower, 0, y[i], prec) for i in range(n)))
    out = []
    for col in fixed_coord_cols:
        out.append(mat_vec(r_basis, mat_vec(pmat, col)))
    ext = tower.relative_degree(tower.num_levels - 1) // max(1, start_rel)
    return tuple(out), max(1, ext)


def rational_module_in(columns, target, tower):
    """F_q[[eps]]-basis of {c rational : sum_j c_j columns_j in target}.

    columns: vectors over k((eps)) independent over k((eps)); target: a full
    lattice.  Returns coordinate columns (base-coefficient series).
    """
    m = len(columns)
    coords = solve_in_span(target.cols, columns, target.dim)
    f_cols = tuple(tuple(coords[i][j] for i in range(len(coords))) for j in range(m))
    nrows = len(coords)
    prec = min(x.precision for col in f_cols for x in col)
    v0 = 0
    for col in f_cols:
        for x in col:
            v = x.valuation()
            if not isinstance(v, ZeroToPrecision) and v < -v0:
                v0 = -v
    # rational denominators are bounded through the k[[eps]]-saturation
    sat = saturate_in_standard(f_cols, nrows, tower)
    b = solve_in_span(f_cols, sat.cols, nrows)
    w = 0
    for row in b:
        for x in row:
            v = x.valuation()
            if not isinstance(v, ZeroToPrecision) and v < -w:
                w = -v
    window = w + v0
    gens = []
    if window > 0:
        p, d = tower.p, tower.d
        nunk = m * window * d
        rows = []
        for i in range(nrows):
            for u in range(-window, 0):
                cells = []
                for j in range(m):
                    for tdeg in range(window):
                        k_idx = u + w - tdeg
                        entry = f_cols[j][i]
                        if k_idx < entry.offset or k_idx >= entry.precision:
                            cells.append(tower.zero())
                        else:
                            cells.append(entry.coeff(k_idx))
                lvl = max((c.level for c in cells), default=0)
                D = tower.absolute_degree(lvl)
                fp_rows = [[0] * nunk for _ in range(D)]
                for cell_idx, coeff in enumerate(cells):
                    if coeff.is_zero():
                        continue
                    for b_idx in range(d):
                        base_coords = [0] * d
                        base_coords[b_idx] = 1
                        unit = tower.from_flat(0, base_coords)
                        prod = (coeff * unit).flat_coords(lvl)
                        for rr in range(D):
                            fp_rows[rr][cell_idx * d + b_idx] = prod[rr]
                rows.extend(fp_rows)
        ker = kernel_mod_p(rows, p) if rows else []
        if not rows:
            ker = [[1 if i == j else 0 for i in range(nunk)] for j in range(nunk)]
        for kv in ker:
            col = []
            for j in range(m):
                coeffs = []
                for tdeg in range(window):
                    base = kv[(j * window + tdeg) * d : (j * window + tdeg + 1) * d]
                    coeffs.append(tower.from_flat(0, base))
                col.append(TruncatedSeries(tower, -w, coeffs, prec))
            gens.append(tuple(col))
    for j in range(m):
        col = [TruncatedSeries.zero(tower, prec) for _ in range(m)]
        col[j] = TruncatedSeries.eps_power(tower, window - w, prec)
        gens.append(tuple(col))
    lat = Lattice(tower, m, tuple(gens), expect_rank=m)
    return lat.cols


# ---------------------------------------------------------------------------
# A_0 and the level module


@dataclass(frozen=True)
class A0Basis:
    columns: tuple  # r^2-vectors over k((eps)): an F_q[[eps]]-basis of A_0 meet H
    extension_degree: int
    coordinate_columns: tuple = field(default=(), repr=False)


def a0_lattice(end, config=DEFAULT):
    """F_q[[eps]]-basis of A_0 meet H, A_0 = phi-tilde fixed points of End(V)."""
    tower = end.phi.tower
    dim = end.dim
    m = end.v_zero.rank
    if m == 0:
        return A0Basis(columns=(), extension_degree=1)
    t_cols = end.v_zero.cols
    c = solve_in_span(t_cols, tuple(end.tilde.apply(col) for col in t_cols), dim)
    fixed_cols, ext = fixed_point_module(SigmaMap(c, 1), config)
    t_basis = end.v_zero.basis_matrix()
    ambient_fixed = tuple(mat_vec(t_basis, col) for col in fixed_cols)
    coord_basis = rational_module_in(ambient_fixed, end.H, tower)
    fixed_mat = tuple(zip(*ambient_fixed))
    columns = tuple(mat_vec(fixed_mat, col) for col in coord_basis)
    return A0Basis(columns=columns, extension_degree=ext, coordinate_columns=coord_basis)


@dataclass(frozen=True)
class LevelModule:
    o_plus: Lattice
    o_zero: Lattice
    o_minus: Lattice
    iterations: dict
    extension_degree: int
    end: object = field(repr=False, default=None)
    a0: A0Basis = field(repr=False, default=None)

    def o_h(self):
        return self.o_plus.sum(self.o_zero).sum(self.o_minus)


def _o_part(l_part, op, cap):
    """Largest sublattice O of l_part with op(O) inside O.

    O = meet of op^(-k)(L) over k >= 0, by the decreasing fixed-point
    iteration N <- L meet op^-1(N); the strictly positive slope gap of op on
    the span bounds the descent.
    """
    if l_part.rank == 0:
        return l_part, 0
    inv = op.inverse()
    lat = l_part
    for k in range(1, cap + 1):
        pre = inv.apply_lattice(lat)
        nxt = l_part.intersect(pre)
        if nxt == lat:
            return lat, k
        lat = nxt
    raise StabilizationError("level-module fixed point did not stabilize")


def level_module(end, config=DEFAULT):
    """The level module O_H = O_+ (+) O_0 (+) O_-."""
    a0 = a0_lattice(end, config)
    tower = end.phi.tower
    dim = end.dim
    prec = end.phi.precision
    cap = config.iteration_cap_factor * prec * dim + 8
    o_plus, it_plus = _o_part(end.v_plus, end.tilde, cap)
    o_minus, it_minus = _o_part(end.v_minus, end.tilde.inverse(), cap)
    if a0.columns:
        o_zero = Lattice(tower, dim, a0.columns, expect_rank=len(a0.columns))
    else:
        o_zero = Lattice.zero(tower, dim, prec)
    return LevelModule(
        o_plus=o_plus,
        o_zero=o_zero,
        o_minus=o_minus,
        iterations={"plus": it_plus, "minus": it_minus},
        extension_degree=a0.extension_degree,
        end=end,
        a0=a0,
    )


# ---------------------------------------------------------------------------
# topological nilpotence


def topologically_nilpotent(op, lat, cap=None):
    """Decide whether iterating op on the lattice gains unbounded valuation.

    Returns (decision, witness): the gaining power, or the non-gaining cycle
    together with a vector realizing it.
    """
    if lat.rank == 0:
        return True, {"reason": "zero lattice"}
    if cap is None:
        cap = 4 * lat.dim * lat.dim + 16
    seen = {}
    cur = lat
    shift = 0
    for k in range(1, cap + 1):
        cur = op.apply_lattice(cur)
        coords = solve_in_span(lat.cols, cur.cols, lat.dim)
        mval = None
        for row in coords:
            for x in row:
                v = x.valuation()
                if isinstance(v, ZeroToPrecision):
                    continue
                if mval is None or v < mval:
                    mval = v
        if mval is None:
            return True, {"reason": "iterate vanished to precision", "power": k}
        if mval >= 1:
            return True, {"power": k, "gain": mval}
        normalized = cur.scaled(-mval)
        key = lattice_key(normalized)
        shift += mval
        if key in seen:
            prev_k, prev_shift = seen[key]
            if shift <= prev_shift:
                return False, {"cycle": (prev_k, k), "witness": cur.cols[0]}
        seen[key] = (k, shift)
    raise PrecisionExhausted("nilpotence undecidable within the iteration cap")


# ---------------------------------------------------------------------------
# level torsion and the Lang exponent


@dataclass(frozen=True)
class LevelTorsionResult:
    ell: int
    rule_used: str
    nilpotence_report: dict
    diagnostics: dict
    level: LevelModule = field(repr=False, default=None)


def level_torsion(phi, config=DEFAULT, level_data=None):
    """The level torsion, by rule (a) or (b) of the definition."""
    if not phi.is_integral:
        raise PreconditionError("level torsion is defined for integral crystals")
    if level_data is None:
        level_data = level_module(end_crystal(phi), config)
    end = level_data.end
    o_h = level_data.o_h()
    h_lat = end.H
    nil_report = {}
    rule = "b"
    ell = None
    if o_h == h_lat:
        nil_plus, wit_p = topologically_nilpotent(end.tilde, level_data.o_plus)
        nil_minus, wit_m = topologically_nilpotent(end.tilde.inverse(), level_data.o_minus)
        nil_report = {
            "plus": {"nilpotent": nil_plus, **{k: str(v) for k, v in wit_p.items()}},
            "minus": {"nilpotent": nil_minus, **{k: str(v) for k, v in wit_m.items()}},
        }
        if config.rule_a_literal:
            triggered = not (nil_plus and nil_minus)
        else:
            triggered = level_data.o_plus.rank + level_data.o_minus.rank > 0
        if triggered:
            rule = "a"
            ell = 1
    if ell is None:
        ell = h_lat.min_scale_into(o_h)
    return LevelTorsionResult(
        ell=ell,
        rule_used=rule,
        nilpotence_report=nil_report,
        diagnostics={
            "iterations": level_data.iterations,
            "extension_degree": level_data.extension_degree,
            "o_ranks": [
                level_data.o_plus.rank,
                level_data.o_zero.rank,
                level_data.o_minus.rank,
            ],
        },
        level=level_data,
    )


def lang_min_exponent(end, config=DEFAULT, level_data=None):
    """Least n with eps^n H inside (phi-tilde - 1)H, computed blockwise.

    Nonzero-slope parts contribute their Lang images (the sum formula); the
    slope-zero part contributes O_0, the coefficientwise Artin-Schreier
    solvable core in A_0 coordinates.
    """
    if level_data is None:
        level_data = level_module(end, config)
    parts = []
    if end.v_plus.rank:
        parts.append(lang_image(end.tilde, end.v_plus, "positive"))
    if end.v_minus.rank:
        parts.append(lang_image(end.tilde, end.v_minus, "negative"))
    parts.append(level_data.o_zero)
    image = parts[0]
    for lat in parts[1:]:
        image = image.sum(lat)
    return end.H.min_scale_into(image)


def isomorphism_number(phi, config=DEFAULT):
    """n_M, returned as the level torsion; the diagnostics cross-check the
    Lang-exponent inequality before answering."""
    res = level_torsion(phi, config)
    lang = lang_min_exponent(res.level.end, config, level_data=res.level)
    if res.rule_used == "b" and lang < res.ell:
        raise StabilizationError(
            f"Lang exponent {lang} below level torsion {res.ell}: inconsistency"
        )
    return res.ell


# ---------------------------------------------------------------------------
# the constructive conjugator


@dataclass(frozen=True)
class ConjugationCertificate:
    g: tuple
    residual_valuation: int
    extension_degree: int
    y_data: tuple
    route: str


def residual_valuation(phi, h, g):
    """Valuation of g (h A) - A sigma(g); matrix precision if it vanishes.

    For unit g this matches the valuation of g (h phi) g^-1 - phi, since
    right multiplication by a unit preserves the minimal entry valuation.
    """
    lhs = mat_mul(g, mat_mul(h, phi.matrix))
    rhs = mat_mul(phi.matrix, mat_sigma_pow(g, 1))
    diff = mat_sub(lhs, rhs)
    v = _min_matrix_valuation(diff)
    if v is None:
        return mat_precision(diff)
    return v


def conjugator_solve(phi, h, level_data=None, config=DEFAULT):
    """Find g with h phi = g^-1 phi g, certified by the residual valuation.

    Primary route: split h - 1 along the slope parts, solve the linearized
    equation with truncated geometric series on the plus/minus parts and
    coefficientwise Artin-Schreier lifts in A_0 coordinates, and iterate;
    the residual climbs whenever v(h-1) exceeds the level torsion.  At the
    boundary (including constant twists) fall back to the rational
    fixed-module route: g is a unit of the fixed module of the pair map
    f -> phi f (h phi)^-1, located by a determinant search over constant
    coefficient combinations.
    """
    tower = phi.tower
    r = phi.rank
    prec = phi.precision
    if level_data is None:
        level_data = level_module(end_crystal(phi), config)
    tor = level_torsion(phi, config, level_data=level_data)
    x = mat_sub(h, mat_identity(tower, r, prec))
    n = _min_matrix_valuation(x)
    if n is None:
        g = mat_identity(tower, r, prec)
        return ConjugationCertificate(
            g=g,
            residual_valuation=residual_valuation(phi, h, g),
            extension_degree=1,
            y_data=(),
            route="trivial",
        )
    if n < tor.ell:
        raise PreconditionError(f"h = 1 mod eps^{n} but the level torsion is {tor.ell}")
    if n >= max(tor.ell, 1):
        try:
            return _conjugator_linearized(phi, h, level_data, config)
        except StabilizationError:
            pass
    return _conjugator_fixed_module(phi, h, config)


def _split_parts(end, vec):
    """Decompose an End(V) vector along the [V_+ | V_0 | V_-] meet-H bases."""
    stack = end.v_plus.cols + end.v_zero.cols + end.v_minus.cols
    coords = solve_in_span(stack, (vec,), end.dim)
    kp, k0 = end.v_plus.rank, end.v_zero.rank
    tower = end.phi.tower
    prec = end.phi.precision
    zero_vec = tuple(TruncatedSeries.zero(tower, prec) for _ in range(end.dim))

    def assemble(cols, lo, hi):
        if not cols:
            return zero_vec
        mat = tuple(zip(*cols))
        return mat_vec(mat, tuple(coords[i][0] for i in range(lo, hi)))

    km = len(stack) - kp - k0
    return (
        assemble(end.v_plus.cols, 0, kp),
        assemble(end.v_zero.cols, kp, kp + k0),
        assemble(end.v_minus.cols, kp + k0, kp + k0 + km),
    )


def _geometric_series(op, vec, prec, cap, shift_first=False):
    """sum_k op^k(vec), truncated once the terms vanish to working precision."""
    tower = op.tower
    total = tuple(TruncatedSeries.zero(tower, prec) for _ in vec)
    term = op.apply(vec) if shift_first else vec
    for _ in range(cap):
        if all(t.is_zero() or t.valuation() >= prec for t in term):
            return total
        total = tuple(a + b for a, b in zip(total, term))
        term = op.apply(term)
    raise StabilizationError("geometric series did not converge within the cap")


def _conjugator_linearized(phi, h, level_data, config):
    tower = phi.tower
    r = phi.rank
    prec = phi.precision
    end = level_data.end
    a0 = level_data.a0
    cap = config.iteration_cap_factor * prec * r * r + 16
    g = mat_identity(tower, r, prec)
    h_cur = h
    ext = 1
    y_trace = []
    last_n = None
    for _ in range(cap):
        x = mat_sub(h_cur, mat_identity(tower, r, prec))
        n = _min_matrix_valuation(x)
        if n is None or n >= prec - 1:
            break
        if last_n is not None and n <= last_n:
            raise StabilizationError("linearized conjugation stalled")
        last_n = n
        xp, x0, xm = _split_parts(end, vec_matrix(x))
        y_plus = _geometric_series(end.tilde, xp, prec, cap)
        y_minus = _geometric_series(end.tilde.inverse(), xm, prec, cap, shift_first=True)
        if a0.columns and any(not t.is_zero() for t in x0):
            d_coords = solve_in_span(a0.columns, (x0,), end.dim)
            theta_cols = []
            for i in range(len(a0.columns)):
                dser = d_coords[i][0]
                coeffs = []
                for kdeg in range(dser.offset, dser.precision):
                    cval = dser.coeff(kdeg)
                    if cval.is_zero():
                        coeffs.append(tower.zero())
                    else:
                        theta, ed = artin_schreier_solve(cval)
                        ext = max(ext, ed)
                        coeffs.append(theta)
                theta_cols.append(TruncatedSeries(tower, dser.offset, coeffs, dser.precision))
            a0_mat = tuple(zip(*a0.columns))
            y_zero = mat_vec(a0_mat, tuple(theta_cols))
        else:
            y_zero = tuple(TruncatedSeries.zero(tower, prec) for _ in range(end.dim))
        y_vec = tuple((-a) + b + c for a, b, c in zip(y_plus, y_zero, y_minus))
        y_mat = unvec_matrix(y_vec)
        one = TruncatedSeries.one(tower, prec)
        zero = TruncatedSeries.zero(tower, prec)
        step = tuple(
            tuple(y_mat[i][j] + (one if i == j else zero) for j in range(r)) for i in range(r)
        )
        y_trace.append(n)
        g = mat_mul(step, g)
        # h <- step h phi-tilde(step)^-1 with phi-tilde(step) = A sigma(step) A^-1
        tilde_step = mat_mul(phi.matrix, mat_mul(mat_sigma_pow(step, 1), mat_inv(phi.matrix)))
        h_cur = mat_mul(step, mat_mul(h_cur, mat_inv(tilde_step)))
    res = residual_valuation(phi, h, g)
    if res < prec - config.slack:
        raise StabilizationError(f"linearized conjugator residual only eps^{res}")
    return ConjugationCertificate(
        g=g,
        residual_valuation=res,
        extension_degree=ext,
        y_data=tuple(y_trace),
        route="linearized",
    )


def _conjugator_fixed_module(phi, h, config):
    """Solve g (hA) = A sigma(g) through the pair crystal's fixed module."""
    tower = phi.tower
    r = phi.rank
    prec = phi.precision
    target = FCrystal(tower, mat_mul(h, phi.matrix))
    np1 = newton_polygon(phi)
    np2 = newton_polygon(target)
    if np1 != np2:
        raise PreconditionError(
            "twisted crystal has a different Newton polygon; no conjugator exists"
        )
    dec1 = slope_decomposition(phi, np=np1)
    dec2 = slope_decomposition(target, np=np2)
    # fixed vectors of u -> D sigma(u) D'^-1 are block diagonal across slopes
    ext = 1
    fixed_cols_global = []
    offs = [0]
    for m in dec1.multiplicities:
        offs.append(offs[-1] + m)
    dim = r * r
    for bi in range(len(dec1.slopes)):
        m = dec1.multiplicities[bi]
        pair = SigmaMap(
            mat_kron(mat_transpose(mat_inv(dec2.blocks[bi])), dec1.blocks[bi]), 1
        )
        fixed, s = fixed_point_module(pair, config)
        ext = max(ext, s)
        for col in fixed:
            blk = unvec_matrix(col)
            full = [[TruncatedSeries.zero(tower, prec) for _ in range(r)] for _ in range(r)]
            for i in range(m):
                for j in range(m):
                    full[offs[bi] + i][offs[bi] + j] = blk[i][j]
            fixed_cols_global.append(vec_matrix(tuple(tuple(row) for row in full)))
    # g = g1 u g2^-1 must be integral: transform through the Kronecker factor
    s_mat = mat_kron(mat_transpose(mat_inv(dec2.g)), dec1.g)
    transformed = tuple(mat_vec(s_mat, col) for col in fixed_cols_global)
    coord_basis = rational_module_in(
        transformed, Lattice.standard(tower, dim, prec), tower
    )
    trans_mat = tuple(zip(*transformed))
    module_cols = tuple(mat_vec(trans_mat, c) for c in coord_basis)
    g_candidates = [unvec_matrix(col) for col in module_cols]
    res_mats = [[[x.coeff(0) for x in row] for row in gm] for gm in g_candidates]
    base_elems = list(tower.enumerate_elements(0))
    found = None
    for combo in itertools.product(range(len(base_elems)), repeat=len(g_candidates)):
        if all(c == 0 for c in combo):
            continue
        scalars = [base_elems[c] for c in combo]
        acc = [[tower.zero() for _ in range(r)] for _ in range(r)]
        for cs, rm in zip(scalars, res_mats):
            if cs.is_zero():
                continue
            for i in range(r):
                for j in range(r):
                    acc[i][j] = acc[i][j] + cs * rm[i][j]
        if not _field_det(acc, tower).is_zero():
            found = scalars
            break
    if found is None:
        raise StabilizationError("no unit-determinant fixed-module combination found")
    g = None
    for cs, gmat in zip(found, g_candidates):
        if cs.is_zero():
            continue
        term = tuple(
            tuple(x * TruncatedSeries.constant(cs, prec) for x in row) for row in gmat
        )
        g = term if g is None else tuple(
            tuple(a + b for a, b in zip(ra, rb)) for ra, rb in zip(g, term)
        )
    res = residual_valuation(phi, h, g)
    if res < prec - config.slack:
        raise StabilizationError(f"fixed-module conjugator residual only eps^{res}")
    return ConjugationCertificate(
        g=g,
        residual_valuation=res,
        extension_degree=ext,
        y_data=(),
        route="fixed-module",
    )


# ---------------------------------------------------------------------------
# truncated conjugacy oracle (brute force over a finite group)


@dataclass(frozen=True)
class OracleResult:
    status: str  # "conjugate" or "not-conjugate-at-this-level"
    witness: tuple
    trunc: int
    level_degree: int
    searched: int


def truncated_conjugacy_oracle(phi, h, trunc, ext_degree, budget=2**24):
    """Exhaustive search for g in GL_r(F_{q^m}[eps]/eps^N) with
    g (hA) = A sigma(g) mod eps^N.

    A negative answer is a per-level observation only: the field may simply
    be too small to host a conjugator that exists over the closure.
    """
    tower = phi.tower
    r = phi.rank
    level = 0
    if ext_degree > 1:
        for lv in range(tower.num_levels):
            if tower.relative_degree(lv) == ext_degree:
                level = lv
                break
        else:
            level = tower.extend(ext_degree)
            if tower.relative_degree(level) != ext_degree:
                raise PreconditionError(
                    "tower chain cannot represent the requested extension degree"
                )
    elems = list(tower.enumerate_elements(level))
    qm = len(elems)
    if qm ** (r * r) > budget or qm ** (r * r) * qm ** (r * r * (trunc - 1)) > budget:
        raise BudgetExceeded("oracle search space exceeds budget")
    target = tuple(tuple(x.truncate(trunc) for x in row) for row in mat_mul(h, phi.matrix))
    amat = tuple(tuple(x.truncate(trunc) for x in row) for row in phi.matrix)
    searched = 0
    consts = []
    for combo in itertools.product(range(qm), repeat=r * r):
        mat = [[elems[combo[i * r + j]] for j in range(r)] for i in range(r)]
        if not _field_det(mat, tower).is_zero():
            consts.append(mat)
    for const in consts:
        for higher in itertools.product(range(qm), repeat=r * r * (trunc - 1)):
            searched += 1
            g = []
            for i in range(r):
                row = []
                for j in range(r):
                    coeffs = [const[i][j]]
                    for kdeg in range(trunc - 1):
                        row_idx = (i * r + j) * (trunc - 1) + kdeg
                        coeffs.append(elems[higher[row_idx]])
                    row.append(TruncatedSeries(tower, 0, coeffs, trunc))
                g.append(tuple(row))
            g = tuple(g)
            lhs = mat_mul(g, target)
            rhs = mat_mul(amat, mat_sigma_pow(g, 1))
            if all(
                (x - y).is_zero()
                for row_l, row_r in zip(lhs, rhs)
                for x, y in zip(row_l, row_r)
            ):
                return OracleResult(
                    status="conjugate",
                    witness=g,
                    trunc=trunc,
                    level_degree=ext_degree,
                    searched=searched,
                )
    return OracleResult(
        status="not-conjugate-at-this-level",
        witness=None,
        trunc=trunc,
        level_degree=ext_degree,
        searched=searched,
    )


# ---------------------------------------------------------------------------
# Lemma 4.1 solution census


@dataclass(frozen=True)
class TeqInstance:
    """A small instance of the twisted polynomial system.

    Constants live in F_{q^const_degree}; they are stored as flat coordinate
    lists over F_p so the instance is independent of any particular tower.
    Only prime q is supported (the census targets q in {2, 3}).
    """

    ids: tuple
    j_subset: tuple
    i0: object
    cbar: dict  # id -> flat coords (length const_degree), ids in j_subset
    beta: dict  # id -> flat coords: the linear form t
    alpha: tuple  # flat-coord tuples: g = sum alpha_k z^(q^k)
    const_degree: int = 1


def _materialize_constants(inst, tower, level):
    def mk(coords):
        full = list(coords) + [0] * (tower.absolute_degree(level) - len(coords))
        return tower.from_flat(level, full)

    cbar = {i: mk(inst.cbar[i]) for i in inst.j_subset}
    beta = {i: mk(inst.beta.get(i, [0])) for i in inst.ids}
    alpha = [mk(a) for a in inst.alpha]
    return cbar, beta, alpha


def check_teq_preconditions(inst, p):
    if not inst.j_subset:
        raise PreconditionError("J must be nonempty")
    if inst.i0 not in inst.j_subset:
        raise PreconditionError("i0 must lie in J")
    if any(i not in inst.ids for i in inst.j_subset):
        raise PreconditionError("J must be a subset of I")
    vecs = []
    for i in inst.j_subset:
        coords = [c % p for c in inst.cbar[i]]
        if all(c == 0 for c in coords):
            raise PreconditionError("cbar values must be nonzero")
        vecs.append(coords)
    width = max(len(v) for v in vecs)
    rows = [[v[i] if i < len(v) else 0 for v in vecs] for i in range(width)]
    if kernel_mod_p(rows, p):
        raise PreconditionError("cbar values are F_q-linearly dependent")
    t_in_j = any(any(c % p for c in inst.beta.get(i, [0])) for i in inst.j_subset)
    g_trivial = all(all(c % p == 0 for c in a) for a in inst.alpha)
    if not t_in_j and g_trivial:
        raise PreconditionError("degenerate instance: t in T_(I minus J) and g trivial")


def teq_solution_census(inst, p, m_max=4, budget=2**20):
    """Solution counts of the twisted system over F_(q^m) for m = 1..m_max.

    Each level uses a fresh tower whose top contains both the constants and
    F_(q^m); variables range over the degree-m subfield (selected by the
    sigma^m fixed-point condition).  Finiteness over the closure makes the
    counts stabilize in m.
    """
    check_teq_preconditions(inst, p)
    counts = {}
    nvars = len(inst.ids)
    import math

    for m in range(1, m_max + 1):
        t = ExtensionTower(p, 1)
        need = math.lcm(inst.const_degree, m)
        const_level = 0
        if inst.const_degree > 1:
            const_level = t.extend(inst.const_degree)
        top = const_level
        if need > t.relative_degree(top):
            top = t.extend(need // t.relative_degree(top))
        if t.level_order(top) ** nvars > budget * 8:
            raise BudgetExceeded("census search space exceeds budget")
        cbar, beta, alpha = _materialize_constants(inst, t, const_level)
        cbar_inv = {i: c.inv() for i, c in cbar.items()}
        subfield = [
            x for x in t.enumerate_elements(top) if (x.sigma_pow(m) - x).is_zero()
        ]
        if len(subfield) ** nvars > budget:
            raise BudgetExceeded("census search space exceeds budget")
        count = 0
        for assign in itertools.product(subfield, repeat=nvars):
            z = dict(zip(inst.ids, assign))
            r0 = cbar_inv[inst.i0] * (z[inst.i0].frobenius() - z[inst.i0])
            ok = True
            for i in inst.j_subset:
                if i == inst.i0:
                    continue
                if cbar_inv[i] * (z[i].frobenius() - z[i]) != r0:
                    ok = False
                    break
            if ok:
                for i in inst.ids:
                    if i not in inst.j_subset and not (z[i].frobenius() - z[i]).is_zero():
                        ok = False
                        break
            if ok:
                acc = t.zero()
                for i in inst.ids:
                    acc = acc + beta[i] * z[i]
                power = r0
                for a in alpha:
                    if not a.is_zero():
                        acc = acc + a * power
                    power = power.frobenius()
                if not acc.is_zero():
                    ok = False
            if ok:
                count += 1
        counts[m] = count
    return counts
