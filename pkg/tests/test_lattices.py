import random

import pytest

from fcrystals.errors import PreconditionError
from fcrystals.fields import ExtensionTower
from fcrystals.lattices import (
    Lattice,
    SigmaMap,
    hodge_polygon,
    lang_fiber_census,
    lang_image,
    lattice_canonicalize,
    lattice_valuation,
    mat_det,
    mat_identity,
    mat_inv,
    mat_mul,
    mat_agrees,
    saturate_in_standard,
    twisted_power,
)
from fcrystals.series import TruncatedSeries

T2 = ExtensionTower(2, 1)
T3 = ExtensionTower(3, 1)
PREC = 12


def S(ints, offset=0, precision=PREC, tower=T2):
    return TruncatedSeries.from_int_coeffs(tower, offset, ints, precision)


def mat(rows, tower=T2, precision=PREC):
    """Rows of entries; each entry an int (constant) or (offset, [ints])."""
    out = []
    for r in rows:
        row = []
        for e in r:
            if isinstance(e, tuple):
                off, ints = e
                row.append(TruncatedSeries.from_int_coeffs(tower, off, ints, precision))
            else:
                row.append(TruncatedSeries.from_int_coeffs(tower, 0, [e], precision))
        out.append(tuple(row))
    return tuple(out)


def cols_of(m):
    return tuple(zip(*m))


def random_matrix(tower, n, rng, precision=PREC, window=(0, 3)):
    rows = []
    for _ in range(n):
        row = []
        for _ in range(n):
            coeffs = [tower.from_int(rng.randrange(tower.p)) for _ in range(4)]
            row.append(TruncatedSeries(tower, rng.randrange(*window), coeffs, precision))
        rows.append(tuple(row))
    return tuple(rows)


def random_unimodular(tower, n, rng, precision=PREC):
    """Product of elementary integral matrices: always in GL_n(k[[eps]])."""
    m = mat_identity(tower, n, precision)
    for _ in range(3 * n):
        i, j = rng.randrange(n), rng.randrange(n)
        if i == j:
            continue
        coeffs = [tower.from_int(rng.randrange(tower.p)) for _ in range(3)]
        c = TruncatedSeries(tower, rng.randrange(0, 2), coeffs, precision)
        e = [list(r) for r in mat_identity(tower, n, precision)]
        e[i][j] = c
        m = mat_mul(m, tuple(tuple(r) for r in e))
    return m


# -- canonicalization -----------------------------------------------------------


def test_identity_is_canonical():
    lat = lattice_canonicalize(T2, 2, cols_of(mat_identity(T2, 2, PREC)))
    assert lat.pivot_rows == (0, 1)
    assert lat.pivot_vals == (0, 0)


def test_canonical_form_membership_both_ways():
    # columns (eps*e1, e1 + e2)
    g1 = (S([1], offset=1), S([]))
    g2 = (S([1]), S([1]))
    lat = lattice_canonicalize(T2, 2, (g1, g2))
    # the lattice it spans must contain both generators and be contained in
    # the lattice the generators span (mutual membership oracle)
    for g in (g1, g2):
        assert lat.contains_vector(g)
    regen = Lattice(T2, 2, (g1, g2))
    for c in lat.cols:
        assert regen.contains_vector(c)


def test_permuted_columns_same_canonical_form():
    rng = random.Random(3)
    m = random_matrix(T2, 3, rng)
    cols = list(cols_of(m))
    try:
        lat = Lattice(T2, 3, tuple(cols))
    except Exception:
        pytest.skip("random matrix degenerate")
    for _ in range(4):
        rng.shuffle(cols)
        assert Lattice(T2, 3, tuple(cols)) == lat


def test_rank_deficiency_raises():
    g = (S([1]), S([1]))
    with pytest.raises(PreconditionError):
        lattice_canonicalize(T2, 2, (g, g))


# -- lattice operations ------------------------------------------------------------


def test_sum_idempotent():
    lat = Lattice(T2, 2, cols_of(mat([[1, 1], [0, (1, [1])]])))
    assert lat.sum(lat) == lat


def test_intersect_nested():
    lat = Lattice.standard(T2, 2, PREC)
    eps_lat = lat.scaled(1)
    assert lat.intersect(eps_lat) == eps_lat
    assert eps_lat.index_in(lat) == 2


def test_index_additivity_on_random_pairs():
    rng = random.Random(9)
    done = 0
    while done < 5:
        a = random_matrix(T3, 2, rng, window=(0, 2))
        b = random_matrix(T3, 2, rng, window=(0, 2))
        try:
            l1 = Lattice(T3, 2, cols_of(a), expect_rank=2)
            l2 = Lattice(T3, 2, cols_of(b), expect_rank=2)
        except Exception:
            continue
        inter = l1.intersect(l2)
        total = l1.sum(l2)
        # index additivity, checked through determinant valuations
        lhs = inter.index_in(l1)
        rhs = l2.index_in(total)
        assert lhs == rhs
        va = mat_det(a).valuation()
        vb = mat_det(b).valuation()
        assert inter.index_in(total) == lhs + l1.index_in(total)
        done += 1


def test_lattice_valuation_laws():
    H = Lattice.standard(T2, 2, PREC)
    e1 = (S([1]), S([]))
    assert lattice_valuation(e1, H) == 0
    assert lattice_valuation((S([1], offset=-2), S([])), H) == -2
    rng = random.Random(4)
    for _ in range(20):
        f = (
            TruncatedSeries(T2, rng.randrange(-2, 2), [T2.from_int(1)], PREC),
            TruncatedSeries(T2, rng.randrange(-2, 2), [T2.from_int(rng.randrange(2))], PREC),
        )
        v = lattice_valuation(f, H)
        fe = tuple(x.shift(1) for x in f)
        assert lattice_valuation(fe, H) == v + 1


# -- Hodge polygon / Smith form -------------------------------------------------------


def test_hodge_diag():
    m = mat([[1, 0], [0, (1, [1])]])
    assert hodge_polygon(SigmaMap(m)) == (0, 1)


def test_hodge_antidiagonal():
    # [[0, eps], [1, 0]]: row/column reduction gives exponents (0, 1)
    m = mat([[0, (1, [1])], [1, 0]])
    assert hodge_polygon(SigmaMap(m)) == (0, 1)


def test_hodge_sum_matches_det_valuation():
    rng = random.Random(17)
    done = 0
    while done < 50:
        n = rng.choice([2, 3])
        m = random_matrix(T3, n, rng, window=(-1, 2))
        d = mat_det(m)
        if d.is_zero():
            continue
        exps = hodge_polygon(SigmaMap(m))
        assert sum(exps) == d.valuation()
        assert list(exps) == sorted(exps)
        done += 1


def test_hodge_invariant_under_unimodular_multiplication():
    rng = random.Random(23)
    for _ in range(10):
        m = random_matrix(T2, 2, rng, window=(0, 2))
        if mat_det(m).is_zero():
            continue
        u = random_unimodular(T2, 2, rng)
        v = random_unimodular(T2, 2, rng)
        assert hodge_polygon(SigmaMap(mat_mul(u, mat_mul(m, v)))) == hodge_polygon(SigmaMap(m))


# -- twisted powers ---------------------------------------------------------------


def test_twisted_power_s1():
    m = mat([[0, (1, [1])], [1, 0]])
    assert mat_agrees(twisted_power(SigmaMap(m), 1), m)


def test_twisted_power_standard_simple():
    m = mat([[0, (1, [1])], [1, 0]])
    sq = twisted_power(SigmaMap(m), 2)
    expected = mat([[(1, [1]), 0], [0, (1, [1])]])
    assert mat_agrees(sq, expected)


def test_twisted_power_cocycle():
    # psi^(s+t) = psi^s . sigma^s(psi^t)
    tower = ExtensionTower(2, 1)
    lvl = tower.extend(2)
    rng = random.Random(5)
    w = tower.gen(lvl)
    m = (
        (TruncatedSeries(tower, 0, (w,), PREC), TruncatedSeries(tower, 1, (tower.one(),), PREC)),
        (TruncatedSeries.one(tower, PREC), TruncatedSeries(tower, 0, (w * w,), PREC)),
    )
    psi = SigmaMap(m)
    from fcrystals.lattices import mat_sigma_pow

    for s in (1, 2, 3):
        for t in (1, 2, 3, 4 - s):
            if t < 1:
                continue
            lhs = twisted_power(psi, s + t)
            rhs = mat_mul(twisted_power(psi, s), mat_sigma_pow(twisted_power(psi, t), s))
            assert mat_agrees(lhs, rhs)


# -- Lang image -------------------------------------------------------------------


def test_lang_image_positive_slope_rank1():
    # psi(e) = eps*e on N = k[[eps]]e: image is N
    psi = SigmaMap(mat([[(1, [1])]]))
    N = Lattice.standard(T2, 1, PREC)
    assert lang_image(psi, N, "positive") == N


def test_lang_image_negative_slope_rank1():
    psi = SigmaMap(mat([[(-1, [1])]]))
    N = Lattice.standard(T2, 1, PREC)
    img = lang_image(psi, N, "negative")
    assert img == N.scaled(-1)


def test_lang_image_zero_slope():
    psi = SigmaMap(mat_identity(T2, 1, PREC))
    N = Lattice.standard(T2, 1, PREC)
    assert lang_image(psi, N, "zero") == N


def test_lang_image_bad_certificate():
    psi = SigmaMap(mat([[(1, [1])]]))
    N = Lattice.standard(T2, 1, PREC)
    with pytest.raises(PreconditionError):
        lang_image(psi, N, "negative")


def test_lang_image_minimality_and_containment():
    rng = random.Random(31)
    psi = SigmaMap(mat([[(1, [1]), (1, [1])], [0, (2, [1])]]))
    N = Lattice(T2, 2, cols_of(random_unimodular(T2, 2, rng)))
    img = lang_image(psi, N, "positive")
    assert img.contains_lattice(N)
    assert img.contains_lattice(psi.apply_lattice(N))
    # minimal among lattices containing both
    both = N.sum(psi.apply_lattice(N))
    assert both.contains_lattice(img) and img.contains_lattice(both)


# -- Lang fiber census ----------------------------------------------------------------


def test_census_sigma_rank1_f2():
    psi = SigmaMap(mat_identity(T2, 1, PREC))
    domain, image, fiber = lang_fiber_census(psi, 0, 1, level=0)
    assert (domain, image, fiber) == (2, 1, 2)


def test_census_sigma_rank1_f4():
    tower = ExtensionTower(2, 1)
    lvl = tower.extend(2)
    psi = SigmaMap(mat_identity(tower, 1, PREC))
    domain, image, fiber = lang_fiber_census(psi, 0, 1, level=lvl)
    assert (domain, image, fiber) == (4, 2, 2)


def test_census_eps_sigma_injective():
    psi = SigmaMap(mat([[(1, [1])]]))
    domain, image, fiber = lang_fiber_census(psi, 0, 2, level=0)
    assert fiber == 1
    assert domain == image == 4


def test_census_fiber_law_various():
    tower = ExtensionTower(2, 1)
    lvl = tower.extend(2)
    cases = [
        (SigmaMap(mat_identity(T2, 2, PREC)), 0, 1, 0),
        (SigmaMap(mat([[0, (1, [1])], [1, 0]])), 0, 2, 0),
        (SigmaMap(mat_identity(tower, 1, PREC)), -1, 1, lvl),
    ]
    for psi, n, m, level in cases:
        domain, image, fiber = lang_fiber_census(psi, n, m, level=level)
        assert image * fiber == domain


# -- saturation ---------------------------------------------------------------------


def test_saturate_line():
    # span of (eps^-1, eps^-1) meets O^2 in multiples of (1, 1)
    col = (S([1], offset=-1), S([1], offset=-1))
    lat = saturate_in_standard((col,), 2, T2)
    assert lat.contains_vector((S([1]), S([1])))
    assert not lat.contains_vector((S([1]), S([])))


def test_saturate_plane_with_cancellation():
    # span{(1,1,0), (1,1+eps,eps)} contains (0,eps,eps)/eps = (0,1,1)
    c1 = (S([1]), S([1]), S([]))
    c2 = (S([1]), S([1, 1]), S([1], offset=1))
    lat = saturate_in_standard((c1, c2), 3, T2)
    assert lat.contains_vector((S([]), S([1]), S([1])))
    std = Lattice.standard(T2, 3, PREC)
    assert std.contains_lattice(lat)
