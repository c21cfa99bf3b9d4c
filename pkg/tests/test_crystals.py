from fractions import Fraction

import pytest

from fcrystals.errors import PreconditionError
from fcrystals.fields import ExtensionTower
from fcrystals.crystals import (
    FCrystal,
    NewtonPolygon,
    build_crystal,
    direct_sum,
    end_crystal,
    newton_polygon,
    reassemble,
    seeded_gl_element,
    seeded_k_n_element,
    slope_decomposition,
    standard_simple,
)
from fcrystals.lattices import (
    SigmaMap,
    hodge_polygon,
    mat_agrees,
    mat_identity,
    mat_mul,
    mat_sigma_pow,
    mat_vec,
    smith_exponents,
    twisted_power,
    unvec_matrix,
    vec_matrix,
)
from fcrystals.series import TruncatedSeries

T2 = ExtensionTower(2, 1)
T3 = ExtensionTower(3, 1)
PREC = 24


def F(lam, mult):
    return (Fraction(lam), mult)


# -- constructors ---------------------------------------------------------------


def test_standard_simple_rank1_slope0_is_sigma():
    phi = standard_simple(T2, 1, 0, PREC)
    assert phi.matrix[0][0] == TruncatedSeries.one(T2, PREC)
    assert phi.is_integral


def test_standard_simple_2_1_matrix():
    phi = standard_simple(T2, 2, 1, PREC)
    a = phi.matrix
    assert a[0][0].is_zero() and a[1][1].is_zero()
    assert a[0][1] == TruncatedSeries.eps_power(T2, 1, PREC)
    assert a[1][0] == TruncatedSeries.one(T2, PREC)


def test_standard_simple_negative_slope_not_integral():
    phi = standard_simple(T2, 3, -1, PREC)
    assert not phi.is_integral
    assert newton_polygon(phi).slopes == (F(Fraction(-1, 3), 3),)


def test_build_crystal_single_block_passthrough():
    phi = standard_simple(T2, 2, 1, PREC)
    assert build_crystal([phi]) is phi


def test_twist_at_precision_invisible():
    blocks = [standard_simple(T2, 1, 0, PREC), standard_simple(T2, 1, 1, PREC)]
    plain = direct_sum(blocks)
    twisted = build_crystal(blocks, twist=(7, PREC))
    assert mat_agrees(plain.matrix, twisted.matrix)


def test_twist_preserves_newton_at_safe_level():
    # at twist level >= the isomorphism threshold the class, hence the
    # polygon, is unchanged; use comfortably deep twists
    for seed in (1, 2, 3):
        blocks = [standard_simple(T2, 2, 1, PREC), standard_simple(T2, 1, 0, PREC)]
        plain = direct_sum(blocks)
        twisted = build_crystal(blocks, twist=(seed, 3))
        assert newton_polygon(twisted) == newton_polygon(plain)


# -- Newton polygons ----------------------------------------------------------------


def test_newton_standard_simple_2_1():
    np_ = newton_polygon(standard_simple(T2, 2, 1, PREC), certify=True)
    assert np_.slopes == (F(Fraction(1, 2), 2),)
    # oracle: the twisted square is eps * identity, Hodge (1, 1)
    phi = standard_simple(T2, 2, 1, PREC)
    sq = twisted_power(phi.map, 2)
    assert smith_exponents(sq) == (1, 1)


def test_newton_diagonal():
    phi = direct_sum([standard_simple(T2, 1, 0, PREC), standard_simple(T2, 1, 1, PREC)])
    np_ = newton_polygon(phi, certify=True)
    assert np_.slopes == (F(0, 1), F(1, 1))


def test_newton_direct_sum_is_multiset_union():
    a = standard_simple(T2, 3, 1, PREC)
    b = standard_simple(T2, 1, 1, PREC)
    np_sum = newton_polygon(direct_sum([a, b]), certify=True)
    assert np_sum == newton_polygon(a).union(newton_polygon(b))
    assert np_sum.slopes == (F(Fraction(1, 3), 3), F(1, 1))


def test_newton_polygon_type_invariants():
    with pytest.raises(PreconditionError):
        NewtonPolygon({Fraction(1, 2): 3})  # multiplicity not divisible by denominator
    with pytest.raises(PreconditionError):
        NewtonPolygon({Fraction(0): 0})


@pytest.mark.parametrize("q", [2, 3])
def test_newton_invariance_under_gl_conjugation(q):
    tower = ExtensionTower(q, 1)
    blocks = [standard_simple(tower, 2, 1, PREC), standard_simple(tower, 1, 0, PREC)]
    phi = build_crystal(blocks, twist=(5, 1))
    np_ = newton_polygon(phi)
    for seed in range(20):
        h = seeded_gl_element(tower, phi.rank, seed, PREC)
        conj = phi.sigma_conjugate(h)
        assert newton_polygon(conj) == np_


def test_newton_invariant_hodge_not_under_nonintegral_conjugation():
    # conjugating by a basis change that moves the lattice changes the Hodge
    # polygon but never the Newton polygon: assert exactly this
    phi = direct_sum([standard_simple(T2, 1, 0, PREC), standard_simple(T2, 1, 1, PREC)])
    h = seeded_k_n_element(T2, 2, 1, 3, PREC)
    phi = phi.twist_left(h)
    g = [list(r) for r in mat_identity(T2, 2, PREC)]
    g[0][1] = TruncatedSeries.eps_power(T2, -3, PREC)
    conj = phi.sigma_conjugate(tuple(tuple(r) for r in g))
    assert newton_polygon(conj) == newton_polygon(phi)
    assert hodge_polygon(conj.map) != hodge_polygon(phi.map)


# -- slope decomposition ---------------------------------------------------------------


def test_decomposition_of_block_diagonal_input():
    phi = direct_sum([standard_simple(T2, 1, 0, PREC), standard_simple(T2, 1, 1, PREC)])
    dec = slope_decomposition(phi)
    assert dec.slopes == (0, 1)
    assert dec.multiplicities == (1, 1)
    assert dec.residual_valuation >= PREC - 4
    # g is within-block change of basis only: image of e1 stays on the e1 line
    assert dec.g[1][0].is_zero()


def test_decomposition_isoclinic_identity():
    phi = standard_simple(T2, 2, 1, PREC)
    dec = slope_decomposition(phi)
    assert len(dec.blocks) == 1
    assert mat_agrees(dec.g, mat_identity(T2, 2, PREC))
    assert mat_agrees(dec.blocks[0], phi.matrix)


@pytest.mark.parametrize("seed", [1, 5, 9])
def test_decomposition_of_twisted_diagonal(seed):
    blocks = [standard_simple(T2, 1, 0, PREC), standard_simple(T2, 1, 1, PREC)]
    phi = build_crystal(blocks, twist=(seed, 1))
    dec = slope_decomposition(phi)
    assert dec.slopes == (0, 1)
    assert dec.residual_valuation >= PREC - 4
    for block, lam in zip(dec.blocks, dec.slopes):
        bn = newton_polygon(FCrystal(T2, block))
        assert bn.slopes == ((lam, len(block)),)


def test_decomposition_round_trip():
    blocks = [standard_simple(T3, 2, 1, PREC), standard_simple(T3, 1, 0, PREC)]
    phi = build_crystal(blocks, twist=(13, 1))
    dec = slope_decomposition(phi)
    rec = reassemble(dec, T3)
    assert mat_agrees(rec, phi.matrix, PREC - 4)


# -- endomorphism crystal ------------------------------------------------------------


def test_end_crystal_of_sigma_rank2():
    phi = standard_simple(T2, 1, 0, PREC)
    two = direct_sum([phi, phi])
    e = end_crystal(two)
    assert e.v_zero.rank == 4
    assert e.v_plus.rank == 0 and e.v_minus.rank == 0
    # phi-tilde is sigma on all of End
    f = mat_identity(T2, 2, PREC)
    img = unvec_matrix(e.tilde.apply(vec_matrix(f)))
    assert mat_agrees(img, f)


def test_end_crystal_split_of_diag():
    phi = direct_sum([standard_simple(T2, 1, 0, PREC), standard_simple(T2, 1, 1, PREC)])
    e = end_crystal(phi)
    assert (e.v_plus.rank, e.v_zero.rank, e.v_minus.rank) == (1, 2, 1)
    # slope bookkeeping: Hom(slope 0, slope 1) is the lower-left entry line,
    # on which phi-tilde gains a full power of eps; the upper-right line loses one
    lower = vec_matrix(((TruncatedSeries.zero(T2, PREC), TruncatedSeries.zero(T2, PREC)),
                        (TruncatedSeries.one(T2, PREC), TruncatedSeries.zero(T2, PREC))))
    assert e.v_plus.contains_vector(lower)
    img = e.tilde.apply(lower)
    assert unvec_matrix(img)[1][0].valuation() == 1
    upper = vec_matrix(((TruncatedSeries.zero(T2, PREC), TruncatedSeries.one(T2, PREC)),
                        (TruncatedSeries.zero(T2, PREC), TruncatedSeries.zero(T2, PREC))))
    assert e.v_minus.contains_vector(upper)
    assert unvec_matrix(e.tilde.apply(upper))[0][1].valuation() == -1


@pytest.mark.parametrize("recipe,twist", [([(2, 1)], None), ([(1, 0), (1, 1)], (3, 1))])
def test_end_crystal_defining_identity(recipe, twist):
    import random

    blocks = [standard_simple(T2, r, s, PREC) for r, s in recipe]
    phi = build_crystal(blocks, twist=twist)
    e = end_crystal(phi)
    rng = random.Random(0)
    r = phi.rank
    for _ in range(20):
        f = tuple(
            tuple(
                TruncatedSeries(T2, 0, [T2.from_int(rng.randrange(2)) for _ in range(6)], PREC)
                for _ in range(r)
            )
            for _ in range(r)
        )
        # phi-tilde(f) * phi = phi * f     (as sigma-linear maps: matrices
        # tilde(f) A = A sigma(f))
        tf = unvec_matrix(e.tilde.apply(vec_matrix(f)))
        lhs = mat_mul(tf, phi.matrix)
        rhs = mat_mul(phi.matrix, mat_sigma_pow(f, 1))
        assert mat_agrees(lhs, rhs, PREC - 4)
