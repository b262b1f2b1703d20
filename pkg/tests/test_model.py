import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from bloomlab.dyadic import DyadicInterval, active_intervals
from bloomlab.model import (E_SIGNS, ParaproductSpec, ShiftSpec, SpecError, aux_phi, e_combination,
                            e_term_shift, make_paraproduct, make_shift, maximal, pipi_b,
                            random_paraproduct, random_shift, shift_triples,
                            single_coefficient_shift, square_function)
from bloomlab.commutators import e_telescoped_weights
from bloomlab.operators import operator_norm_p2
from bloomlab.paraproducts import paraproduct

seeds = st.integers(0, 2**32 - 1)


def _key(t):
    return tuple((I.level, I.index) for I in t)


@pytest.mark.parametrize("k", [(0, 0), (1, 0), (0, 2), (2, 1)])
def test_shift_matrix_matches_oracle(k):
    L, n = 3, 8
    s = random_shift(L, 1, *k, seed=4)
    ref = oracles.shift_1d({_key(t): a for t, a in s.coeffs.items()}, n)
    assert np.abs(s.matrix() - ref).max() < 1e-14
    f = np.random.default_rng(1).standard_normal((n, n))
    assert np.allclose(make_shift(s).apply(f), ref @ f)
    s2 = random_shift(L, 2, *k, seed=4)
    assert np.allclose(make_shift(s2).apply(f), f @ ref.T)


def test_shift_triples():
    ts = shift_triples(3, 1, 2)
    assert all(I1.level == K.level + 1 and I2.level == K.level + 2 for K, I1, I2 in ts)
    assert len(ts) == 1 * 2 * 4  # only K at level 0 has level-2 descendants that are active
    assert shift_triples(2, 2, 0) == []


def test_shift_validation():
    K = DyadicInterval(0, 0)
    I = DyadicInterval(1, 0)
    with pytest.raises(SpecError):
        ShiftSpec(2, 1, (1, 1), {(K, I, I): 0.6})  # above sqrt(|I1||I2|)/|K| = 0.5
    with pytest.raises(SpecError):
        ShiftSpec(2, 1, (1, 0), {(K, I, I): 0.1})  # wrong complexity
    with pytest.raises(SpecError):
        ShiftSpec(2, 3, (1, 1), {})
    with pytest.raises(SpecError):
        ShiftSpec(2, 1, (2, 2), {(K, DyadicInterval(2, 0), DyadicInterval(2, 1)): 0.1})  # inactive


def test_single_shift_norm_is_coefficient():
    L = 3
    K = DyadicInterval(0, 0)
    I1, I2 = DyadicInterval(1, 0), DyadicInterval(2, 3)
    s = single_coefficient_shift(L, 2, K, I1, I2, -0.2)
    assert operator_norm_p2(make_shift(s)).value == pytest.approx(0.2, abs=1e-8)
    assert single_coefficient_shift(L, 1, K, I1, I2).coeffs[(K, I1, I2)] == pytest.approx((0.5 * 0.25) ** 0.5)


@pytest.mark.parametrize("form", ["direct", "dual"])
def test_paraproduct_matrix_matches_oracle(form):
    p = random_paraproduct(3, 1, form, seed=2)
    a = {(K.level, K.index): v for K, v in p.coeffs.items()}
    assert np.abs(p.matrix() - oracles.paraproduct_1d(a, 8, form)).max() < 1e-14
    tilde = ParaproductSpec(3, 1, form, True, p.coeffs)
    a_abs = {k: abs(v) for k, v in a.items()}
    assert np.abs(tilde.matrix() - oracles.paraproduct_1d(a_abs, 8, form)).max() < 1e-14


def test_paraproduct_dual_is_adjoint():
    d = random_paraproduct(3, 1, "direct", seed=3)
    u = ParaproductSpec(3, 1, "dual", False, d.coeffs)
    # adjoint with respect to the L^2 pairing with weight 1/N
    assert np.allclose(u.matrix(), d.matrix().T)


def test_paraproduct_validation():
    with pytest.raises(SpecError):
        ParaproductSpec(2, 1, "direct", False, {DyadicInterval(0, 0): 1.5})
    with pytest.raises(SpecError):
        ParaproductSpec(2, 1, "sideways")
    with pytest.raises(SpecError):
        ParaproductSpec(2, 1, "direct", False, {DyadicInterval(2, 0): 0.1})


def test_random_generators_deterministic():
    a = random_shift(3, 1, 1, 1, seed=9)
    b = random_shift(3, 1, 1, 1, seed=9)
    assert a.coeffs == b.coeffs
    p = random_paraproduct(4, 2, seed=1)
    from bloomlab.weights import bmo_sequence
    assert bmo_sequence(p.coeffs) == pytest.approx(1.0, abs=1e-12)
    assert bmo_sequence(p.coeffs) <= 1.0


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(0, 2), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2))
def test_e_term_identity(seed, k1, k2, v1, v2):
    L = 3
    rng = np.random.default_rng(seed)
    b, f = rng.standard_normal((2, 8, 8))
    s1 = random_shift(L, 1, k1, k2, seed=rng)
    s2 = random_shift(L, 2, v1, v2, seed=rng)
    S1, S2 = make_shift(s1), make_shift(s2)
    lhs = S1.apply(paraproduct("W", b, S2.apply(f)))
    assert np.abs(lhs - e_term_shift(b, s1, s2, (1, 2)).apply(f)).max() < 1e-12
    # fourfold telescoping reproduces the E weights term by term
    G = e_combination(b, s1, s2).G
    assert np.abs(e_telescoped_weights(b, s1, s2) - G).max() < 1e-12


def test_e_term_constant_b_vanishes(rng):
    s1 = random_shift(3, 1, 1, 2, seed=1)
    s2 = random_shift(3, 2, 2, 0, seed=2)
    b = np.full((8, 8), 3.0)
    f = rng.standard_normal((8, 8))
    assert np.abs(e_combination(b, s1, s2).apply(f)).max() < 1e-13
    S12 = make_shift(s1) @ make_shift(s2)
    assert np.allclose(e_term_shift(b, s1, s2, (2, 1)).apply(f), 3.0 * S12.apply(f))
    assert set(E_SIGNS) == {(1, 1), (1, 2), (2, 1), (2, 2)}


def test_paired_adjoint(rng):
    from bloomlab.operators import assemble_matrix
    s1 = random_shift(2, 1, 1, 0, seed=1)
    s2 = random_shift(2, 2, 0, 1, seed=2)
    T = e_term_shift(rng.standard_normal((4, 4)), s1, s2, (1, 1))
    assert np.allclose(assemble_matrix(T.adjoint()), assemble_matrix(T).T)


def test_pipi_b(rng):
    p1 = random_paraproduct(3, 1, "direct", seed=1)
    p2 = random_paraproduct(3, 2, "direct", seed=2)
    b = rng.standard_normal((8, 8))
    f = rng.standard_normal((8, 8))
    # constant b: (pi pi)^b = c pi^1 pi^2
    c = np.full((8, 8), 2.0)
    ref = 2.0 * make_paraproduct(p1).apply(make_paraproduct(p2).apply(f))
    assert np.allclose(pipi_b(c, p1, p2).apply(f), ref)
    with pytest.raises(SpecError):
        pipi_b(b, p1, ParaproductSpec(3, 2, "dual", False, p2.coeffs))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), seeds)
def test_aux_identity(L, seed):
    f = np.random.default_rng(seed).standard_normal((2**L, 2**L))
    S = square_function("S", f)
    assert np.abs(square_function("S1", aux_phi(f, 1)) - S).max() <= 1e-12
    assert np.abs(square_function("S2", aux_phi(f, 2)) - S).max() <= 1e-12


def test_square_function_oracle(rng):
    f = rng.standard_normal((8, 8))
    assert np.allclose(square_function("S", f), oracles.square_function(f))


def test_parseval_doubly_cancellative(rng):
    from bloomlab.dyadic import haar_coefficients, synthesize
    c = haar_coefficients(rng.standard_normal((8, 8)))
    c[0, :] = c[:, 0] = 0
    f = synthesize(c)
    S = square_function("S", f)
    assert abs(np.mean(S**2) - np.mean(f**2)) < 1e-12


def test_maximal(rng):
    f = rng.standard_normal((8, 8))
    M = maximal("M", f)
    assert np.all(M >= np.abs(f) - 1e-15)
    assert np.all(M >= maximal("M1", f) - 1e-15) and np.all(M >= maximal("M2", f) - 1e-15)
    assert M[0, 0] >= abs(f.mean())
    assert np.allclose(maximal("M1", f), maximal("M2", f.T).T)
    # S1M dominates S1
    assert np.all(square_function("S1M", f) >= square_function("S1", f) - 1e-12)
    with pytest.raises(ValueError):
        maximal("M3", f)
    with pytest.raises(ValueError):
        square_function("S3", f)
