import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from bloomlab.commutators import (CASES, DecompositionFailure, commutator, dual_e_formula,
                                  iterated_commutator, mixed_last_term_formula, nested_commutator,
                                  pi_a5_average_form, pi_a5_formula, pipi_tail_formula, pipi_tails,
                                  shift_a5_difference, shift_a5_formula, verify_decomposition)
from bloomlab.model import SpecError, make_paraproduct, make_shift, random_paraproduct, random_shift
from bloomlab.operators import AxisOperator, Multiplication, assemble_matrix
from bloomlab.paraproducts import paraproduct

seeds = st.integers(0, 2**32 - 1)


def _inputs(case, L, rng, k=(1, 1, 1, 1)):
    if case == "shift_shift":
        return random_shift(L, 1, k[0], k[1], seed=rng), random_shift(L, 2, k[2], k[3], seed=rng)
    if case == "mixed_shift_pi":
        return random_shift(L, 1, k[0], k[1], seed=rng), random_paraproduct(L, 2, "direct", rng)
    form = "dual" if case == "pi_pi_dual" else "direct"
    return random_paraproduct(L, 1, form, rng), random_paraproduct(L, 2, "direct", rng)


def test_nested_commutator_against_dense(rng):
    n = 4
    A = AxisOperator(rng.standard_normal((n, n)), 1)
    B = AxisOperator(rng.standard_normal((n, n)), 2)
    b = rng.standard_normal((n, n))
    MA, MB, Mb = assemble_matrix(A), assemble_matrix(B), np.diag(b.ravel())
    inner_ = Mb @ MB - MB @ Mb
    ref = MA @ inner_ - inner_ @ MA
    assert np.allclose(assemble_matrix(nested_commutator(A, b, B)), ref)
    assert np.allclose(assemble_matrix(commutator(b, A)), Mb @ assemble_matrix(A) - assemble_matrix(A) @ Mb)
    with pytest.raises(ValueError):
        nested_commutator(A, b, A)


def test_iterated_commutator(rng):
    A = AxisOperator(rng.standard_normal((4, 4)), 1)
    b = rng.standard_normal((4, 4))
    two = iterated_commutator(b, A, 2)
    f = rng.standard_normal((4, 4))
    # [b,[b,T]] f = b^2 Tf - 2 b T(bf) + T(b^2 f)
    assert np.allclose(two.apply(f), b * b * A.apply(f) - 2 * b * A.apply(b * f) + A.apply(b * b * f))
    with pytest.raises(ValueError):
        iterated_commutator(b, A, 0)


def test_constant_b_commutes(rng):
    s1, s2 = _inputs("shift_shift", 3, rng)
    T = nested_commutator(make_shift(s1), np.full((8, 8), 5.0), make_shift(s2))
    assert np.abs(T.apply(rng.standard_normal((8, 8)))).max() < 1e-12


@pytest.mark.parametrize("case", CASES)
@pytest.mark.parametrize("L", [1, 2, 3])
def test_decompositions_small(case, L, rng):
    cap = min(1, L - 1)
    for _ in range(3):
        U1, U2 = _inputs(case, L, rng, (cap, 0, 0, cap))
        b, f = rng.standard_normal((2, 2**L, 2**L))
        rep = verify_decomposition(case, b, U1, U2, f)
        assert rep.ok and rep.residual_sup <= 1e-10 * rep.scale


@settings(max_examples=12, deadline=None)
@given(seeds, st.lists(st.integers(0, 2), min_size=4, max_size=4))
def test_shift_shift_all_complexities(seed, k):
    rng = np.random.default_rng(seed)
    U1, U2 = _inputs("shift_shift", 4, rng, k)
    b, f = rng.standard_normal((2, 16, 16))
    rep = verify_decomposition("shift_shift", b, U1, U2, f)
    assert rep.residual_sup <= 1e-10
    # W-terms equal their E-term counterparts; the pair_* details are genuine pieces
    for name, v in rep.details.items():
        if name.endswith("_minus_E_term"):
            assert np.abs(v).max() <= 1e-12, name


@pytest.mark.parametrize("case", ["pi_pi", "mixed_shift_pi", "pi_pi_dual"])
def test_case_details_vanish(case, rng):
    U1, U2 = _inputs(case, 4, rng, (2, 1, 0, 0))
    b, f = rng.standard_normal((2, 16, 16))
    rep = verify_decomposition(case, b, U1, U2, f)
    assert rep.ok
    for name, v in rep.details.items():
        assert np.abs(v).max() <= 1e-10, name
    summary = rep.summary()
    assert summary["case"] == case and summary["residual"] == rep.residual_sup
    assert '"case"' in rep.to_json()


def test_failure_raises(rng, monkeypatch):
    U1, U2 = _inputs("shift_shift", 3, rng)
    b, f = rng.standard_normal((2, 8, 8))
    import bloomlab.commutators as cm
    real = cm.nested_commutator

    class Off:
        def __init__(self, T):
            self.T = T

        def apply(self, g):
            return self.T.apply(g) + 1.0

    monkeypatch.setattr(cm, "nested_commutator", lambda *a: Off(real(*a)))
    with pytest.raises(DecompositionFailure) as exc:
        verify_decomposition("shift_shift", b, U1, U2, f)
    assert not exc.value.report.ok
    rep = verify_decomposition("shift_shift", b, U1, U2, f, check=False)
    assert not rep.ok


def test_validation(rng):
    U1, U2 = _inputs("shift_shift", 3, rng)
    b, f = rng.standard_normal((2, 8, 8))
    with pytest.raises(ValueError):
        verify_decomposition("nope", b, U1, U2, f)
    with pytest.raises((SpecError, TypeError, ValueError)):
        verify_decomposition("pi_pi", b, U1, U2, f)
    with pytest.raises((SpecError, ValueError)):
        verify_decomposition("shift_shift", b, U2, U1, f)


def test_shift_a5_formula(rng):
    s1 = random_shift(4, 1, 2, 1, seed=rng)
    b, f = rng.standard_normal((2, 16, 16))
    assert np.abs(shift_a5_difference(b, s1, f) - shift_a5_formula(b, s1, f)).max() < 1e-12


def test_pipi_tail_sign(rng):
    """Sum of the three tails is minus the b-coefficient-weighted paraproduct term."""
    p1 = random_paraproduct(3, 1, "direct", rng)
    p2 = random_paraproduct(3, 2, "direct", rng)
    b, f = rng.standard_normal((2, 8, 8))
    tails = pipi_tails(b, p1, p2, f)
    total = sum(tails.values()) if isinstance(tails, dict) else sum(tails)
    assert np.abs(total - pipi_tail_formula(b, p1, p2, f)).max() < 1e-12
    # brute-force: -sum_{K,V} a_K a_V sum_{I in K, J in V} b_IJ f_IJ / (|K||V|) h_K (x) h_V
    n = 8
    ref = np.zeros((n, n))
    a1 = {(K.level, K.index): v for K, v in p1.coeffs.items()}
    a2 = {(K.level, K.index): v for K, v in p2.coeffs.items()}
    for K, aK in a1.items():
        for V, aV in a2.items():
            s = 0.0
            for I in oracles.active(3):
                if I[0] < K[0] or I[1] >> (I[0] - K[0]) != K[1]:
                    continue
                for J in oracles.active(3):
                    if J[0] < V[0] or J[1] >> (J[0] - V[0]) != V[1]:
                        continue
                    h = np.outer(oracles.haar_1d(*I, n), oracles.haar_1d(*J, n))
                    s += oracles.inner(b, h) * oracles.inner(f, h)
            ref -= aK * aV * s * 2 ** (K[0] + V[0]) * np.outer(oracles.haar_1d(*K, n), oracles.haar_1d(*V, n))
    assert np.abs(total - ref).max() < 1e-12


def test_pi_a5_forms(rng):
    p1 = random_paraproduct(3, 1, "direct", rng)
    b, f = rng.standard_normal((2, 8, 8))
    P = make_paraproduct(p1)
    direct = P.apply(paraproduct("a2_1", b, f)) - paraproduct("A5", b, P.apply(f))
    assert np.abs(direct - pi_a5_formula(b, p1, f)).max() < 1e-12
    assert np.abs(pi_a5_formula(b, p1, f) - pi_a5_average_form(b, p1, f)).max() < 1e-12


def test_mixed_and_dual_formulas(rng):
    s1 = random_shift(3, 1, 1, 2, seed=rng)
    p2 = random_paraproduct(3, 2, "direct", rng)
    b, f = rng.standard_normal((2, 8, 8))
    assert np.all(np.isfinite(mixed_last_term_formula(b, s1, p2, f)))
    u1 = random_paraproduct(3, 1, "dual", rng)
    assert np.all(np.isfinite(dual_e_formula(b, u1, p2, f)))
