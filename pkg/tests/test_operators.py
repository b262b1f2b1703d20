import numpy as np
import pytest

import oracles
from bloomlab.dyadic import frames
from bloomlab.operators import (AxisOperator, DenseOperator, Identity, Multiplication,
                                NonConvergenceError, Zero, adjoint, assemble_matrix, compose,
                                operator_norm_lower, operator_norm_p2, operator_norm_svd,
                                power_iteration)
from bloomlab.weights import Weight


def test_algebra(rng):
    n = 4
    m = rng.standard_normal((n, n))
    A = AxisOperator(rng.standard_normal((n, n)), 1)
    B = AxisOperator(rng.standard_normal((n, n)), 2)
    f = rng.standard_normal((n, n))
    T = A @ Multiplication(m) - 2.0 * B + Identity(2)
    expect = A.apply(m * f) - 2 * B.apply(f) + f
    assert np.allclose(T(f), expect)
    assert np.allclose(compose(A, B).apply(f), A.apply(B.apply(f)))
    assert np.allclose(Zero(2).apply(f), 0)


def test_adjoint(rng):
    n = 8
    T = AxisOperator(rng.standard_normal((n, n)), 2) @ Multiplication(rng.standard_normal((n, n)))
    M = assemble_matrix(T)
    assert np.allclose(assemble_matrix(adjoint(T)), M.T)


def test_depth_mismatch(rng):
    with pytest.raises(ValueError):
        Identity(2)(np.zeros((8, 8)))


def test_dense_round_trip(rng):
    M = rng.standard_normal((16, 16))
    D = DenseOperator(M)
    assert np.allclose(assemble_matrix(D), M)
    assert np.allclose(assemble_matrix(D), oracles.dense(D.apply, 4))


def test_calibration_norms(rng):
    m = rng.standard_normal((8, 8))
    assert operator_norm_p2(Identity(3)).value == pytest.approx(1.0, abs=1e-8)
    assert operator_norm_p2(Multiplication(m)).value == pytest.approx(np.abs(m).max(), abs=1e-8)


def test_weighted_norm_against_svd(rng):
    n = 4
    T = AxisOperator(rng.standard_normal((n, n)), 1) @ Multiplication(rng.standard_normal((n, n)))
    mu, lam = np.exp(rng.standard_normal((2, n, n)))
    est = operator_norm_p2(T, Weight(mu), Weight(lam))
    ref = oracles.weighted_norm(oracles.dense(T.apply, n), mu, lam)
    assert est.kind == "certified_norm"
    assert est.value == pytest.approx(ref, rel=1e-6)
    assert operator_norm_svd(T, Weight(mu), Weight(lam)) == pytest.approx(ref, rel=1e-12)


def test_power_iteration_degenerate_gap():
    # two equal top eigenvalues: the Rayleigh quotient still converges
    g = np.diag([2.0, 2.0, 1.0, 0.5])
    rho, *_ = power_iteration(g)
    assert rho == pytest.approx(2.0, rel=1e-10)
    assert power_iteration(np.zeros((3, 3)))[0] == 0.0


def test_power_iteration_nonconvergence():
    g = np.diag([1.0, 1.0 - 1e-9, 0.5])
    with pytest.raises(NonConvergenceError) as exc:
        power_iteration(g, max_iter=3, max_squarings=0)
    assert exc.value.residual >= 0


def test_lower_estimate_is_lower(rng):
    n = 4
    T = AxisOperator(rng.standard_normal((n, n)), 1)
    est = operator_norm_lower(T, p=2.0, budget=200, seed=1)
    exact = operator_norm_svd(T)
    assert est.kind == "lower_estimate"
    assert est.value <= exact * (1 + 1e-12)
    assert est.value >= 0.9 * exact
    p3 = operator_norm_lower(T, p=3.0, budget=100, seed=1)
    assert np.isfinite(p3.value) and p3.value > 0


def test_frames_readonly():
    with pytest.raises(ValueError):
        frames(2).haar[0, 0] = 1.0
