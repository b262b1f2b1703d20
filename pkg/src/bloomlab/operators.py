"""Linear operators on grid functions, dense assembly and weighted operator norms.

Every operator acts on arrays whose last two axes are a grid; leading axes are
a batch.  Adjoints are taken with respect to the unweighted ``L^2([0,1)^2)``
pairing, which for grid functions is ``sum(f * g) / N**2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DepthMismatchError, depth_of

logger = logging.getLogger(__name__)

MAX_ASSEMBLY_CELLS = 2**14


class Operator:
    """Base class for linear maps between grid functions of one depth."""

    axis: int | None = None

    def __init__(self, depth: int, descriptor):
        self.depth = depth
        self.descriptor = descriptor

    def apply(self, f) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self) -> "Operator":
        return DenseOperator(assemble_matrix(self).T, ("adjoint", self.descriptor))

    def _check(self, f):
        f = np.asarray(f, dtype=float)
        if depth_of(f) != self.depth:
            raise DepthMismatchError(f"operator of depth {self.depth} applied to depth {depth_of(f)}")
        return f

    def __call__(self, f):
        return self.apply(self._check(f))

    def __matmul__(self, other: "Operator") -> "Operator":
        return compose(self, other)

    def __add__(self, other: "Operator") -> "Operator":
        return LinearCombination([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Operator") -> "Operator":
        return LinearCombination([(1.0, self), (-1.0, other)])

    def __neg__(self) -> "Operator":
        return LinearCombination([(-1.0, self)])

    def __rmul__(self, c: float) -> "Operator":
        return LinearCombination([(float(c), self)])

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor!r})"


class Identity(Operator):
    def __init__(self, depth: int):
        super().__init__(depth, "identity")

    def apply(self, f):
        return np.array(f, dtype=float)

    def adjoint(self):
        return self


class Zero(Operator):
    def __init__(self, depth: int):
        super().__init__(depth, "zero")

    def apply(self, f):
        return np.zeros(np.shape(f))

    def adjoint(self):
        return self


class Multiplication(Operator):
    """Pointwise multiplication by a grid function."""

    def __init__(self, m, descriptor="mult"):
        m = np.array(m, dtype=float)
        m.setflags(write=False)
        super().__init__(depth_of(m), descriptor)
        self.m = m

    def apply(self, f):
        return self.m * f

    def adjoint(self):
        return self


class AxisOperator(Operator):
    """A one-parameter operator: the matrix acts on the cell values along one axis."""

    def __init__(self, matrix, axis: int, descriptor="axis"):
        matrix = np.array(matrix, dtype=float)
        matrix.setflags(write=False)
        n = matrix.shape[0]
        if matrix.shape != (n, n):
            raise ValueError("axis operator matrix must be square")
        super().__init__(n.bit_length() - 1, descriptor)
        if axis not in (1, 2):
            raise ValueError(f"axis must be 1 or 2, got {axis}")
        self.matrix = matrix
        self.axis = axis

    def apply(self, f):
        if self.axis == 1:
            return self.matrix @ f
        return f @ self.matrix.T

    def adjoint(self):
        return AxisOperator(self.matrix.T, self.axis, ("adjoint", self.descriptor))

    def partial_adjoint(self, slot: int) -> "AxisOperator":
        """Transpose in ``slot`` only; the other slot is untouched."""
        return self.adjoint() if slot == self.axis else self


class TensorOperator(Operator):
    """``f -> out1^T (coeff * (in1 f in2^T)) out2``.

    This frame-diagonal form covers every paraproduct ``A_i(b, .)``, ``W(b, .)``,
    the one-parameter paraproducts and the boundary operators.  Its adjoint has
    the same form with input and output frames swapped.
    """

    def __init__(self, depth, out1, out2, coeff, in1, in2, descriptor="tensor"):
        super().__init__(depth, descriptor)
        self.out1, self.out2 = np.asarray(out1), np.asarray(out2)
        self.in1, self.in2 = np.asarray(in1), np.asarray(in2)
        self.coeff = np.asarray(coeff, dtype=float)

    def apply(self, f):
        return self.out1.T @ (self.coeff * (self.in1 @ f @ self.in2.T)) @ self.out2

    def adjoint(self):
        return TensorOperator(self.depth, self.in1, self.in2, self.coeff, self.out1, self.out2,
                              ("adjoint", self.descriptor))


class CoefficientOperator(Operator):
    """A linear map given by a matrix on the flattened extended Haar coefficients."""

    def __init__(self, depth, transfer, descriptor="coefficients"):
        super().__init__(depth, descriptor)
        self.transfer = transfer

    def apply(self, f):
        from .dyadic import frames
        F = frames(self.depth)
        n = F.n
        c = (F.full @ f @ F.full.T / n**2).reshape(f.shape[:-2] + (n * n,))
        out = (c @ self.transfer.T).reshape(f.shape)
        return F.full.T @ out @ F.full

    def adjoint(self):
        return CoefficientOperator(self.depth, self.transfer.T, ("adjoint", self.descriptor))


class DenseOperator(Operator):
    """An explicit ``N^2 x N^2`` matrix acting on row-major flattened cell values."""

    def __init__(self, matrix, descriptor="dense"):
        matrix = np.asarray(matrix, dtype=float)
        m = matrix.shape[0]
        n = int(round(m**0.5))
        if matrix.shape != (m, m) or n * n != m:
            raise ValueError("dense operator needs a square N^2 x N^2 matrix")
        super().__init__(n.bit_length() - 1, descriptor)
        self.matrix = matrix

    def apply(self, f):
        flat = f.reshape(f.shape[:-2] + (-1,))
        return (flat @ self.matrix.T).reshape(f.shape)

    def adjoint(self):
        return DenseOperator(self.matrix.T, ("adjoint", self.descriptor))


class Composition(Operator):
    """``ops[0] o ops[1] o ...`` (the last factor is applied first)."""

    def __init__(self, ops):
        depths = {op.depth for op in ops}
        if len(depths) != 1:
            raise DepthMismatchError("composing operators of different depths")
        super().__init__(depths.pop(), ("compose",) + tuple(op.descriptor for op in ops))
        self.ops = tuple(ops)
        axes = {op.axis for op in ops}
        if len(axes) == 1:
            self.axis = axes.pop()

    def apply(self, f):
        for op in reversed(self.ops):
            f = op.apply(f)
        return f

    def adjoint(self):
        return Composition([op.adjoint() for op in reversed(self.ops)])


class LinearCombination(Operator):
    def __init__(self, terms):
        terms = [(float(c), op) for c, op in terms]
        depths = {op.depth for _, op in terms}
        if len(depths) != 1:
            raise DepthMismatchError("combining operators of different depths")
        super().__init__(depths.pop(), ("sum",) + tuple((c, op.descriptor) for c, op in terms))
        self.terms = terms

    def apply(self, f):
        out = np.zeros(np.shape(f))
        for c, op in self.terms:
            out = out + c * op.apply(f)
        return out

    def adjoint(self):
        return LinearCombination([(c, op.adjoint()) for c, op in self.terms])


def compose(*ops: Operator) -> Operator:
    """Composition applied right to left: ``compose(T, U)(f) = T(U(f))``."""
    flat = []
    for op in ops:
        flat.extend(op.ops if isinstance(op, Composition) else [op])
    return Composition(flat)


def adjoint(T: Operator) -> Operator:
    return T.adjoint()


def assemble_matrix(T: Operator, chunk: int = 1024) -> np.ndarray:
    """Dense ``N^2 x N^2`` matrix of ``T`` on row-major flattened cell values."""
    n = 2**T.depth
    m = n * n
    if m > MAX_ASSEMBLY_CELLS:
        raise ValueError(f"refusing to assemble a {m} x {m} matrix (4^L > {MAX_ASSEMBLY_CELLS})")
    out = np.empty((m, m))
    for start in range(0, m, chunk):
        stop = min(m, start + chunk)
        basis = np.zeros((stop - start, m))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        cols = T.apply(basis.reshape(-1, n, n)).reshape(stop - start, m)
        out[:, start:stop] = cols.T
    return out


# -- norms --------------------------------------------------------------------------


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class NormEstimate:
    """An operator norm value with its provenance.

    ``kind`` is ``certified_norm`` for the p = 2 power iteration (``value`` is the
    converged estimate, ``lower_bound`` the Rayleigh-quotient value, never above
    the true norm) and ``lower_estimate`` for the search used at other exponents.
    """

    value: float
    kind: str
    lower_bound: float
    residual: float = 0.0
    iterations: int = 0
    squarings: int = 0
    extra: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _weight_values(w, depth):
    if w is None:
        return np.ones((2**depth, 2**depth))
    values = getattr(w, "values", w)
    values = np.asarray(values, dtype=float)
    if depth_of(values) != depth:
        raise DepthMismatchError("weight depth differs from operator depth")
    return values


def weighted_matrix(T: Operator, mu=None, lam=None) -> np.ndarray:
    """``D_lam^{1/2} M D_mu^{-1/2}`` with ``D_w`` the diagonal of cell weights times cell area."""
    M = assemble_matrix(T)
    area = 4.0**-T.depth
    dl = np.sqrt(_weight_values(lam, T.depth).ravel() * area)
    dm = np.sqrt(_weight_values(mu, T.depth).ravel() * area)
    return dl[:, None] * M / dm[None, :]


def power_iteration(gram: np.ndarray, seed: int = 0, tol: float = 1e-8, max_iter: int = 5000,
                    max_squarings: int = 16):
    """Largest eigenvalue of a symmetric positive semidefinite matrix.

    Power iteration with an a-posteriori stopping rule: with successive changes
    ``d_k`` of the Rayleigh quotient and observed contraction ``r = d_k / d_{k-1}``,
    the remaining error is estimated by ``d_k r / (1 - r)``.  When the contraction
    is poor the iterated matrix is squared, which squares the gap ratio.
    Returns ``(rayleigh, residual, iterations, squarings)``; ``rayleigh`` is the
    Rayleigh quotient of ``gram`` itself and so never exceeds the top eigenvalue.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    work = gram
    total = 0
    squarings = 0
    while True:
        prev, prev_d = None, None
        for it in range(max_iter):
            w = work @ v
            nw = np.linalg.norm(w)
            total += 1
            if nw == 0.0:
                return 0.0, 0.0, total, squarings
            v = w / nw
            rho = float(v @ gram @ v)
            if prev is not None:
                d = abs(rho - prev)
                if d <= 1e-15 * abs(rho):
                    break
                if prev_d is not None and prev_d > 0:
                    r = d / prev_d
                    if r < 1 and d * r / (1 - r) <= 1e-2 * tol * abs(rho):
                        break
                    if it >= 30 and r > 0.9 and squarings < max_squarings:
                        it = -1
                        break
                prev_d = d
            prev = rho
        else:
            it = -1
        if it >= 0:
            gv = gram @ v
            return rho, float(np.linalg.norm(gv - rho * v)), total, squarings
        if squarings >= max_squarings:
            gv = gram @ v
            raise NonConvergenceError("power iteration did not converge",
                                      float(np.linalg.norm(gv - rho * v)))
        work = work @ work
        work = work / max(np.abs(work).max(), 1e-300)
        squarings += 1


def operator_norm_p2(T: Operator, mu=None, lam=None, seed: int = 0, tol: float = 1e-8,
                     max_iter: int = 2000) -> NormEstimate:
    """``||T||_{L^2(mu) -> L^2(lam)}`` by power iteration on the weighted normal matrix."""
    A = weighted_matrix(T, mu, lam)
    gram = A.T @ A
    rho, residual, iters, squarings = power_iteration(gram, seed=seed, tol=tol, max_iter=max_iter)
    sigma = max(rho, 0.0) ** 0.5
    logger.debug("power iteration: sigma=%.12g after %d steps, %d squarings", sigma, iters, squarings)
    return NormEstimate(sigma, "certified_norm", sigma, residual, iters, squarings)


def operator_norm_svd(T: Operator, mu=None, lam=None) -> float:
    """Assembled-matrix oracle: largest singular value via LAPACK."""
    return float(np.linalg.norm(weighted_matrix(T, mu, lam), 2))


def _lp(f, w, p, area):
    return float((np.sum(np.abs(f) ** p * w) * area) ** (1.0 / p))


def operator_norm_lower(T: Operator, mu=None, lam=None, p: float = 2.0, budget: int = 200,
                        seed: int = 0, restarts: int = 4) -> NormEstimate:
    """Lower estimate of ``||T||_{L^p(mu) -> L^p(lam)}``.

    Seeded random starts followed by normalized gradient ascent on
    ``log ||Tf||_{L^p(lam)} - log ||f||_{L^p(mu)}``; ``budget`` caps the total
    number of ratio evaluations.  The result is a ratio attained by some ``f``.
    """
    n = 2**T.depth
    area = 1.0 / (n * n)
    wm = _weight_values(mu, T.depth)
    wl = _weight_values(lam, T.depth)
    Tadj = T.adjoint()
    rng = np.random.default_rng(seed)

    def ratio(f):
        return _lp(T.apply(f), wl, p, area) / _lp(f, wm, p, area)

    evals = 0
    best, best_f = 0.0, None
    per_start = max(2, budget // max(1, restarts))
    while evals < budget:
        f = rng.standard_normal((n, n))
        r = ratio(f)
        evals += 1
        used = 1
        step = 0.5
        while used < per_start and evals < budget and step > 1e-8:
            tf = T.apply(f)
            num = np.sum(np.abs(tf) ** p * wl)
            den = np.sum(np.abs(f) ** p * wm)
            if num == 0.0:
                break
            grad = (Tadj.apply(np.abs(tf) ** (p - 1) * np.sign(tf) * wl) / num
                    - np.abs(f) ** (p - 1) * np.sign(f) * wm / den)
            gn = np.linalg.norm(grad)
            if gn == 0.0:
                break
            cand = f + step * np.linalg.norm(f) * grad / gn
            rc = ratio(cand)
            evals += 1
            used += 1
            if rc > r:
                f, r = cand, rc
                step *= 1.5
            else:
                step *= 0.5
        if r > best:
            best, best_f = r, f
    return NormEstimate(best, "lower_estimate", best, iterations=evals, extra={"argmax": best_f})
