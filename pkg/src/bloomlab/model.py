"""One-parameter dyadic shifts and paraproducts, E-terms and auxiliary operators.

A shift of complexity ``(k1, k2)`` acting in parameter 1 is

    S^1 f = sum_{K, I1, I2} a_{K,(I1,I2)} h_{I2} (x) <f, h_{I1}>_1

with ``I1^{(k1)} = I2^{(k2)} = K``.  Paraproducts come in a direct form
``sum_K a_K h_K (x) <f>_{K,1}`` and a dual form
``sum_K a_K 1_K/|K| (x) <f, h_K>_1``.  Parameter-2 versions act on the
second axis in the same way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicInterval, active_intervals, depth_of, frames
from .operators import AxisOperator, Operator, TensorOperator
from .weights import bmo_sequence

NORMALIZATION_SLACK = 1e-12


class SpecError(ValueError):
    """A shift or paraproduct specification violates its invariants."""


# -- specs --------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftSpec:
    depth: int
    axis: int
    complexity: tuple
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in (1, 2):
            raise SpecError(f"axis must be 1 or 2, got {self.axis}")
        k1, k2 = self.complexity
        if k1 < 0 or k2 < 0:
            raise SpecError("complexities must be nonnegative")
        for (K, I1, I2), a in self.coeffs.items():
            if I1.level != K.level + k1 or I2.level != K.level + k2:
                raise SpecError(f"{(K, I1, I2)} does not have complexity {(k1, k2)}")
            if not (K.contains(I1) and K.contains(I2)):
                raise SpecError(f"{I1} or {I2} is not inside {K}")
            if not (I1.is_active(self.depth) and I2.is_active(self.depth)):
                raise SpecError(f"{I1} or {I2} is not active at depth {self.depth}")
            bound = (I1.length * I2.length) ** 0.5 / K.length
            if abs(a) > bound * (1 + NORMALIZATION_SLACK):
                raise SpecError(f"|a| = {abs(a):.6g} exceeds the normalization {bound:.6g}")

    def terms(self):
        """Arrays ``(rows_in, rows_out, a)`` indexed by frame row ``pos - 1``."""
        keys = list(self.coeffs)
        rin = np.array([k[1].pos - 1 for k in keys], dtype=int)
        rout = np.array([k[2].pos - 1 for k in keys], dtype=int)
        a = np.array([self.coeffs[k] for k in keys], dtype=float)
        return rin, rout, a

    def matrix(self) -> np.ndarray:
        F = frames(self.depth)
        A = np.zeros((F.n - 1, F.n - 1))
        rin, rout, a = self.terms()
        np.add.at(A, (rout, rin), a)
        return F.haar.T @ A @ F.pair


@dataclass(frozen=True)
class ParaproductSpec:
    depth: int
    axis: int
    form: str = "direct"
    abs_flag: bool = False
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in (1, 2):
            raise SpecError(f"axis must be 1 or 2, got {self.axis}")
        if self.form not in ("direct", "dual"):
            raise SpecError(f"form must be 'direct' or 'dual', got {self.form!r}")
        for K in self.coeffs:
            if not K.is_active(self.depth):
                raise SpecError(f"{K} is not active at depth {self.depth}")
        norm = bmo_sequence(self.coeffs)
        if norm > 1 + NORMALIZATION_SLACK:
            raise SpecError(f"sequence BMO norm {norm:.6g} exceeds 1")

    def vector(self) -> np.ndarray:
        a = np.zeros(2**self.depth - 1)
        for K, v in self.coeffs.items():
            a[K.pos - 1] = v
        return np.abs(a) if self.abs_flag else a

    def matrix(self) -> np.ndarray:
        F = frames(self.depth)
        a = self.vector()
        if self.form == "direct":
            return F.haar.T @ (a[:, None] * F.avg)
        return F.sq.T @ (a[:, None] * F.pair)


def make_shift(spec: ShiftSpec) -> AxisOperator:
    return AxisOperator(spec.matrix(), spec.axis, ("shift", spec.axis, tuple(spec.complexity)))


def make_paraproduct(spec: ParaproductSpec) -> AxisOperator:
    tag = "pi~" if spec.abs_flag else "pi"
    return AxisOperator(spec.matrix(), spec.axis, (tag, spec.axis, spec.form))


# -- generators ---------------------------------------------------------------------


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def shift_triples(depth: int, k1: int, k2: int):
    """All admissible ``(K, I1, I2)`` of complexity ``(k1, k2)`` at this depth."""
    out = []
    for K in active_intervals(depth):
        if K.level + max(k1, k2) > depth - 1:
            continue
        for I1 in K.descendants(k1):
            for I2 in K.descendants(k2):
                out.append((K, I1, I2))
    return out


def random_shift(depth: int, axis: int, k1: int, k2: int, seed=0, density: float = 1.0) -> ShiftSpec:
    """Coefficients of maximal allowed size with random signs.

    Each admissible triple is kept with probability ``density``.
    """
    rng = _rng(seed)
    triples = shift_triples(depth, k1, k2)
    if not triples:
        raise SpecError(f"no shift of complexity {(k1, k2)} fits at depth {depth}")
    signs = rng.choice([-1.0, 1.0], size=len(triples))
    keep = rng.random(len(triples)) < density
    coeffs = {}
    for (K, I1, I2), s, k in zip(triples, signs, keep):
        if k:
            coeffs[(K, I1, I2)] = s * (I1.length * I2.length) ** 0.5 / K.length
    return ShiftSpec(depth, axis, (k1, k2), coeffs)


def single_coefficient_shift(depth: int, axis: int, K: DyadicInterval, I1: DyadicInterval,
                             I2: DyadicInterval, a: float | None = None) -> ShiftSpec:
    """One-term shift; ``a`` defaults to the maximal allowed magnitude."""
    if a is None:
        a = (I1.length * I2.length) ** 0.5 / K.length
    return ShiftSpec(depth, axis, (I1.level - K.level, I2.level - K.level), {(K, I1, I2): a})


def random_paraproduct(depth: int, axis: int, form: str = "direct", seed=0,
                       abs_flag: bool = False) -> ParaproductSpec:
    """Gaussian coefficients on every active interval, scaled to sequence BMO norm 1."""
    rng = _rng(seed)
    Ks = active_intervals(depth)
    vals = rng.standard_normal(len(Ks))
    raw = dict(zip(Ks, vals))
    norm = bmo_sequence(raw)
    coeffs = {K: v / norm for K, v in raw.items()}
    # rounding can leave the norm a hair above 1
    norm = bmo_sequence(coeffs)
    if norm > 1:
        coeffs = {K: v / norm for K, v in coeffs.items()}
    return ParaproductSpec(depth, axis, form, abs_flag, coeffs)


# -- E-terms ------------------------------------------------------------------------


class PairedTermOperator(Operator):
    """``f -> sum_{t,s} G[t,s] <f, h_{in1[t]} (x) h_{in2[s]}> h_{out1[t]} (x) h_{out2[s]}``.

    The two index lists come from an axis-1 and an axis-2 family of terms; the
    weight matrix ``G`` couples them.  Shift compositions and their b-twisted
    versions all have this form.
    """

    def __init__(self, depth, in1, out1, in2, out2, G, descriptor="paired"):
        super().__init__(depth, descriptor)
        m = 2**depth - 1
        self.in1, self.out1 = np.asarray(in1, dtype=int), np.asarray(out1, dtype=int)
        self.in2, self.out2 = np.asarray(in2, dtype=int), np.asarray(out2, dtype=int)
        self.G = np.asarray(G, dtype=float)
        self._E1 = np.zeros((m, len(self.out1)))
        self._E1[self.out1, np.arange(len(self.out1))] = 1.0
        self._E2 = np.zeros((m, len(self.out2)))
        self._E2[self.out2, np.arange(len(self.out2))] = 1.0

    def apply(self, f):
        F = frames(self.depth)
        C = F.pair @ f @ F.pair.T
        X = self.G * C[..., self.in1, :][..., :, self.in2]
        return F.haar.T @ (self._E1 @ X @ self._E2.T) @ F.haar

    def adjoint(self):
        return PairedTermOperator(self.depth, self.out1, self.in1, self.out2, self.in2, self.G,
                                  ("adjoint", self.descriptor))


def _shift_pair(s1: ShiftSpec, s2: ShiftSpec):
    if s1.axis != 1 or s2.axis != 2:
        raise SpecError("E-terms need a parameter-1 shift and a parameter-2 shift")
    if s1.depth != s2.depth:
        raise SpecError("shift depths differ")
    return s1.terms(), s2.terms()


def e_term_weights(b, s1: ShiftSpec, s2: ShiftSpec, i: int, j: int) -> np.ndarray:
    """``G[t, s] = <b>_{I_i x J_j} a_t a_s`` for the term lists of ``s1, s2``."""
    (r1in, r1out, a1), (r2in, r2out, a2) = _shift_pair(s1, s2)
    F = frames(s1.depth)
    av = F.avg @ np.asarray(b, dtype=float) @ F.avg.T
    rows = (r1in, r1out)[i - 1]
    cols = (r2in, r2out)[j - 1]
    return av[np.ix_(rows, cols)] * a1[:, None] * a2[None, :]


def e_term_shift(b, s1: ShiftSpec, s2: ShiftSpec, which=(1, 1)) -> PairedTermOperator:
    """``(S^1 S^2)^{b,i,j}``: the composition with ``<b>_{I_i x J_j}`` inserted per term."""
    i, j = which
    if i not in (1, 2) or j not in (1, 2):
        raise ValueError(f"which must be in {{1,2}}^2, got {which}")
    b = np.asarray(b, dtype=float)
    if depth_of(b) != s1.depth:
        raise ValueError("b depth differs from the shift depth")
    (r1in, r1out, _), (r2in, r2out, _) = _shift_pair(s1, s2)
    G = e_term_weights(b, s1, s2, i, j)
    return PairedTermOperator(s1.depth, r1in, r1out, r2in, r2out, G, ("E", i, j))


E_SIGNS = {(1, 2): 1.0, (1, 1): -1.0, (2, 2): -1.0, (2, 1): 1.0}


def e_combination(b, s1: ShiftSpec, s2: ShiftSpec) -> PairedTermOperator:
    """``E = (S^1S^2)^{b,1,2} - (S^1S^2)^{b,1,1} - (S^1S^2)^{b,2,2} + (S^1S^2)^{b,2,1}``."""
    (r1in, r1out, _), (r2in, r2out, _) = _shift_pair(s1, s2)
    G = sum(s * e_term_weights(b, s1, s2, *ij) for ij, s in E_SIGNS.items())
    return PairedTermOperator(s1.depth, r1in, r1out, r2in, r2out, G, "E")


def pipi_b(b, p1: ParaproductSpec, p2: ParaproductSpec) -> TensorOperator:
    """``(pi^1 pi^2)^b f = sum <b>_{KxV} a_K a_V <f>_{KxV} h_K (x) h_V``."""
    if p1.axis != 1 or p2.axis != 2 or p1.form != "direct" or p2.form != "direct":
        raise SpecError("(pi^1 pi^2)^b needs direct paraproducts on axes 1 and 2")
    F = frames(p1.depth)
    b = np.asarray(b, dtype=float)
    coeff = p1.vector()[:, None] * (F.avg @ b @ F.avg.T) * p2.vector()[None, :]
    return TensorOperator(p1.depth, F.haar, F.haar, coeff, F.avg, F.avg, "pipi_b")


# -- square and maximal functions ----------------------------------------------------


def _square_1d(g, axis):
    """``(sum_I 1_I/|I| <g, h_I>^2)^{1/2}`` along one axis of a stack."""
    g = np.asarray(g, dtype=float)
    F = frames(g.shape[axis].bit_length() - 1)
    g = np.moveaxis(g, axis, -1)
    out = np.sqrt(((g @ F.pair.T) ** 2) @ F.sq)
    return np.moveaxis(out, -1, axis)


def _maximal_1d(g, axis):
    """Dyadic maximal function of ``|g|`` along one axis."""
    g = np.moveaxis(np.abs(np.asarray(g, dtype=float)), axis, -1)
    n = g.shape[-1]
    out = g.copy()
    for level in range(n.bit_length() - 1):
        w = n >> level
        avg = g.reshape(g.shape[:-1] + (2**level, w)).mean(axis=-1)
        out = np.maximum(out, np.repeat(avg, w, axis=-1))
    return np.moveaxis(out, -1, axis)


def aux_phi(f, axis: int = 1) -> np.ndarray:
    """``phi_S^1 f = sum_K h_K (x) S_{D^m}<f, h_K>_1``; ``axis=2`` is the mirror image."""
    f = np.asarray(f, dtype=float)
    F = frames(depth_of(f))
    if axis == 1:
        return F.haar.T @ _square_1d(F.pair @ f, -1)
    if axis == 2:
        return _square_1d(f @ F.pair.T, -2) @ F.haar
    raise ValueError(f"axis must be 1 or 2, got {axis}")


def square_function(kind: str, f) -> np.ndarray:
    """Pointwise ``S`` (bi-parameter), ``S1``, ``S2``, ``S1M`` or ``S2M``."""
    f = np.asarray(f, dtype=float)
    F = frames(depth_of(f))
    if kind == "S":
        C = F.pair @ f @ F.pair.T
        return np.sqrt(F.sq.T @ C**2 @ F.sq)
    if kind == "S1":
        return np.sqrt(F.sq.T @ (F.pair @ f) ** 2)
    if kind == "S2":
        return np.sqrt((f @ F.pair.T) ** 2 @ F.sq)
    if kind == "S1M":
        return np.sqrt(F.sq.T @ _maximal_1d(F.pair @ f, -1) ** 2)
    if kind == "S2M":
        return np.sqrt(_maximal_1d(f @ F.pair.T, -2) ** 2 @ F.sq)
    raise ValueError(f"unknown square function {kind!r}")


def maximal(kind: str, f) -> np.ndarray:
    """Dyadic maximal functions ``M`` (rectangles), ``M1`` and ``M2`` (one parameter)."""
    f = np.asarray(f, dtype=float)
    depth_of(f)
    if kind == "M1":
        return _maximal_1d(f, -2)
    if kind == "M2":
        return _maximal_1d(f, -1)
    if kind != "M":
        raise ValueError(f"unknown maximal function {kind!r}")
    a = np.abs(f)
    n = a.shape[-1]
    L = n.bit_length() - 1
    out = a.copy()
    for l1 in range(L + 1):
        for l2 in range(L + 1):
            w1, w2 = n >> l1, n >> l2
            avg = a.reshape(a.shape[:-2] + (2**l1, w1, 2**l2, w2)).mean(axis=(-3, -1))
            out = np.maximum(out, np.repeat(np.repeat(avg, w1, axis=-2), w2, axis=-1))
    return out
