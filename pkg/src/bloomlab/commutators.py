"""Commutators and exact verification of the nested-commutator decompositions.

For operators ``U1`` (parameter 1) and ``U2`` (parameter 2)

    [U1, [b, U2]] f = U1(b U2 f) - U1 U2(b f) - b U2 U1 f + U2(b U1 f).

``verify_decomposition`` expands the products in these four terms with the
paraproduct identities, groups the pieces as in the standard proofs and checks
that the pieces add back up to the directly evaluated commutator.  Truncation
terms coming from ``P1``, ``P2`` and ``P12`` are kept separately.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dyadic import active_intervals, common_depth, frames
from .model import (E_SIGNS, ParaproductSpec, ShiftSpec, e_combination, e_term_shift,
                    make_paraproduct, make_shift, pipi_b)
from .operators import Composition, LinearCombination, Multiplication, Operator
from .paraproducts import IdentityFailure, paraproduct

CASES = ("shift_shift", "pi_pi", "mixed_shift_pi", "pi_pi_dual")
DECOMPOSITION_TOL = 1e-10


def commutator(b, T: Operator) -> Operator:
    """``[b, T] f = b T f - T(b f)``."""
    B = Multiplication(b, "b")
    return LinearCombination([(1.0, Composition([B, T])), (-1.0, Composition([T, B]))])


def nested_commutator(T1: Operator, b, T2: Operator) -> Operator:
    """``[T1, [b, T2]]`` as the four-term expansion ``I - II - III + IV``."""
    if T1.axis not in (1, 2) or T2.axis not in (1, 2) or T1.axis == T2.axis:
        raise ValueError(f"nested commutator needs operators on distinct axes, got {T1.axis} and {T2.axis}")
    B = Multiplication(b, "b")
    return LinearCombination([
        (1.0, Composition([T1, B, T2])),
        (-1.0, Composition([T1, T2, B])),
        (-1.0, Composition([B, T2, T1])),
        (1.0, Composition([T2, B, T1])),
    ])


def iterated_commutator(b, T: Operator, k: int) -> Operator:
    """``[b, [b, ... [b, T]]]`` with ``k`` copies of ``b``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = T
    for _ in range(k):
        out = commutator(b, out)
    return out


# -- reports ------------------------------------------------------------------------


@dataclass
class DecompositionReport:
    case: str
    parts: dict
    boundary_parts: dict
    direct: np.ndarray
    residual_sup: float
    scale: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.residual_sup <= self.tolerance

    def assembled(self) -> np.ndarray:
        return sum(self.parts.values()) + sum(self.boundary_parts.values())

    def summary(self) -> dict:
        sup = lambda g: float(np.max(np.abs(g)))
        return {
            "case": self.case,
            "parts": {k: sup(v) for k, v in self.parts.items()},
            "boundary_parts": {k: sup(v) for k, v in self.boundary_parts.items()},
            "residual": self.residual_sup,
            "tolerance": self.tolerance,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(), **kw)


class DecompositionFailure(IdentityFailure):
    def __init__(self, report: DecompositionReport):
        lines = [f"{report.case}: residual {report.residual_sup:.3e} > {report.tolerance:.3e}"]
        for k, v in report.summary()["parts"].items():
            lines.append(f"  {k}: sup {v:.3e}")
        super().__init__("\n".join(lines))
        self.report = report


def _bi_boundary(b, g):
    return paraproduct("P1", b, g) + paraproduct("P2", b, g) - paraproduct("P12", b, g)


def _finish(case, parts, boundary, direct, details, check):
    scale = 1.0 + max([np.max(np.abs(direct))] + [np.max(np.abs(v)) for v in parts.values()])
    report = DecompositionReport(case, parts, boundary, direct, 0.0, float(scale),
                                 DECOMPOSITION_TOL * scale, details)
    report.residual_sup = float(np.max(np.abs(direct - report.assembled())))
    if check and not report.ok:
        raise DecompositionFailure(report)
    return report


def _as_operator(U):
    if isinstance(U, ShiftSpec):
        return make_shift(U)
    if isinstance(U, ParaproductSpec):
        return make_paraproduct(U)
    raise TypeError(f"expected a ShiftSpec or ParaproductSpec, got {type(U).__name__}")


# -- shift / shift ------------------------------------------------------------------


def _shift_shift(b, s1: ShiftSpec, s2: ShiftSpec, f):
    S1, S2 = make_shift(s1), make_shift(s2)
    S2f, S1f = S2.apply(f), S1.apply(f)
    S21f = S2.apply(S1f)
    parts, details = {}, {}
    for i in range(1, 9):
        A = f"A{i}"
        t1 = S1.apply(paraproduct(A, b, S2f))
        t2 = S1.apply(S2.apply(paraproduct(A, b, f)))
        t3 = paraproduct(A, b, S21f)
        t4 = S2.apply(paraproduct(A, b, S1f))
        parts[f"bracket_{A}"] = t1 - t2 - t3 + t4
        if i in (5, 6):
            details[f"pair_{A}_I_III"] = t1 - t3
            details[f"pair_{A}_IV_II"] = t4 - t2
        elif i in (7, 8):
            details[f"pair_{A}_I_II"] = t1 - t2
            details[f"pair_{A}_IV_III"] = t4 - t3
    parts["E"] = e_combination(b, s1, s2).apply(f)
    # the W-terms, which the E-terms stand in for
    w = {
        (1, 2): S1.apply(paraproduct("W", b, S2f)),
        (1, 1): S1.apply(S2.apply(paraproduct("W", b, f))),
        (2, 2): paraproduct("W", b, S21f),
        (2, 1): S2.apply(paraproduct("W", b, S1f)),
    }
    for ij, v in w.items():
        details[f"W_{ij[0]}{ij[1]}_minus_E_term"] = v - e_term_shift(b, s1, s2, ij).apply(f)
    boundary = {
        "I": S1.apply(_bi_boundary(b, S2f)),
        "II": -S1.apply(S2.apply(_bi_boundary(b, f))),
        "III": -_bi_boundary(b, S21f),
        "IV": S2.apply(_bi_boundary(b, S1f)),
    }
    return parts, boundary, details


# -- paraproduct / paraproduct (direct forms) ----------------------------------------


def pipi_tails(b, p1: ParaproductSpec, p2: ParaproductSpec, f):
    """The three average-difference sums of the pi-pi split, evaluated from their definitions."""
    F = frames(p1.depth)
    aK, aV = p1.vector(), p2.vector()
    b = np.asarray(b, dtype=float)
    avg_KV = F.avg @ b @ F.avg.T                      # <b>_{KxV}
    b_V2 = b @ F.avg.T                               # <b>_{V,2}(x1), column V
    f_V2 = f @ F.avg.T
    b_K1 = F.avg @ b                                 # <b>_{K,1}(x2), row K
    f_K1 = F.avg @ f
    # t1[K,V] = <[<b>_{V,2} - <b>_{KxV}] <f>_{V,2}>_K
    t1 = F.avg @ (b_V2 * f_V2) - avg_KV * (F.avg @ f_V2)
    # t2[K,V] = <[<b>_{K,1} - <b>_{KxV}] <f>_{K,1}>_V
    t2 = (b_K1 * f_K1) @ F.avg.T - avg_KV * (f_K1 @ F.avg.T)
    # t3[K,V] = <[b - <b>_{KxV}] f>_{KxV}
    t3 = F.avg @ (b * f) @ F.avg.T - avg_KV * (F.avg @ f @ F.avg.T)
    synth = lambda c: F.haar.T @ (aK[:, None] * c * aV[None, :]) @ F.haar
    return synth(t1), synth(t2), -synth(t3)


def pipi_tail_formula(b, p1: ParaproductSpec, p2: ParaproductSpec, f):
    """Coefficient form of the summed tails, looping over ``K, V`` and ``I c K, J c V``.

    Each ``<h_I h_I>_K`` equals ``1/|K|``.  The sum carries an overall minus sign.
    """
    depth = p1.depth
    F = frames(depth)
    aK, aV = p1.vector(), p2.vector()
    B = F.pair @ b @ F.pair.T
    C = F.pair @ f @ F.pair.T
    act = active_intervals(depth)
    coeff = np.zeros((F.n - 1, F.n - 1))
    for K in act:
        for V in act:
            s = 0.0
            for I in act:
                if not K.contains(I):
                    continue
                for J in act:
                    if V.contains(J):
                        s += B[I.pos - 1, J.pos - 1] * C[I.pos - 1, J.pos - 1]
            coeff[K.pos - 1, V.pos - 1] = -aK[K.pos - 1] * aV[V.pos - 1] * s / (K.length * V.length)
    return F.haar.T @ coeff @ F.haar


def pi_a5_formula(b, p1: ParaproductSpec, f):
    """``sum_K a_K sum_{I c K, J} <h_I h_I>_K b_{IJ} f_{IJ} h_K (x) h_J h_J``."""
    depth = p1.depth
    F = frames(depth)
    aK = p1.vector()
    B = F.pair @ b @ F.pair.T
    C = F.pair @ f @ F.pair.T
    act = active_intervals(depth)
    coeff = np.zeros((F.n - 1, F.n - 1))
    for K in act:
        for I in act:
            if K.contains(I):
                coeff[K.pos - 1] += aK[K.pos - 1] / K.length * B[I.pos - 1] * C[I.pos - 1]
    return F.haar.T @ coeff @ F.sq


def pi_a5_average_form(b, p1: ParaproductSpec, f):
    """``sum_{K,J} a_K <[<b,h_J>_2 - <<b,h_J>_2>_K] <f,h_J>_2>_K h_K (x) h_J h_J``."""
    F = frames(p1.depth)
    aK = p1.vector()
    p = b @ F.pair.T                                 # <b, h_J>_2 (x1), column J
    q = f @ F.pair.T
    coeff = F.avg @ (p * q) - (F.avg @ p) * (F.avg @ q)
    return F.haar.T @ (aK[:, None] * coeff) @ F.sq


def _pi_pi(b, p1: ParaproductSpec, p2: ParaproductSpec, f):
    P1, P2 = make_paraproduct(p1), make_paraproduct(p2)
    P2f, P1f = P2.apply(f), P1.apply(f)
    P12f = P1.apply(P2f)
    parts, details = {}, {}
    for i in range(1, 5):
        parts[f"-A{i}(b,pi1pi2f)"] = -paraproduct(f"A{i}", b, P12f)
    for i in (1, 2):
        parts[f"pi1 a2_{i}(b,pi2f)"] = P1.apply(paraproduct(f"a2_{i}", b, P2f))
        parts[f"pi2 a1_{i}(b,pi1f)"] = P2.apply(paraproduct(f"a1_{i}", b, P1f))
    for i in range(5, 9):
        parts[f"-A{i}(b,pi2pi1f)"] = -paraproduct(f"A{i}", b, P12f)
    t1, t2, t3 = pipi_tails(b, p1, p2, f)
    parts["tail_V2"], parts["tail_K1"], parts["tail_KV"] = t1, t2, t3
    # the add-and-subtract steps
    pb = pipi_b(b, p1, p2).apply(f)
    details["I_w2_split"] = P1.apply(paraproduct("w2", b, P2f)) - (t1 + pb)
    details["II_split"] = P1.apply(P2.apply(b * f)) - (-t3 + pb)
    details["III_W"] = paraproduct("W", b, P12f) - pb
    details["IV_w1_split"] = P2.apply(paraproduct("w1", b, P1f)) - (t2 + pb)
    details["tail_formula_diff"] = (t1 + t2 + t3) - pipi_tail_formula(b, p1, p2, f)
    boundary = {
        "I": P1.apply(paraproduct("P2", b, P2f)),
        "III": -_bi_boundary(b, P12f),
        "IV": P2.apply(paraproduct("P1", b, P1f)),
    }
    return parts, boundary, details


# -- shift / paraproduct -------------------------------------------------------------


def mixed_last_term_formula(b, s1: ShiftSpec, p2: ParaproductSpec, f):
    """``sum a_V a_{K,(I_i)} sum_{J c V} <h_J h_J>_V [<<b,h_J>_2>_{I2} - <<b,h_J>_2>_{I1}] f_{I1 J} h_{I2} (x) h_V``."""
    depth = s1.depth
    F = frames(depth)
    aV = p2.vector()
    M2 = F.avg @ b @ F.pair.T                       # <<b,h_J>_2>_I
    C = F.pair @ f @ F.pair.T
    act = active_intervals(depth)
    coeff = np.zeros((F.n - 1, F.n - 1))
    for (K, I1, I2), a in s1.coeffs.items():
        r1, r2 = I1.pos - 1, I2.pos - 1
        for V in act:
            s = 0.0
            for J in act:
                if V.contains(J):
                    c = J.pos - 1
                    s += (M2[r2, c] - M2[r1, c]) * C[r1, c]
            coeff[r2, V.pos - 1] += a * aV[V.pos - 1] * s / V.length
    return F.haar.T @ coeff @ F.haar


def _mixed(b, s1: ShiftSpec, p2: ParaproductSpec, f):
    S1, P2 = make_shift(s1), make_paraproduct(p2)
    P2f, S1f = P2.apply(f), S1.apply(f)
    P2S1f = P2.apply(S1f)
    parts, details = {}, {}
    for i in range(1, 9):
        parts[f"S1 A{i}(b,pi2f)"] = S1.apply(paraproduct(f"A{i}", b, P2f))
        parts[f"-A{i}(b,pi2S1f)"] = -paraproduct(f"A{i}", b, P2S1f)
    for i in (1, 2):
        parts[f"pi2 a1_{i}(b,S1f)"] = P2.apply(paraproduct(f"a1_{i}", b, S1f))
        parts[f"-S1pi2 a1_{i}(b,f)"] = -S1.apply(P2.apply(paraproduct(f"a1_{i}", b, f)))
    parts["W_bracket"] = (S1.apply(paraproduct("W", b, P2f))
                          - S1.apply(P2.apply(paraproduct("w1", b, f)))
                          - paraproduct("W", b, P2S1f)
                          + P2.apply(paraproduct("w1", b, S1f)))
    details["W_bracket_formula_diff"] = parts["W_bracket"] - mixed_last_term_formula(b, s1, p2, f)
    boundary = {
        "I": S1.apply(_bi_boundary(b, P2f)),
        "II": -S1.apply(P2.apply(paraproduct("P1", b, f))),
        "III": -_bi_boundary(b, P2S1f),
        "IV": P2.apply(paraproduct("P1", b, S1f)),
    }
    return parts, boundary, details


# -- dual paraproduct / direct paraproduct ------------------------------------------


def dual_e_formula(b, p1: ParaproductSpec, p2: ParaproductSpec, f):
    """``sum_{K,V} sum_{I c K, J c V} a_K a_V <h_J h_J>_V |K|^{-1} b_{IJ} f_{KJ} h_I (x) h_V``."""
    depth = p1.depth
    F = frames(depth)
    aK, aV = p1.vector(), p2.vector()
    B = F.pair @ b @ F.pair.T
    C = F.pair @ f @ F.pair.T
    act = active_intervals(depth)
    coeff = np.zeros((F.n - 1, F.n - 1))
    for K in act:
        for V in act:
            a = aK[K.pos - 1] * aV[V.pos - 1] / (K.length * V.length)
            if a == 0.0:
                continue
            for I in act:
                if not K.contains(I):
                    continue
                for J in act:
                    if V.contains(J):
                        coeff[I.pos - 1, V.pos - 1] += a * B[I.pos - 1, J.pos - 1] * C[K.pos - 1, J.pos - 1]
    return F.haar.T @ coeff @ F.haar


def _pi_pi_dual(b, p1: ParaproductSpec, p2: ParaproductSpec, f):
    U1, U2 = make_paraproduct(p1), make_paraproduct(p2)
    U2f, U1f = U2.apply(f), U1.apply(f)
    U21f = U2.apply(U1f)
    parts, details = {}, {}
    for i in range(1, 9):
        parts[f"U1 A{i}(b,U2f)"] = U1.apply(paraproduct(f"A{i}", b, U2f))
    for i in (1, 2):
        parts[f"-U1U2 a1_{i}(b,f)"] = -U1.apply(U2.apply(paraproduct(f"a1_{i}", b, f)))
        parts[f"-a2_{i}(b,U2U1f)"] = -paraproduct(f"a2_{i}", b, U21f)
    parts["E1"] = U1.apply(paraproduct("W", b, U2f)) - U1.apply(U2.apply(paraproduct("w1", b, f)))
    parts["E2"] = -paraproduct("w2", b, U21f) + U2.apply(b * U1f)
    details["E1_plus_E2_formula_diff"] = parts["E1"] + parts["E2"] - dual_e_formula(b, p1, p2, f)
    boundary = {
        "I": U1.apply(_bi_boundary(b, U2f)),
        "II": -U1.apply(U2.apply(paraproduct("P1", b, f))),
        "III": -paraproduct("P2", b, U21f),
    }
    return parts, boundary, details


_CASE_CHECKS = {
    "shift_shift": (ShiftSpec, ShiftSpec, None, None, _shift_shift),
    "pi_pi": (ParaproductSpec, ParaproductSpec, "direct", "direct", _pi_pi),
    "mixed_shift_pi": (ShiftSpec, ParaproductSpec, None, "direct", _mixed),
    "pi_pi_dual": (ParaproductSpec, ParaproductSpec, "dual", "direct", _pi_pi_dual),
}


def verify_decomposition(case: str, b, U1, U2, f, check: bool = True) -> DecompositionReport:
    """Evaluate every named part of the ``case`` decomposition and compare with the commutator.

    ``U1`` acts in parameter 1 and ``U2`` in parameter 2.  The report's
    ``details`` holds auxiliary differences (pairings, add-and-subtract steps,
    coefficient formulas) that should vanish or are reported for inspection.
    """
    try:
        t1, t2, form1, form2, fn = _CASE_CHECKS[case]
    except KeyError:
        raise ValueError(f"unknown decomposition case {case!r}")
    if not isinstance(U1, t1) or not isinstance(U2, t2):
        raise TypeError(f"{case} needs ({t1.__name__}, {t2.__name__})")
    if U1.axis != 1 or U2.axis != 2:
        raise ValueError("U1 must act in parameter 1 and U2 in parameter 2")
    for U, form in ((U1, form1), (U2, form2)):
        if form is not None and U.form != form:
            raise ValueError(f"{case} needs a {form} paraproduct, got {U.form}")
    b = np.asarray(b, dtype=float)
    f = np.asarray(f, dtype=float)
    common_depth(b, f)
    if U1.depth != b.shape[-1].bit_length() - 1 or U2.depth != U1.depth:
        raise ValueError("operator depth differs from the grid depth")
    parts, boundary, details = fn(b, U1, U2, f)
    direct = nested_commutator(_as_operator(U1), b, _as_operator(U2)).apply(f)
    return _finish(case, parts, boundary, direct, details, check)


# -- coefficient-level checks ---------------------------------------------------------


def shift_a5_difference(b, s1: ShiftSpec, f) -> np.ndarray:
    """``S^1(A_5(b, f)) - A_5(b, S^1 f)`` evaluated through the operators."""
    S1 = make_shift(s1)
    return S1.apply(paraproduct("A5", b, f)) - paraproduct("A5", b, S1.apply(f))


def shift_a5_formula(b, s1: ShiftSpec, f) -> np.ndarray:
    """``sum a_{K,(I_i)} sum_J [<<b,h_J>_2>_{I1} - <<b,h_J>_2>_{I2}] f_{I1 J} h_{I2} (x) h_J h_J``."""
    F = frames(s1.depth)
    M2 = F.avg @ np.asarray(b, dtype=float) @ F.pair.T
    C = F.pair @ np.asarray(f, dtype=float) @ F.pair.T
    coeff = np.zeros((F.n - 1, F.n - 1))
    for (K, I1, I2), a in s1.coeffs.items():
        r1, r2 = I1.pos - 1, I2.pos - 1
        coeff[r2] += a * (M2[r1] - M2[r2]) * C[r1]
    return F.haar.T @ coeff @ F.sq


def e_telescoped_weights(b, s1: ShiftSpec, s2: ShiftSpec) -> np.ndarray:
    """Per-term E factor rebuilt from martingale differences of ``b``.

    For a term ``(K, I1, I2) x (V, J1, J2)`` this is the fourfold sum of
    ``<Delta_{I_i^{(k)} x J_j^{(v)}} b>_{I_i x J_j}`` over ``k`` and ``v``,
    signed as in ``E``, times ``a_t a_s``.
    """
    from .dyadic import average, delta_rect, DyadicRectangle
    b = np.asarray(b, dtype=float)
    k = s1.complexity
    v = s2.complexity
    keys1, keys2 = list(s1.coeffs), list(s2.coeffs)
    G = np.zeros((len(keys1), len(keys2)))
    cache = {}

    def tele(I, ki, J, vj):
        total = 0.0
        for a in range(1, ki + 1):
            for c in range(1, vj + 1):
                key = (I.ancestor(a), J.ancestor(c))
                if key not in cache:
                    cache[key] = delta_rect(b, *key)
                total += float(average(cache[key], DyadicRectangle(I, J)))
        return total

    for t, key1 in enumerate(keys1):
        Is = key1[1:]
        for s, key2 in enumerate(keys2):
            Js = key2[1:]
            val = 0.0
            for (i, j), sign in E_SIGNS.items():
                val += sign * tele(Is[i - 1], k[i - 1], Js[j - 1], v[j - 1])
            G[t, s] = val * s1.coeffs[key1] * s2.coeffs[key2]
    return G
