"""Bi- and one-parameter paraproducts and the finite-grid product decompositions.

On a depth-L grid the martingale sums run over active intervals only, and the
product identities pick up explicit boundary terms:

    bf = A_1 + ... + A_8 + W + P1 + P2 - P12            (bi-parameter)
    bf = a1_1 + a1_2 + w1 + P1                           (parameter 1)
    bf = a2_1 + a2_2 + w2 + P2                           (parameter 2)

where ``P1(b, f) = <b>_{[0,1),1} <f>_{[0,1),1}`` (averages in x1, functions of
x2), ``P2`` is the same in x2 and ``P12 = (int b)(int f)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import common_depth, depth_of, frames
from .operators import TensorOperator

BI_KINDS = ("A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "W")
ONE_KINDS = ("a1_1", "a1_2", "w1", "a2_1", "a2_2", "w2")
BOUNDARY_KINDS = ("P1", "P2", "P12")
KINDS = BI_KINDS + ONE_KINDS + BOUNDARY_KINDS


class IdentityFailure(AssertionError):
    """A product identity failed to close; always a bug."""


def _recipe(kind: str, depth: int):
    """``(b_left, b_right, out1, out2, in1, in2)`` for ``paraproduct(kind, b, .)``.

    The b-dependent coefficient is ``b_left @ b @ b_right.T``; the operator is
    ``f -> out1^T (coeff * (in1 f in2^T)) out2``.
    """
    F = frames(depth)
    eye = np.eye(F.n)
    P, A, H, U = F.pair, F.avg, F.haar, F.sq
    # Cd = (P, P); M1 = <<.,h_I>_1>_J = (P, A); M2 = <<.,h_J>_2>_I = (A, P); Av = (A, A)
    table = {
        "A1": ((P, P), (U, U), (P, P)),
        "A2": ((P, P), (H, U), (A, P)),
        "A3": ((P, P), (U, H), (P, A)),
        "A4": ((P, P), (H, H), (A, A)),
        "A5": ((A, P), (H, U), (P, P)),
        "A6": ((A, P), (H, H), (P, A)),
        "A7": ((P, A), (U, H), (P, P)),
        "A8": ((P, A), (H, H), (A, P)),
        "W": ((A, A), (H, H), (P, P)),
        "a1_1": ((P, eye), (U, eye), (P, eye)),
        "a1_2": ((P, eye), (H, eye), (A, eye)),
        "w1": ((A, eye), (H, eye), (P, eye)),
        "a2_1": ((eye, P), (eye, U), (eye, P)),
        "a2_2": ((eye, P), (eye, H), (eye, A)),
        "w2": ((eye, A), (eye, H), (eye, P)),
        "P1": ((F.mean, eye), (F.ones, eye), (F.mean, eye)),
        "P2": ((eye, F.mean), (eye, F.ones), (eye, F.mean)),
        "P12": ((F.mean, F.mean), (F.ones, F.ones), (F.mean, F.mean)),
    }
    try:
        (bl, br), (o1, o2), (i1, i2) = table[kind]
    except KeyError:
        raise ValueError(f"unknown paraproduct kind {kind!r}")
    return bl, br, o1, o2, i1, i2


def paraproduct_operator(kind: str, b) -> TensorOperator:
    """The linear map ``f -> kind(b, f)``."""
    b = np.asarray(b, dtype=float)
    depth = depth_of(b)
    bl, br, o1, o2, i1, i2 = _recipe(kind, depth)
    return TensorOperator(depth, o1, o2, bl @ b @ br.T, i1, i2, (kind, "b"))


def paraproduct(kind: str, b, f) -> np.ndarray:
    """Evaluate ``kind(b, f)``; ``f`` may carry leading batch axes."""
    common_depth(b, f)
    return paraproduct_operator(kind, b).apply(np.asarray(f, dtype=float))


_MODES = {
    "bi": (BI_KINDS + ("P1", "P2"), {"P12": -1.0}),
    "param1": (("a1_1", "a1_2", "w1", "P1"), {}),
    "param2": (("a2_1", "a2_2", "w2", "P2"), {}),
}


def boundary_correction(b, f) -> np.ndarray:
    """``P1(b, f) + P2(b, f) - P12(b, f)``, the part of ``bf`` the nine bi-parameter kinds miss."""
    return paraproduct("P1", b, f) + paraproduct("P2", b, f) - paraproduct("P12", b, f)


@dataclass
class ProductDecomposition:
    mode: str
    parts: dict
    signs: dict
    residual: float
    tolerance: float

    def total(self) -> np.ndarray:
        return sum(self.signs[k] * v for k, v in self.parts.items())


def decompose_product(b, f, mode: str = "bi", check: bool = True) -> ProductDecomposition:
    """Split ``bf`` into paraproducts plus boundary terms and measure the residual.

    Raises IdentityFailure when the sup-norm residual exceeds
    ``1e-12 * (1 + ||b||_inf ||f||_inf)``.
    """
    b = np.asarray(b, dtype=float)
    f = np.asarray(f, dtype=float)
    common_depth(b, f)
    try:
        kinds, negative = _MODES[mode]
    except KeyError:
        raise ValueError(f"unknown decomposition mode {mode!r}")
    parts = {k: paraproduct(k, b, f) for k in kinds}
    signs = {k: 1.0 for k in kinds}
    for k, s in negative.items():
        parts[k] = paraproduct(k, b, f)
        signs[k] = s
    total = sum(signs[k] * v for k, v in parts.items())
    residual = float(np.max(np.abs(b * f - total)))
    tol = 1e-12 * (1.0 + np.max(np.abs(b)) * np.max(np.abs(f)))
    out = ProductDecomposition(mode, parts, signs, residual, float(tol))
    if check and residual > tol:
        raise IdentityFailure(f"{mode} product decomposition residual {residual:.3e} > {tol:.3e}")
    return out
