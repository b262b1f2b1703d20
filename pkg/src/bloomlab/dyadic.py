"""Dyadic geometry on [0,1)^2, the extended tensor Haar system and martingale projections.

A grid function at depth ``L`` is a float array of shape ``(2**L, 2**L)``;
entry ``[i, j]`` is the value on the cell
``[i 2^-L, (i+1) 2^-L) x [j 2^-L, (j+1) 2^-L)``.  Axis 0 of the array is the
first parameter ``x1``, axis 1 the second parameter ``x2``.  Most routines also
accept a stack of grid functions with extra leading axes.

Haar functions follow the left-minus-right convention,
``h_I = |I|^{-1/2} (1_{I_left} - 1_{I_right})``.

The one-dimensional extended basis is indexed by *position*: position 0 is the
top slot (the constant function 1) and an active interval ``I`` (level <= L-1)
sits at position ``2**level + index``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Union

import numpy as np


class DepthMismatchError(ValueError):
    """Grid functions of different depths were combined."""


class InactiveIntervalError(ValueError):
    """A cancellative object was requested on an interval without representable children."""


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """The interval ``[index 2^-level, (index+1) 2^-level)``."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0 or not 0 <= self.index < 2**self.level:
            raise ValueError(f"invalid dyadic interval (level={self.level}, index={self.index})")

    @property
    def length(self) -> float:
        return 2.0**-self.level

    @property
    def left(self) -> float:
        return self.index * self.length

    @property
    def right(self) -> float:
        return (self.index + 1) * self.length

    @property
    def pos(self) -> int:
        """Position in the extended basis (only meaningful for active intervals)."""
        return 2**self.level + self.index

    @classmethod
    def from_pos(cls, pos: int) -> "DyadicInterval":
        if pos < 1:
            raise ValueError("position 0 is the top slot, not an interval")
        level = pos.bit_length() - 1
        return cls(level, pos - 2**level)

    def is_active(self, depth: int) -> bool:
        return self.level <= depth - 1

    def ancestor(self, k: int) -> "DyadicInterval":
        """``I^{(k)}``, the dyadic interval ``2**k`` times longer containing ``I``."""
        if k < 0 or k > self.level:
            raise ValueError(f"ancestor {k} of {self} does not exist")
        return DyadicInterval(self.level - k, self.index >> k)

    def parent(self) -> "DyadicInterval":
        return self.ancestor(1)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return (DyadicInterval(self.level + 1, 2 * self.index),
                DyadicInterval(self.level + 1, 2 * self.index + 1))

    def descendants(self, k: int) -> list["DyadicInterval"]:
        """All ``I`` with ``I^{(k)} = self``, left to right."""
        base = self.index << k
        return [DyadicInterval(self.level + k, base + t) for t in range(2**k)]

    def contains(self, other: "DyadicInterval") -> bool:
        return other.level >= self.level and other.index >> (other.level - self.level) == self.index

    def distance(self, other: "DyadicInterval") -> float:
        return max(0.0, max(self.left, other.left) - min(self.right, other.right))

    def cells(self, depth: int) -> slice:
        """Slice of finest cells covered by the interval at grid depth ``depth``."""
        if self.level > depth:
            raise ValueError(f"{self} is finer than the grid depth {depth}")
        width = 2 ** (depth - self.level)
        return slice(self.index * width, (self.index + 1) * width)

    def translate(self, steps: int) -> "DyadicInterval | None":
        """Same-level interval ``steps`` lengths to the right, or None if it leaves [0,1)."""
        idx = self.index + steps
        if 0 <= idx < 2**self.level:
            return DyadicInterval(self.level, idx)
        return None

    def __repr__(self):
        return f"[{self.index}/{2**self.level}, {self.index + 1}/{2**self.level})"


@dataclass(frozen=True, order=True)
class DyadicRectangle:
    ix: DyadicInterval
    jy: DyadicInterval

    @property
    def area(self) -> float:
        return self.ix.length * self.jy.length

    def contains(self, other: "DyadicRectangle") -> bool:
        return self.ix.contains(other.ix) and self.jy.contains(other.jy)

    def cells(self, depth: int) -> tuple[slice, slice]:
        return self.ix.cells(depth), self.jy.cells(depth)

    def is_active(self, depth: int) -> bool:
        return self.ix.is_active(depth) and self.jy.is_active(depth)

    def __repr__(self):
        return f"{self.ix!r}x{self.jy!r}"


class _Top:
    """The top-average slot of the extended Haar system (pairs with the constant 1)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TOP"

    def __reduce__(self):
        return (_Top, ())


TOP = _Top()
ExtendedIndex = Union[_Top, DyadicInterval]


def ext_pos(alpha: ExtendedIndex) -> int:
    return 0 if alpha is TOP else alpha.pos


def ext_index(pos: int) -> ExtendedIndex:
    return TOP if pos == 0 else DyadicInterval.from_pos(pos)


def intervals(depth: int, level: int | None = None) -> list[DyadicInterval]:
    """Dyadic intervals of one level, or all intervals of levels ``0..depth``."""
    if level is not None:
        return [DyadicInterval(level, i) for i in range(2**level)]
    return [DyadicInterval(l, i) for l in range(depth + 1) for i in range(2**l)]


def active_intervals(depth: int) -> list[DyadicInterval]:
    """Active intervals in position order (position ``p`` is entry ``p - 1``)."""
    return [DyadicInterval.from_pos(p) for p in range(1, 2**depth)]


def rectangles(depth: int, active: bool = False) -> list[DyadicRectangle]:
    ivs = active_intervals(depth) if active else intervals(depth)
    return [DyadicRectangle(i, j) for i in ivs for j in ivs]


def depth_of(f) -> int:
    """Validate the trailing grid shape of ``f`` and return its depth."""
    f = np.asarray(f)
    if f.ndim < 2 or f.shape[-1] != f.shape[-2]:
        raise ValueError(f"expected a square grid, got shape {f.shape}")
    n = f.shape[-1]
    depth = n.bit_length() - 1
    if n < 2 or 2**depth != n:
        raise ValueError(f"grid side {n} is not a power of two >= 2")
    return depth


def common_depth(*fs) -> int:
    depths = {depth_of(f) for f in fs}
    if len(depths) != 1:
        raise DepthMismatchError(f"grid functions have different depths {sorted(depths)}")
    return depths.pop()


def _depth_1d(p) -> int:
    n = np.asarray(p).shape[-1]
    depth = n.bit_length() - 1
    if n < 2 or 2**depth != n:
        raise ValueError(f"1D grid length {n} is not a power of two >= 2")
    return depth


class Frames(NamedTuple):
    """Per-depth matrices acting on cell values (row ``p - 1`` belongs to position ``p``).

    ``full`` is the extended Haar system including the top row;
    ``haar`` the cancellative Haar values, ``pair = haar / N`` the pairing
    functionals, ``avg`` the averaging functionals ``1_I / (N |I|)``,
    ``sq = 1_I / |I|`` (the pointwise square ``h_I^2``) and ``ind = 1_I``.
    """

    n: int
    full: np.ndarray
    haar: np.ndarray
    pair: np.ndarray
    avg: np.ndarray
    sq: np.ndarray
    ind: np.ndarray
    ones: np.ndarray
    mean: np.ndarray


@lru_cache(maxsize=None)
def frames(depth: int) -> Frames:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n = 2**depth
    ind = np.zeros((n - 1, n))
    haar = np.zeros((n - 1, n))
    for I in active_intervals(depth):
        s = I.cells(depth)
        w = s.stop - s.start
        ind[I.pos - 1, s] = 1.0
        haar[I.pos - 1, s.start:s.start + w // 2] = 1.0
        haar[I.pos - 1, s.start + w // 2:s.stop] = -1.0
        haar[I.pos - 1] *= I.length**-0.5
    lengths = ind.sum(axis=1) / n
    full = np.vstack([np.ones((1, n)), haar])
    out = Frames(
        n=n,
        full=full,
        haar=haar,
        pair=haar / n,
        avg=ind / (n * lengths[:, None]),
        sq=ind / lengths[:, None],
        ind=ind,
        ones=np.ones((1, n)),
        mean=np.full((1, n), 1.0 / n),
    )
    for a in out[1:]:
        a.setflags(write=False)
    return out


def haar(I: DyadicInterval, depth: int, kind: str = "cancellative") -> np.ndarray:
    """Values of ``h_I`` (or ``|I|^{-1/2} 1_I``) on the ``2**depth`` cells of [0,1)."""
    if I.level > depth:
        raise ValueError(f"{I} is finer than the grid depth {depth}")
    out = np.zeros(2**depth)
    s = I.cells(depth)
    if kind == "noncancellative":
        out[s] = I.length**-0.5
    elif kind == "cancellative":
        if not I.is_active(depth):
            raise InactiveIntervalError(f"{I} has no children at depth {depth}")
        mid = (s.start + s.stop) // 2
        out[s.start:mid] = I.length**-0.5
        out[mid:s.stop] = -(I.length**-0.5)
    else:
        raise ValueError(f"unknown Haar kind {kind!r}")
    return out


@dataclass(frozen=True)
class HaarSpectrum:
    """Coefficients against the extended tensor Haar system.

    ``coeffs[a, b]`` is the coefficient of ``e_a (x) e_b`` where ``a, b`` are
    positions (0 = top slot).
    """

    depth: int
    coeffs: np.ndarray

    def __getitem__(self, key):
        alpha, beta = key
        return float(self.coeffs[..., ext_pos(alpha), ext_pos(beta)])

    def doubly_cancellative(self) -> np.ndarray:
        """Coefficients ``<f, h_I (x) h_J>`` over active ``I, J`` (row/col ``pos - 1``)."""
        return self.coeffs[..., 1:, 1:]

    def energy(self) -> float:
        return float(np.sum(self.coeffs**2))


def haar_coefficients(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    F = frames(depth_of(f))
    return F.full @ f @ F.full.T / F.n**2


def analyze(f) -> HaarSpectrum:
    return HaarSpectrum(depth_of(f), haar_coefficients(f))


def synthesize(s) -> np.ndarray:
    coeffs = s.coeffs if isinstance(s, HaarSpectrum) else np.asarray(s, dtype=float)
    F = frames(depth_of(coeffs))
    return F.full.T @ coeffs @ F.full


def from_coefficients(depth: int, entries) -> np.ndarray:
    """Grid function with the given ``{(alpha, beta): value}`` extended coefficients."""
    n = 2**depth
    c = np.zeros((n, n))
    for (alpha, beta), v in entries.items():
        c[ext_pos(alpha), ext_pos(beta)] += v
    return synthesize(c)


# -- averages and projections -------------------------------------------------------


def _move(f, axis):
    # axis 1 / 2 of the paper is array axis -2 / -1
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    return np.moveaxis(np.asarray(f, dtype=float), -2 if axis == 1 else -1, -1)


def _unmove(g, axis):
    return np.moveaxis(g, -1, -2 if axis == 1 else -1)


def average_1d(p, I: DyadicInterval) -> np.ndarray:
    """``<p>_I`` along the last axis."""
    p = np.asarray(p, dtype=float)
    return p[..., I.cells(_depth_1d(p))].mean(axis=-1)


def expect_1d(p, I: DyadicInterval) -> np.ndarray:
    """``E_I p = <p>_I 1_I``."""
    p = np.asarray(p, dtype=float)
    s = I.cells(_depth_1d(p))
    out = np.zeros_like(p)
    out[..., s] = p[..., s].mean(axis=-1, keepdims=True)
    return out


def delta_1d(p, I: DyadicInterval) -> np.ndarray:
    """``Delta_I p = sum_{I' in ch(I)} (<p>_{I'} - <p>_I) 1_{I'}``."""
    p = np.asarray(p, dtype=float)
    depth = _depth_1d(p)
    if not I.is_active(depth):
        raise InactiveIntervalError(f"{I} has no children at depth {depth}")
    out = np.zeros_like(p)
    top = average_1d(p, I)
    for child in I.children():
        s = child.cells(depth)
        out[..., s] = (p[..., s].mean(axis=-1) - top)[..., None]
    return out


def expect(f, I: DyadicInterval, axis: int) -> np.ndarray:
    """``E_I^axis f``."""
    return _unmove(expect_1d(_move(f, axis), I), axis)


def delta(f, I: DyadicInterval, axis: int) -> np.ndarray:
    """``Delta_I^axis f``."""
    return _unmove(delta_1d(_move(f, axis), I), axis)


def delta_rect(f, I: DyadicInterval, J: DyadicInterval) -> np.ndarray:
    return delta(delta(f, J, 2), I, 1)


def expect_rect(f, I: DyadicInterval, J: DyadicInterval) -> np.ndarray:
    return expect(expect(f, J, 2), I, 1)


def block(f, K: DyadicInterval, i: int, axis: int) -> np.ndarray:
    """Martingale block ``Delta_{K,i}^axis f = sum_{I^{(i)} = K} Delta_I^axis f``."""
    depth = depth_of(f)
    if i < 0 or K.level + i > depth - 1:
        raise ValueError(f"block offset {i} below {K} leaves the active range at depth {depth}")
    out = np.zeros(np.shape(f))
    for I in K.descendants(i):
        out += delta(f, I, axis)
    return out


def block_rect(f, K: DyadicInterval, V: DyadicInterval, i: int, j: int) -> np.ndarray:
    """``Delta_{K x V}^{i,j} f``."""
    return block(block(f, V, j, 2), K, i, 1)


_PROJECTIONS = {
    "delta1": lambda f, I: delta(f, I, 1),
    "delta2": lambda f, J: delta(f, J, 2),
    "delta_rect": delta_rect,
    "expect1": lambda f, I: expect(f, I, 1),
    "expect2": lambda f, J: expect(f, J, 2),
    "expect_rect": expect_rect,
    "block1": lambda f, K, i: block(f, K, i, 1),
    "block2": lambda f, V, j: block(f, V, j, 2),
    "block_rect": block_rect,
}


def project(f, selector: str, *args) -> np.ndarray:
    """Apply a martingale projection by name, e.g. ``project(f, "delta_rect", I, J)``."""
    try:
        op = _PROJECTIONS[selector]
    except KeyError:
        raise ValueError(f"unknown selector {selector!r}; expected one of {sorted(_PROJECTIONS)}")
    return op(f, *args)


def partial_pairing(f, h, axis: int) -> np.ndarray:
    """``<f, h>_axis``: integrate out one parameter against the 1D function ``h``."""
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    if _depth_1d(h) != depth_of(f):
        raise DepthMismatchError("pairing function and grid function differ in depth")
    n = h.shape[-1]
    if axis == 1:
        return np.einsum("...ij,i->...j", f, h) / n
    if axis == 2:
        return np.einsum("...ij,j->...i", f, h) / n
    raise ValueError(f"axis must be 1 or 2, got {axis}")


def average(f, R: DyadicRectangle) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    si, sj = R.cells(depth_of(f))
    return f[..., si, sj].mean(axis=(-2, -1))


def level_averages(f, l1: int, l2: int) -> np.ndarray:
    """Averages of ``f`` over all rectangles of levels ``(l1, l2)``, shape ``(2**l1, 2**l2)``."""
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    return f.reshape(2**l1, n >> l1, 2**l2, n >> l2).mean(axis=(1, 3))


def telescoping_terms(p, I: DyadicInterval, k: int) -> np.ndarray:
    """``[<Delta_{I^{(j)}} p>_I for j = 1..k]``; they sum to ``<p>_I - <p>_{I^{(k)}}``."""
    return np.array([average_1d(delta_1d(p, I.ancestor(j)), I) for j in range(1, k + 1)])


def inner(f, g) -> float:
    """L^2([0,1)^2) inner product of two grid functions."""
    common_depth(f, g)
    return float(np.sum(np.asarray(f) * np.asarray(g)) / np.size(f))


def l2_norm(f) -> float:
    return inner(f, f) ** 0.5
