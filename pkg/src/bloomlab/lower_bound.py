"""Median-method lower bound: partner rectangles, the Gamma functional and its proof steps.

For a rectangle ``R`` the partner ``R~`` is a same-size translate at distance
comparable to the side lengths on which ``sigma K(x, y) >= c / |R|`` for all
``x in R~``, ``y in R``.  Integrals over ``R`` are cell-centre quadratures;
``R~`` is disjoint from ``R``, so the kernel is never singular there.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicInterval, DyadicRectangle, depth_of, rectangles
from .operators import DenseOperator
from .weights import Weight, _values, ap_characteristic, bloom_weight, bmo_little

HOLDER_SLACK = 1e-12
# translate directions in search order; ties go to the earlier one
DIRECTIONS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


class DomainError(ValueError):
    """No admissible partner or rectangle exists for the request."""


class ProofStepFailure(AssertionError):
    """An unconditional inequality of the lower-bound argument failed; always a bug."""


@dataclass(frozen=True)
class KernelSpec:
    """``product_hilbert`` or ``product_riesz`` with ``(i, j) = (1, 1)``.

    With one dimension per parameter both are ``s / ((x1 - y1)(x2 - y2))``.
    """

    kind: str = "product_hilbert"
    sign: float = 1.0
    ij: tuple = (1, 1)

    def __post_init__(self):
        if self.kind not in ("product_hilbert", "product_riesz"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "product_riesz" and tuple(self.ij) != (1, 1):
            raise ValueError("with n = m = 1 only the (1, 1) Riesz kernel exists")
        if self.sign not in (1.0, -1.0):
            raise ValueError("sign must be +1 or -1")


def kernel_eval(K: KernelSpec, x, y):
    """``K(x, y)``; arrays broadcast over leading axes with the point in the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d1 = x[..., 0] - y[..., 0]
    d2 = x[..., 1] - y[..., 1]
    if np.any(d1 == 0) or np.any(d2 == 0):
        raise DomainError("kernel evaluated on a singular configuration (x1 = y1 or x2 = y2)")
    out = K.sign / (d1 * d2)
    return float(out) if out.ndim == 0 else out


def cell_centres(depth: int, R: DyadicRectangle | None = None) -> np.ndarray:
    """Centres of the finest cells of ``R`` (default the unit square), shape ``(m1, m2, 2)``."""
    n = 2**depth
    if R is None:
        R = DyadicRectangle(DyadicInterval(0, 0), DyadicInterval(0, 0))
    si, sj = R.cells(depth)
    c1 = (np.arange(si.start, si.stop) + 0.5) / n
    c2 = (np.arange(sj.start, sj.stop) + 0.5) / n
    return np.stack(np.meshgrid(c1, c2, indexing="ij"), axis=-1)


def nondegeneracy_witness(K: KernelSpec, y, r1: float, r2: float, depth: int):
    """Best grid point ``x`` with ``|x_i - y_i| > r_i``; returns ``(x, |K(x,y)| r1 r2)``."""
    pts = cell_centres(depth).reshape(-1, 2)
    y = np.asarray(y, dtype=float)
    ok = (np.abs(pts[:, 0] - y[0]) > r1) & (np.abs(pts[:, 1] - y[1]) > r2)
    if not ok.any():
        raise DomainError("no grid point is far enough from y")
    vals = np.abs(kernel_eval(K, pts[ok], y[None, :]))
    i = int(np.argmax(vals))
    return pts[ok][i], float(vals[i] * r1 * r2)


@dataclass(frozen=True)
class PartnerCertificate:
    base: DyadicRectangle
    partner: DyadicRectangle
    sigma: float
    c: float
    direction: tuple


def _kernel_block(K: KernelSpec, Rt: DyadicRectangle, R: DyadicRectangle, depth: int) -> np.ndarray:
    """``K(x_c, y_c)`` for cells ``x`` of ``Rt`` (rows) and ``y`` of ``R`` (columns)."""
    x = cell_centres(depth, Rt).reshape(-1, 2)
    y = cell_centres(depth, R).reshape(-1, 2)
    return kernel_eval(K, x[:, None, :], y[None, :, :])


def find_partner(R: DyadicRectangle, K: KernelSpec, depth: int) -> PartnerCertificate:
    """Best of the four diagonal translates of ``R`` by two side lengths.

    ``sigma`` and the translate maximize ``min sigma K`` over cell-centre pairs;
    ``c = min sigma K |R|``.
    """
    if R.ix.level > depth or R.jy.level > depth:
        raise DomainError(f"{R} is finer than the grid")
    best = None
    for d1, d2 in DIRECTIONS:
        I = R.ix.translate(2 * d1)
        J = R.jy.translate(2 * d2)
        if I is None or J is None:
            continue
        Rt = DyadicRectangle(I, J)
        block = _kernel_block(K, Rt, R, depth)
        for sigma in (1.0, -1.0):
            c = float((sigma * block).min() * R.area)
            if best is None or c > best.c:
                best = PartnerCertificate(R, Rt, sigma, c, (d1, d2))
    if best is None:
        raise DomainError(f"no translate of {R} by two side lengths fits in the unit square")
    return best


def admissible_rectangles(depth: int) -> list[DyadicRectangle]:
    """Rectangles with a partner: both side lengths at most 1/4."""
    return [R for R in rectangles(depth) if R.ix.level >= 2 and R.jy.level >= 2]


def median(b, R: DyadicRectangle) -> float:
    """Lower median of the cell values of ``b`` on ``R``.

    Cells of ``R`` carry equal mass, so the smaller middle value ``sorted[(m-1)//2]``
    satisfies both mass conditions.
    """
    b = np.asarray(b, dtype=float)
    si, sj = R.cells(depth_of(b))
    vals = np.sort(b[si, sj].ravel())
    return float(vals[(vals.size - 1) // 2])


def median_masses(b, R: DyadicRectangle, alpha: float):
    """``(|R & {b <= alpha}|, |R & {b >= alpha}|, |R|)``."""
    b = np.asarray(b, dtype=float)
    depth = depth_of(b)
    si, sj = R.cells(depth)
    v = b[si, sj]
    area = 4.0**-depth
    return float((v <= alpha).sum() * area), float((v >= alpha).sum() * area), R.area


# -- Gamma ----------------------------------------------------------------------------


@dataclass
class GammaWitness:
    R: DyadicRectangle
    partner: DyadicRectangle
    sigma: float
    A: tuple
    family: str
    threshold: float | None

    def to_dict(self):
        return {
            "R": repr(self.R), "partner": repr(self.partner), "sigma": self.sigma,
            "A": [list(c) for c in self.A], "family": self.family, "threshold": self.threshold,
        }


@dataclass
class LowerBoundReport:
    gamma: float
    bmo_value: float
    k: int
    p: float
    witness: GammaWitness | None
    degenerate: bool
    checks: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float | None:
        if self.degenerate:
            return None
        return self.bmo_value / self.gamma ** (1.0 / self.k)

    def summary(self) -> dict:
        return {
            "gamma": self.gamma, "bmo_value": self.bmo_value, "ratio": self.ratio,
            "k": self.k, "p": self.p, "degenerate": self.degenerate,
            "witness": self.witness.to_dict() if self.witness else None,
            "checks": self.checks,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(), **kw)


def _weak_columns(G, lam_cells, p, area):
    """Weak-L^p(lambda) norm of each column of ``G`` (rows are cells)."""
    a = np.abs(G)
    order = np.argsort(-a, axis=0, kind="stable")
    a = np.take_along_axis(a, order, axis=0)
    mass = np.cumsum(lam_cells[order], axis=0) * area
    return (a * mass ** (1.0 / p)).max(axis=0)


def _values_on(v, R, depth):
    si, sj = R.cells(depth)
    return v[si, sj].ravel()


def _cells_of(R, depth):
    si, sj = R.cells(depth)
    return [(i, j) for i in range(si.start, si.stop) for j in range(sj.start, sj.stop)]


def gamma_rectangle(K, b, mu, lam, k, p, cert: PartnerCertificate, n_random=0, rng=None):
    """Best ``(value, A-cells, family, threshold)`` for one rectangle and its partner."""
    b = np.asarray(b, dtype=float)
    depth = depth_of(b)
    area = 4.0**-depth
    R, Rt = cert.base, cert.partner
    by = _values_on(b, R, depth)
    bx = _values_on(b, Rt, depth)
    lam_x = _values_on(_values(lam, depth), Rt, depth)
    mu_R = float(_values_on(_values(mu, depth), R, depth).sum() * area)
    D = (bx[:, None] - by[None, :]) ** k * _kernel_block(K, Rt, R, depth) * area
    cells = _cells_of(R, depth)
    best = (0.0, (), "none", None)

    order = np.argsort(by, kind="stable")
    for family, ordr in (("sublevel", order), ("superlevel", order[::-1])):
        G = np.cumsum(D[:, ordr], axis=1)
        # a prefix is a threshold set only when it ends a tie group
        sb = by[ordr]
        keep = np.r_[sb[1:] != sb[:-1], True]
        vals = _weak_columns(G[:, keep], lam_x, p, area) * mu_R ** (-1.0 / p)
        if vals.size and vals.max() > best[0]:
            col = int(np.flatnonzero(keep)[np.argmax(vals)])
            A = tuple(sorted(cells[t] for t in ordr[:col + 1]))
            best = (float(vals.max()), A, family, float(by[ordr[col]]))
    if n_random:
        masks = rng.random((n_random, by.size)) < 0.5
        G = D @ masks.T.astype(float)
        vals = _weak_columns(G, lam_x, p, area) * mu_R ** (-1.0 / p)
        if vals.max() > best[0]:
            m = masks[int(np.argmax(vals))]
            best = (float(vals.max()), tuple(sorted(c for c, s in zip(cells, m) if s)), "random", None)
    return best


def gamma_value(K, b, mu, lam, k, p, R, partner, A) -> float:
    """Direct evaluation of the Gamma quotient for one ``(R, R~, A)`` (witness recomputation)."""
    b = np.asarray(b, dtype=float)
    depth = depth_of(b)
    n = 2**depth
    area = 4.0**-depth
    g = np.zeros((n, n))
    for (i, j) in _cells_of(partner, depth):
        x = ((i + 0.5) / n, (j + 0.5) / n)
        s = 0.0
        for (u, v) in A:
            s += (b[i, j] - b[u, v]) ** k * kernel_eval(K, x, ((u + 0.5) / n, (v + 0.5) / n)) * area
        g[i, j] = s
    from .weights import weak_lp_norm
    mu_R = float(_values_on(_values(mu, depth), R, depth).sum() * area)
    lw = Weight(_values(lam, depth))
    return weak_lp_norm(g, lw, p) * mu_R ** (-1.0 / p)


def gamma(K: KernelSpec, b, mu=None, lam=None, k: int = 1, p: float = 2.0,
          family: str = "levels", n_random: int = 0, seed=0) -> LowerBoundReport:
    """Gamma over admissible rectangles with their partners and the A-family.

    ``family="levels"`` uses the sublevel and superlevel sets of ``b`` on ``R``;
    ``n_random`` adds that many seeded random subsets per rectangle.
    """
    if k < 1 or p <= 1:
        raise ValueError("need k >= 1 and p > 1")
    if family != "levels":
        raise ValueError(f"unknown A-family {family!r}")
    b = np.asarray(b, dtype=float)
    depth = depth_of(b)
    rects = admissible_rectangles(depth)
    if not rects:
        raise DomainError(f"no admissible rectangle at depth {depth} (need L >= 2)")
    rng = np.random.default_rng(seed)
    best, wit = 0.0, None
    for R in rects:
        cert = find_partner(R, K, depth)
        v, A, fam, t = gamma_rectangle(K, b, mu, lam, k, p, cert, n_random, rng)
        if v > best:
            best, wit = v, GammaWitness(R, cert.partner, cert.sigma, A, fam, t)
    nu = _nu(mu, lam, p, depth)
    bmo = bmo_little(b, Weight(nu.values ** (1.0 / k))).norm_value
    return LowerBoundReport(best, bmo, k, p, wit, degenerate=(best == 0.0))


def _nu(mu, lam, p, depth):
    mu = mu if isinstance(mu, Weight) else Weight(_values(mu, depth))
    lam = lam if isinstance(lam, Weight) else Weight(_values(lam, depth))
    return bloom_weight(mu, lam, p)


# -- the proof steps ------------------------------------------------------------------


def holder_chain(nu_k, nu, lam, mu, p, ap_mu, k, R):
    """The three links of the chain on ``R`` as ``(lhs, rhs)`` pairs."""
    pp = p / (p - 1.0)
    a = nu_k.average(R) ** k * (nu ** -1.0).average(R)
    inv = (nu ** -1.0).average(R)
    mid = lam.average(R) ** (1 / p) * (mu ** (1 - pp)).average(R) ** (1 / pp)
    top = ap_mu ** (1 / p) * mu.average(R) ** (-1 / p) * lam.average(R) ** (1 / p)
    return [(1.0, a), (inv, mid), (mid, top)]


def check_lower_bound(K: KernelSpec, b, mu=None, lam=None, k: int = 1, p: float = 2.0,
                      n_random: int = 0, seed=0) -> LowerBoundReport:
    """Gamma, ``||b||_{bmo(nu^{1/k})}`` and the exact sub-steps of the argument.

    On every admissible ``R`` with partner ``R~`` and median ``alpha`` of ``b`` on ``R~``:
    the median mass conditions; ``(<(alpha-b)_+>_R)^k <= |R|^{-1} int_{R & b<=alpha} (b(x)-b(y))^k``
    for ``x in R~ & {b >= alpha}`` and its kernel version with the constant ``c``;
    the symmetric ``(b-alpha)_+`` statements; the constant-free consequence
    ``(<(alpha-b)_+>_R)^k <= Gamma_R mu(R)^{1/p} / (c lambda(R~ & {b>=alpha})^{1/p})``.
    The Hoelder chain is checked on every dyadic rectangle.
    """
    b = np.asarray(b, dtype=float)
    depth = depth_of(b)
    area = 4.0**-depth
    mu_w = Weight(_values(mu, depth)) if not isinstance(mu, Weight) else mu
    lam_w = Weight(_values(lam, depth)) if not isinstance(lam, Weight) else lam
    report = gamma(K, b, mu_w, lam_w, k, p, n_random=n_random, seed=seed)
    nu = bloom_weight(mu_w, lam_w, p)
    nu_k = Weight(nu.values ** (1.0 / k))
    ap_mu = ap_characteristic(mu_w, p)
    failures = []
    worst_chain = np.inf
    for R in rectangles(depth):
        for lhs, rhs in holder_chain(nu_k, nu, lam_w, mu_w, p, ap_mu, k, R):
            worst_chain = min(worst_chain, rhs - lhs)
            if lhs > rhs + HOLDER_SLACK * max(1.0, abs(rhs)):
                failures.append(f"Hoelder chain on {R}: {lhs!r} > {rhs!r}")
    worst_step = np.inf
    doubling = []
    for R in admissible_rectangles(depth):
        cert = find_partner(R, K, depth)
        Rt = cert.partner
        alpha = median(b, Rt)
        lo, hi, tot = median_masses(b, Rt, alpha)
        if min(lo, hi) < tot / 2:
            failures.append(f"median mass on {Rt}: {lo}, {hi} < {tot / 2}")
        by = _values_on(b, R, depth)
        bx = _values_on(b, Rt, depth)
        Kb = _kernel_block(K, Rt, R, depth)
        lam_x = _values_on(lam_w.values, Rt, depth)
        g_R = gamma_rectangle(K, b, mu_w, lam_w, k, p, cert)[0]
        for sgn in (1.0, -1.0):
            # sgn = 1: (alpha - b)_+ with A = R & {b <= alpha}; sgn = -1 the mirror image
            plus = np.maximum(sgn * (alpha - by), 0.0).mean()
            lhs = plus**k
            A = sgn * (by - alpha) <= 0
            X = sgn * (bx - alpha) >= 0
            diffs = (bx[X][:, None] - by[A][None, :]) ** k
            mid = (sgn**k) * diffs.sum(axis=1) * area / R.area
            ker = np.abs(cert.sigma * (diffs * Kb[np.ix_(X, A)]).sum(axis=1) * area) / cert.c
            for name, vals in (("averaging", mid), ("kernel", ker)):
                if vals.size:
                    gap = float((vals - lhs).min())
                    worst_step = min(worst_step, gap)
                    if gap < -HOLDER_SLACK * max(1.0, lhs):
                        failures.append(f"{name} step on {R}: {lhs!r} > {vals.min()!r}")
            lam_E = float(lam_x[X].sum() * area)
            if lam_E > 0:
                bound = g_R * mu_w.measure(R) ** (1 / p) / (cert.c * lam_E ** (1 / p))
                if lhs > bound * (1 + 1e-10) + 1e-300:
                    failures.append(f"Gamma bound on {R}: {lhs!r} > {bound!r}")
        doubling.append(lam_w.measure(R) / lam_w.measure(Rt))
    if failures:
        raise ProofStepFailure("\n".join(failures[:20]))
    report.checks = {
        "holder_min_slack": float(worst_chain),
        "step_min_slack": float(worst_step) if np.isfinite(worst_step) else None,
        "doubling_ratio_range": [float(min(doubling)), float(max(doubling))],
        "mu_ap": float(ap_mu),
        "lambda_ap": float(ap_characteristic(lam_w, p)),
    }
    return report


def t_plus_split(b, R: DyadicRectangle, alpha: float):
    """``(int_R (alpha-b)_+, int_R (b-alpha)_+, int_R |b-alpha|)``."""
    b = np.asarray(b, dtype=float)
    depth = depth_of(b)
    v = _values_on(b, R, depth)
    area = 4.0**-depth
    return (float(np.maximum(alpha - v, 0).sum() * area), float(np.maximum(v - alpha, 0).sum() * area),
            float(np.abs(v - alpha).sum() * area))


class KernelOperator(DenseOperator):
    """``T f(x) = sum_y K(x_c, y_c) f(y) |cell|`` with the singular rows/columns (x1 = y1 or x2 = y2) dropped."""

    def __init__(self, K: KernelSpec, depth: int):
        n = 2**depth
        c = cell_centres(depth).reshape(-1, 2)
        d1 = c[:, None, 0] - c[None, :, 0]
        d2 = c[:, None, 1] - c[None, :, 1]
        with np.errstate(divide="ignore"):
            M = np.where((d1 != 0) & (d2 != 0), K.sign / (d1 * d2), 0.0) / (n * n)
        super().__init__(M, ("kernel", K.kind))
        self.kernel = K
