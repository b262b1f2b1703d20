"""Slow, loop-based reference implementations built straight from the definitions.

Nothing here uses the frame matrices of the package; grids are (N, N) arrays
with x1 along axis 0.
"""
import itertools

import numpy as np


def cells_of(level, index, n):
    w = n >> level
    return slice(index * w, (index + 1) * w)


def active(depth):
    return [(l, i) for l in range(depth) for i in range(2**l)]


def haar_1d(level, index, n):
    """L^2[0,1)-normalized, positive on the left half."""
    h = np.zeros(n)
    w = n >> level
    h[index * w: index * w + w // 2] = 1.0
    h[index * w + w // 2: (index + 1) * w] = -1.0
    return h * 2 ** (level / 2)


def ind_1d(level, index, n):
    v = np.zeros(n)
    v[cells_of(level, index, n)] = 1.0
    return v


def inner(f, g):
    return float(np.sum(f * g)) / f.size


# -- conditional expectations and martingale differences -------------------------------


def E1(f, I):
    n = f.shape[0]
    out = np.zeros_like(f)
    s = cells_of(*I, n)
    out[s, :] = f[s, :].mean(axis=0, keepdims=True)
    return out


def E2(f, J):
    return E1(f.T, J).T


def D1(f, I):
    l, i = I
    return E1(f, (l + 1, 2 * i)) + E1(f, (l + 1, 2 * i + 1)) - E1(f, I)


def D2(f, J):
    return D1(f.T, J).T


def paraproduct(kind, b, f):
    n = b.shape[0]
    L = n.bit_length() - 1
    out = np.zeros_like(f)
    for I in active(L):
        for J in active(L):
            DDb = D1(D2(b, J), I)
            DDf = D1(D2(f, J), I)
            avg = E1(E2(f, J), I)
            if kind == "A1":
                out += DDb * DDf
            elif kind == "A2":
                out += DDb * E1(D2(f, J), I)
            elif kind == "A3":
                out += DDb * D1(E2(f, J), I)
            elif kind == "A4":
                out += DDb * avg
            elif kind == "A5":
                out += E1(D2(b, J), I) * DDf
            elif kind == "A6":
                out += E1(D2(b, J), I) * D1(E2(f, J), I)
            elif kind == "A7":
                out += D1(E2(b, J), I) * DDf
            elif kind == "A8":
                out += D1(E2(b, J), I) * E1(D2(f, J), I)
            elif kind == "W":
                out += E1(E2(b, J), I) * DDf
    return out


def one_parameter(kind, b, f):
    n = b.shape[0]
    L = n.bit_length() - 1
    out = np.zeros_like(f)
    for I in active(L):
        if kind == "a1_1":
            out += D1(b, I) * D1(f, I)
        elif kind == "a1_2":
            out += D1(b, I) * E1(f, I)
        elif kind == "w1":
            out += E1(b, I) * D1(f, I)
        elif kind == "a2_1":
            out += D2(b, I) * D2(f, I)
        elif kind == "a2_2":
            out += D2(b, I) * E2(f, I)
        elif kind == "w2":
            out += E2(b, I) * D2(f, I)
    return out


# -- operators ------------------------------------------------------------------------


def dense(apply, n):
    """Matrix of ``apply`` in the finest-cell basis (row-major flattening)."""
    M = np.zeros((n * n, n * n))
    for c in range(n * n):
        e = np.zeros(n * n)
        e[c] = 1.0
        M[:, c] = apply(e.reshape(n, n)).ravel()
    return M


def weighted_norm(M, mu, lam):
    n2 = M.shape[0]
    dl = np.sqrt(lam.ravel() / n2)
    dm = np.sqrt(mu.ravel() / n2)
    return float(np.linalg.svd(dl[:, None] * M / dm[None, :], compute_uv=False)[0])


def shift_1d(coeffs, n):
    """``g -> sum a <g, h_I1> h_I2`` as an (n, n) matrix; keys ``((lK,iK), (l1,i1), (l2,i2))``."""
    S = np.zeros((n, n))
    for (K, I1, I2), a in coeffs.items():
        S += a * np.outer(haar_1d(*I2, n), haar_1d(*I1, n)) / n
    return S


def paraproduct_1d(a, n, form):
    """``sum a_K <g>_K h_K`` (direct) or ``sum a_K <g, h_K> 1_K / |K|`` (dual)."""
    P = np.zeros((n, n))
    for (l, i), v in a.items():
        h = haar_1d(l, i, n)
        ind = ind_1d(l, i, n)
        if form == "direct":
            P += v * np.outer(h, ind / ind.sum())
        else:
            P += v * np.outer(ind * 2**l, h) / n
    return P


def square_function(f):
    n = f.shape[0]
    L = n.bit_length() - 1
    out = np.zeros_like(f)
    for I in active(L):
        for J in active(L):
            hIJ = np.outer(haar_1d(*I, n), haar_1d(*J, n))
            c = inner(f, hIJ)
            out += c**2 * np.outer(ind_1d(*I, n), ind_1d(*J, n)) * 2 ** (I[0] + J[0])
    return np.sqrt(out)


# -- weights and BMO ------------------------------------------------------------------


def all_rectangles(depth):
    for l1 in range(depth + 1):
        for i in range(2**l1):
            for l2 in range(depth + 1):
                for j in range(2**l2):
                    yield (l1, i), (l2, j)


def ap(w, p):
    n = w.shape[0]
    L = n.bit_length() - 1
    best = 0.0
    for I, J in all_rectangles(L):
        blk = w[cells_of(*I, n), cells_of(*J, n)]
        v = blk.mean() * (blk ** (-1.0 / (p - 1))).mean() ** (p - 1)
        best = max(best, v)
    return best


def weak_lp(f, w, p):
    """``sup_t t w({|f| > t})^{1/p}`` scanned over a fine t-grid around each value."""
    a = np.abs(f).ravel()
    wc = w.ravel() / a.size
    best = 0.0
    for v in np.unique(a):
        if v == 0:
            continue
        for t in (v * (1 - 1e-13), v):
            best = max(best, t * wc[a > t].sum() ** (1.0 / p))
    return best


def bmo_prod_bruteforce(b, nu):
    """L = 2 only: every one of the 65535 nonempty unions of finest cells."""
    n = b.shape[0]
    assert n == 4
    rects = []
    for I in active(2):
        for J in active(2):
            h = np.outer(haar_1d(*I, n), haar_1d(*J, n))
            m = np.zeros((n, n), bool)
            m[cells_of(*I, n), cells_of(*J, n)] = True
            nu_avg = nu[m].mean()
            rects.append((m.ravel(), inner(b, h) ** 2 / nu_avg))
    subsets = np.array(list(itertools.product([False, True], repeat=16)))[1:]
    num = np.zeros(len(subsets))
    for m, t in rects:
        num += np.all(subsets[:, m], axis=1) * t
    den = subsets @ (nu.ravel() / 16.0)
    return float(np.sqrt(num / den).max())


def little_bmo(b, nu):
    n = b.shape[0]
    L = n.bit_length() - 1
    best = 0.0
    for I, J in all_rectangles(L):
        s = (cells_of(*I, n), cells_of(*J, n))
        blk = b[s]
        best = max(best, np.abs(blk - blk.mean()).mean() / nu[s].mean())
    return best


def lower_median(values):
    """A value ``a`` with both mass conditions; the smallest one."""
    v = np.asarray(values).ravel()
    for a in np.sort(v):
        if (v <= a).sum() >= v.size / 2 and (v >= a).sum() >= v.size / 2:
            return float(a)
    raise AssertionError("no median")
