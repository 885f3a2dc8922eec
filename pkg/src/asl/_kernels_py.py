"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and semantics; floating reductions may differ from the
compiled versions in the last bits because numpy sums pairwise.
"""

import numpy as np

BIG = 1e20


def _envelope_1d(f):
    # Felzenszwalb-Huttenlocher lower envelope of parabolas (i - q)^2 + f[q]
    n = len(f)
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    z[0] = -np.inf
    z[1] = np.inf
    fl = f.tolist()
    for q in range(1, n):
        s = ((fl[q] + q * q) - (fl[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((fl[q] + q * q) - (fl[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    out = np.empty(n)
    k = 0
    for i in range(n):
        while z[k + 1] < i:
            k += 1
        out[i] = (i - v[k]) ** 2 + fl[v[k]]
    return out


def _column_distance_sq(feature):
    # first pass: exact 1D distance to the nearest feature along axis 0
    nx, ny = feature.shape
    idx = np.arange(nx)[:, None] * np.ones((1, ny), dtype=np.int64)
    last = np.where(feature, idx, -(10 ** 9))
    last = np.maximum.accumulate(last, axis=0)
    nxt = np.where(feature, idx, 10 ** 9)
    nxt = np.minimum.accumulate(nxt[::-1], axis=0)[::-1]
    d = np.minimum(idx - last, nxt - idx).astype(np.float64)
    g = d * d
    g[d >= 10 ** 8] = BIG
    return g


def edt_sq(feature):
    """Squared Euclidean distance from every pixel to the nearest feature pixel."""
    feature = np.asarray(feature, dtype=bool)
    g = _column_distance_sq(feature)
    out = np.empty_like(g)
    for i in range(g.shape[0]):
        out[i] = _envelope_1d(g[i])
    return out


def block_oscillation(values, side):
    """Per-block mean and mean absolute deviation over ``side``-cell blocks."""
    nx, ny = values.shape
    bx, by = nx // side, ny // side
    blocks = values[: bx * side, : by * side].reshape(bx, side, by, side)
    means = blocks.mean(axis=(1, 3))
    osc = np.abs(blocks - means[:, None, :, None]).mean(axis=(1, 3))
    return means, osc


def bilinear_sample(values, length, xs, ys):
    """Periodic bilinear interpolation of grid samples at (xs, ys)."""
    n = values.shape[0]
    h = length / n
    u = np.asarray(xs) / h
    w = np.asarray(ys) / h
    fx = np.floor(u)
    fy = np.floor(w)
    u = u - fx
    w = w - fy
    i0 = fx.astype(np.int64) % n
    j0 = fy.astype(np.int64) % n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    # difference form: exact on constants
    a = values[i0, j0] + u * (values[i1, j0] - values[i0, j0])
    b = values[i0, j1] + u * (values[i1, j1] - values[i0, j1])
    return a + w * (b - a)


def nearest_cubes(targets, pool):
    """For each target cube (level, ax, ay) the index of the closest pool cube
    whose level is at least the target's. Ties in the gap distance go to the
    nearer center, then to the lexicographically smallest (level, ax, ay).
    -1 when no pool cube is large enough."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1, 3)
    pool = np.asarray(pool, dtype=np.int64).reshape(-1, 3)
    out = np.full(len(targets), -1, dtype=np.int64)
    if len(pool) == 0:
        return out
    # lexicographic (level, ax, ay) rank of each pool cube for tie-breaking
    order = np.lexsort((pool[:, 2], pool[:, 1], pool[:, 0]))
    rank = np.empty(len(pool), dtype=np.int64)
    rank[order] = np.arange(len(pool))
    p_lo = pool[:, 1:]
    p_hi = p_lo + (1 << pool[:, 0])[:, None]
    for a, (lt, ax, ay) in enumerate(targets):
        ok = pool[:, 0] >= lt
        if not ok.any():
            continue
        s_lo = np.array([ax, ay])
        s_hi = s_lo + (1 << lt)
        gap = np.maximum(np.maximum(p_lo - s_hi, s_lo - p_hi), 0)
        d2 = (gap * gap).sum(axis=1)
        off = (p_lo + p_hi) - (s_lo + s_hi)
        c2 = (off * off).sum(axis=1)
        cand = np.flatnonzero(ok)
        pick = np.lexsort((rank[cand], c2[cand], d2[cand]))[0]
        out[a] = cand[pick]
    return out
