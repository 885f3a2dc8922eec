"""Dyadic machinery on square rasters: maximal function, Calderon-Zygmund
decomposition, Whitney cubes of open sets, and the Jones BMO extension.

Raster conventions: a grid function is an ``n x n`` array (n a power of two)
whose entry ``[i, j]`` is the value on the unit cell ``[i, i+1] x [j, j+1]``.
Cubes are measured in cell units; integrals use the unit-square measure
(cell area ``1/n^2``) so norms do not depend on the raster size.
"""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np

from . import kernels
from .norms import dyadic_offsets

WHITNEY_LOWER = 2.0  # accept when  LOWER * diam(Q) <= dist(Q, boundary)
WHITNEY_UPPER = 8.0  # ... and dist < UPPER * diam(Q), implied by the quadtree


@dataclass(frozen=True, order=True)
class DyadicCube:
    """The cube ``[ax, ax + 2^level] x [ay, ay + 2^level]`` in cell units."""

    level: int
    ax: int
    ay: int

    def __post_init__(self):
        s = 1 << self.level
        if self.level < 0 or self.ax % s or self.ay % s:
            raise ValueError(f"anchor ({self.ax}, {self.ay}) is not on the level-{self.level} lattice")

    @property
    def side(self):
        return 1 << self.level

    @property
    def diam(self):
        return self.side * math.sqrt(2)

    @property
    def center(self):
        h = self.side / 2
        return (self.ax + h, self.ay + h)

    def cells(self):
        s = self.side
        return slice(self.ax, self.ax + s), slice(self.ay, self.ay + s)

    def dilate(self, lam):
        """Bounds ``(x0, x1, y0, y1)`` of ``lam Q``: same center, lam x side."""
        cx, cy = self.center
        r = lam * self.side / 2
        return (cx - r, cx + r, cy - r, cy + r)

    def contains(self, other):
        s, t = self.side, other.side
        return (self.ax <= other.ax and other.ax + t <= self.ax + s
                and self.ay <= other.ay and other.ay + t <= self.ay + s)

    def interiors_disjoint(self, other):
        s, t = self.side, other.side
        return (self.ax + s <= other.ax or other.ax + t <= self.ax
                or self.ay + s <= other.ay or other.ay + t <= self.ay)

    def parent(self):
        s = self.side * 2
        return DyadicCube(self.level + 1, self.ax - self.ax % s, self.ay - self.ay % s)


def containment_factor(inner, outer):
    """Smallest ``lam`` with ``inner`` contained in ``lam * outer``."""
    cx, cy = outer.center
    reach = max(abs(inner.ax - cx), abs(inner.ax + inner.side - cx),
                abs(inner.ay - cy), abs(inner.ay + inner.side - cy))
    return 2.0 * reach / outer.side


def cube_gap(a, b):
    """Euclidean distance between two closed cubes."""
    gx = max(0, max(a.ax, b.ax) - min(a.ax + a.side, b.ax + b.side))
    gy = max(0, max(a.ay, b.ay) - min(a.ay + a.side, b.ay + b.side))
    return math.hypot(gx, gy)


def _log2_size(n):
    if n < 2 or n & (n - 1):
        raise ValueError(f"raster size must be a power of two, got {n}")
    return n.bit_length() - 1


def _as_raster(f):
    a = np.asarray(f, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"grid function must be a square array, got shape {a.shape}")
    _log2_size(a.shape[0])
    if not np.isfinite(a).all():
        raise ValueError("grid function contains non-finite values")
    return a


def raster_lp(f, p, mask=None):
    """L^p norm under the unit-square measure, optionally restricted to a mask."""
    a = np.abs(np.asarray(f, dtype=np.float64))
    if mask is not None:
        a = np.where(mask, a, 0.0)
    top = float(a.max()) if a.size else 0.0
    if math.isinf(p):
        return top
    if top == 0.0:
        return 0.0
    return top * float(((a / top) ** p).sum() / a.size) ** (1.0 / p)


def _block_reduce(a, side, fn):
    n0, n1 = a.shape
    return fn(a.reshape(n0 // side, side, n1 // side, side), axis=(1, 3))


# -- maximal function and CZ ---------------------------------------------------

def dyadic_maximal(f, max_level=None):
    """``Mf(x) = max`` of ``|f|``-averages over anchored dyadic cubes containing x
    with side ``2^l``, ``l = 0..max_level`` (default: the whole raster)."""
    a = np.abs(_as_raster(f))
    n = a.shape[0]
    top = _log2_size(n)
    if max_level is None:
        max_level = top
    if not 0 <= max_level <= top:
        raise ValueError(f"max_level must lie in [0, {top}]")
    out = a.copy()
    avg = a
    for level in range(1, max_level + 1):
        avg = _block_reduce(avg, 2, np.mean)
        s = 1 << level
        out = np.maximum(out, np.kron(avg, np.ones((s, s))))
    return out


def shifted_maximal(f):
    """Maximal function over the anchored and one-third-shifted lattices, with
    the raster embedded in a zero background twice its size."""
    a = np.abs(_as_raster(f))
    n = a.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = a
    out = np.zeros_like(big)
    for ox, oy in dyadic_offsets(2 * n):
        shifted = np.roll(big, (-ox, -oy), axis=(0, 1))
        m = dyadic_maximal(shifted)
        out = np.maximum(out, np.roll(m, (ox, oy), axis=(0, 1)))
    return out[:n, :n]


@dataclass
class CZDecomposition:
    alpha: float
    good: np.ndarray
    bad: np.ndarray
    bad_cubes: list
    exceptional: np.ndarray  # union of bad cubes, {Mf > alpha}

    def check(self, f, p0=2.0):
        """Return the list of violated invariants (empty when all hold)."""
        f = np.asarray(f)
        errors = []
        if not np.array_equal(self.good + self.bad, f):
            errors.append("reassembly")
        if np.abs(self.good).max(initial=0.0) > self.alpha:
            errors.append("good part exceeds alpha")
        a = np.abs(f)
        covered = np.zeros(f.shape, dtype=np.int64)
        for q in self.bad_cubes:
            sl = q.cells()
            avg = a[sl].mean()
            if not (self.alpha < avg <= 4 * self.alpha):
                errors.append(f"bad cube {q} has average {avg} outside (alpha, 4 alpha]")
            covered[sl] += 1
        if covered.max(initial=0) > 1:
            errors.append("bad cubes overlap")
        if np.any((covered > 0) != self.exceptional):
            errors.append("bad cubes differ from {Mf > alpha}")
        if np.any(self.bad[covered == 0] != 0):
            errors.append("bad part leaks outside bad cubes")
        measure = self.exceptional.mean()
        if measure > raster_lp(f, p0) ** p0 / self.alpha ** p0 * (1 + 1e-12):
            errors.append("Chebyshev bound on the exceptional set fails")
        return errors


def cz_decompose(f, alpha):
    """Split ``f = f1 + f2`` at height ``alpha`` over maximal dyadic cubes.

    The whole raster is the top cube, so ``alpha`` must be at least the mean
    of ``|f|``; otherwise the top cube itself would be bad.
    """
    a = _as_raster(f)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    absf = np.abs(a)
    if absf.mean() > alpha:
        raise ValueError(f"alpha = {alpha} is below the mean of |f| ({absf.mean()}); the top cube would be bad")
    n = a.shape[0]
    top = _log2_size(n)
    averages = [absf]
    for _ in range(top):
        averages.append(_block_reduce(averages[-1], 2, np.mean))
    covered = np.zeros((1, 1), dtype=bool)
    bad_cubes = []
    for level in range(top - 1, -1, -1):
        covered = np.kron(covered, np.ones((2, 2), dtype=bool))
        new = (averages[level] > alpha) & ~covered
        s = 1 << level
        for i, j in zip(*np.nonzero(new)):
            bad_cubes.append(DyadicCube(level, int(i) * s, int(j) * s))
        covered |= new
    bad_cubes.sort()
    good = np.where(covered, 0.0, a)
    bad = a - good
    return CZDecomposition(alpha=float(alpha), good=good, bad=bad,
                           bad_cubes=bad_cubes, exceptional=covered)


# -- domains and Whitney cubes -------------------------------------------------

@dataclass(frozen=True, eq=False)
class RasterDomain:
    """Open set Omega given as a union of raster cells.

    ``unbounded`` marks a raster window onto a set that continues past the
    raster edge (half-planes, exterior domains): the raster border is then
    not part of the boundary, and a guard band of ``n/4`` cells along the
    border is excluded from the comparability checks.
    """

    mask: np.ndarray
    unbounded: bool = False
    resolution: float = None  # cells per unit length (default: n)

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("domain mask must be square")
        _log2_size(m.shape[0])
        if not m.any():
            raise ValueError("domain is empty")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        if self.resolution is None:
            object.__setattr__(self, "resolution", float(m.shape[0]))

    @property
    def n(self):
        return self.mask.shape[0]

    @classmethod
    def from_predicate(cls, n, fn, unbounded=False):
        """Cells whose centers ``(x, y)`` in the unit square satisfy ``fn``."""
        c = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(c, c, indexing="ij")
        return cls(np.asarray(fn(X, Y), dtype=bool), unbounded=unbounded)

    def complement(self):
        """Interior of the complement. Exterior of a bounded set is unbounded."""
        return RasterDomain(~self.mask, unbounded=True, resolution=self.resolution)

    def touches_border(self):
        m = self.mask
        return bool(m[0].any() or m[-1].any() or m[:, 0].any() or m[:, -1].any())

    def refine(self):
        """Same set on a raster twice as fine."""
        return RasterDomain(np.kron(self.mask, np.ones((2, 2), dtype=bool)),
                            unbounded=self.unbounded, resolution=2 * self.resolution)


def boundary_distance_sq(domain):
    """Squared distance from each cell corner (an ``(n+1) x (n+1)`` lattice)
    to the closed complement of Omega, in cell units.

    Distances between a corner and a union of closed cells are attained at
    integer points, so the corner-lattice transform is exact.
    """
    m = domain.mask
    n = m.shape[0]
    pad = np.zeros((n + 2, n + 2), dtype=bool)
    pad[1:-1, 1:-1] = ~m
    if domain.unbounded:
        pad[0, :] = pad[-1, :] = pad[:, 0] = pad[:, -1] = False
    else:
        pad[0, :] = pad[-1, :] = pad[:, 0] = pad[:, -1] = True
    # a corner is in the closed complement if any of its four cells is
    feature = pad[:-1, :-1] | pad[1:, :-1] | pad[:-1, 1:] | pad[1:, 1:]
    if not feature.any():
        raise ValueError("domain has empty boundary inside the raster")
    return kernels.edt_sq(np.ascontiguousarray(feature, dtype=np.uint8))


@dataclass
class WhitneyDecomposition:
    domain: RasterDomain
    cubes: list
    dist_sq: list          # squared dist(Q, boundary), cell units
    far_sq: list           # squared max over corners in Q of dist(z, boundary)
    boundary_layer: list   # accepted at the minimum level, not by the rule
    guard: list            # within the guard band of an unbounded raster
    min_level: int = 0

    def checked(self):
        """Indices of cubes subject to the comparability assertions."""
        return [i for i in range(len(self.cubes)) if not (self.boundary_layer[i] or self.guard[i])]

    def constants(self):
        """``(min dist/l, max dist/l, max sup_z dist(z)/l)`` over checked cubes."""
        idx = self.checked()
        if not idx:
            return (math.nan, math.nan, math.nan)
        lo = min(math.sqrt(self.dist_sq[i]) / self.cubes[i].side for i in idx)
        hi = max(math.sqrt(self.dist_sq[i]) / self.cubes[i].side for i in idx)
        far = max(math.sqrt(self.far_sq[i]) / self.cubes[i].side for i in idx)
        return lo, hi, far

    def coverage(self):
        """Per-cell count of covering cubes."""
        c = np.zeros(self.domain.mask.shape, dtype=np.int64)
        for q in self.cubes:
            c[q.cells()] += 1
        return c


def _corner_pool(a, fn):
    # reduce over the four corners of each unit cell
    return fn(np.stack([a[:-1, :-1], a[1:, :-1], a[:-1, 1:], a[1:, 1:]]), axis=0)


def whitney_decompose(domain, min_level=0):
    """Quadtree Whitney decomposition of Omega.

    A cube is accepted once ``2 diam(Q) <= dist(Q, boundary)``; the refusal of
    its parent then forces ``dist(Q, boundary) < 6 diam(Q)``, inside the
    ``8 diam`` upper bound. Cubes at or below ``min_level`` that lie in Omega
    are accepted as the boundary layer.
    """
    if not domain.unbounded and domain.touches_border():
        raise ValueError("bounded domain touches the raster border; distance to the boundary is ill-defined")
    n = domain.n
    top = _log2_size(n)
    d2 = boundary_distance_sq(domain)
    # closed-cube minima and maxima of the corner distance, level by level
    mins = [_corner_pool(d2, np.min)]
    maxs = [_corner_pool(d2, np.max)]
    inside = [domain.mask.astype(np.int64)]
    for _ in range(top):
        mins.append(_block_reduce(mins[-1], 2, np.min))
        maxs.append(_block_reduce(maxs[-1], 2, np.max))
        inside.append(_block_reduce(inside[-1], 2, np.sum))
    guard_w = n // 4 if domain.unbounded else 0

    cubes, dists, fars, layer, guard = [], [], [], [], []
    stack = [(top, 0, 0)]
    while stack:
        level, i, j = stack.pop()
        s = 1 << level
        count = inside[level][i, j]
        if count == 0:
            continue
        dist = mins[level][i, j]
        accept = count == s * s and dist >= (WHITNEY_LOWER ** 2) * 2 * s * s
        at_floor = level <= min_level and count == s * s
        if accept or at_floor or (level == 0 and count == 1):
            q = DyadicCube(level, i * s, j * s)
            cubes.append(q)
            dists.append(float(dist))
            fars.append(float(maxs[level][i, j]))
            layer.append(not accept)
            guard.append(bool(guard_w) and (q.ax < guard_w or q.ay < guard_w
                                            or q.ax + s > n - guard_w or q.ay + s > n - guard_w))
            continue
        for di in (0, 1):
            for dj in (0, 1):
                stack.append((level - 1, 2 * i + di, 2 * j + dj))
    order = sorted(range(len(cubes)), key=lambda k: cubes[k])
    W = WhitneyDecomposition(
        domain=domain,
        cubes=[cubes[k] for k in order],
        dist_sq=[dists[k] for k in order],
        far_sq=[fars[k] for k in order],
        boundary_layer=[layer[k] for k in order],
        guard=[guard[k] for k in order],
        min_level=min_level,
    )
    for k in W.checked():
        q = W.cubes[k]
        # upper comparability follows from the quadtree; a parentless top cube is exempt
        if q.level < top:
            assert W.dist_sq[k] < (WHITNEY_UPPER * q.diam) ** 2, q
    return W


# -- Jones extension -----------------------------------------------------------

@dataclass
class JonesAssignment:
    interior: WhitneyDecomposition
    exterior: WhitneyDecomposition
    targets: list          # T(Q') per exterior cube, aligned with exterior.cubes
    kinds: list            # 'nearest', 'q0' (fallback) or 'guard'
    q0: DyadicCube = None
    c_prime: float = math.nan         # Omega inside C' Q0
    c_double_prime: float = math.nan  # T(Q') in C'' Q' and Q' in C'' T(Q')
    c_dist: float = math.nan          # dist(Q', T(Q')) / l(Q')

    def comparable(self):
        """Indices of exterior cubes matched by the nearest-cube rule."""
        return [k for k, kind in enumerate(self.kinds) if kind == "nearest"]


def choose_q0(interior):
    """Largest Whitney cube of Omega minimising ``C'`` with ``Omega in C' Q0``."""
    mask = interior.domain.mask
    xs, ys = np.nonzero(mask)
    x0, x1 = xs.min(), xs.max() + 1
    y0, y1 = ys.min(), ys.max() + 1
    top = max(q.level for q in interior.cubes)
    best = None
    for q in interior.cubes:
        if q.level != top:
            continue
        cx, cy = q.center
        reach = max(abs(x0 - cx), abs(x1 - cx), abs(y0 - cy), abs(y1 - cy))
        lam = 2.0 * reach / q.side
        key = (lam, q.center)
        if best is None or key < best[0]:
            best = (key, q)
    return best[1], best[0][0]


def jones_assign(interior, exterior, bounded):
    """Match each exterior Whitney cube Q' to the closest interior cube T(Q')
    with ``l(T) >= l(Q')``; ties go to the smaller cube, then the lower anchor.

    Bounded case: when no such cube exists, ``T(Q') = Q0``. Unbounded case on
    a finite raster: the nearest cube of any size. Guard-band cubes keep their
    match but are excluded from the recorded constants.
    """
    if not interior.cubes:
        raise ValueError("no interior Whitney cubes")
    # candidates are the cubes accepted by the Whitney rule; the boundary
    # layer only exists because the raster stops refining
    cand = [k for k, q in enumerate(interior.cubes) if not interior.boundary_layer[k]]
    if not cand:
        cand = list(range(len(interior.cubes)))
    pool_cubes = [interior.cubes[k] for k in cand]
    pool = np.array([(q.level, q.ax, q.ay) for q in pool_cubes], dtype=np.int64)
    tgt = np.array([(q.level, q.ax, q.ay) for q in exterior.cubes], dtype=np.int64).reshape(-1, 3)
    found = kernels.nearest_cubes(np.ascontiguousarray(tgt), np.ascontiguousarray(pool))
    q0, c_prime = choose_q0(interior) if bounded else (None, math.nan)
    targets, kinds = [], []
    for k, q in enumerate(exterior.cubes):
        if found[k] >= 0:
            targets.append(pool_cubes[found[k]])
            kind = "nearest"
        elif bounded:
            targets.append(q0)
            kind = "q0"
        else:
            # finite raster: nothing large enough, take the nearest of any size
            probe = np.array([[0, q.ax, q.ay]], dtype=np.int64)
            j = int(kernels.nearest_cubes(probe, np.ascontiguousarray(pool))[0])
            targets.append(pool_cubes[j])
            kind = "guard"
        kinds.append("guard" if exterior.guard[k] else kind)
    A = JonesAssignment(interior=interior, exterior=exterior, targets=targets, kinds=kinds,
                        q0=q0, c_prime=c_prime)
    idx = A.comparable()
    if idx:
        A.c_double_prime = max(max(containment_factor(targets[k], exterior.cubes[k]),
                                   containment_factor(exterior.cubes[k], targets[k])) for k in idx)
        A.c_dist = max(cube_gap(targets[k], exterior.cubes[k]) / exterior.cubes[k].side for k in idx)
    return A


@dataclass
class JonesExtension:
    extended: np.ndarray
    assignment: JonesAssignment
    q0: DyadicCube = None
    mf_constant: float = math.nan  # max |f~| / Mf over comparable exterior cubes


def jones_extend(f, assignment):
    """``f~ = f`` on Omega and ``avg_{T(Q')} f`` on each exterior cube Q'."""
    a = _as_raster(f)
    domain = assignment.interior.domain
    mask = domain.mask
    out = np.where(mask, a, 0.0)
    filled = mask.copy()
    for q, t in zip(assignment.exterior.cubes, assignment.targets):
        sl = q.cells()
        out[sl] = a[t.cells()].mean()
        filled[sl] = True
    if not filled.all():
        raise ValueError("assignment incomplete: some exterior cells have no Whitney cube")
    mf = shifted_maximal(np.where(mask, a, 0.0))
    ratio = 0.0
    for k in assignment.comparable():
        sl = assignment.exterior.cubes[k].cells()
        top = np.abs(out[sl]).max()
        if top > 0:
            ratio = max(ratio, float((np.abs(out[sl]) / mf[sl]).max()))
    return JonesExtension(extended=out, assignment=assignment, q0=assignment.q0, mf_constant=ratio)


def extend_domain(f, domain, min_level=0):
    """Whitney decompositions of Omega and its exterior, assignment and extension."""
    interior = whitney_decompose(domain, min_level)
    exterior = whitney_decompose(domain.complement(), min_level)
    assignment = jones_assign(interior, exterior, bounded=not domain.unbounded)
    return jones_extend(f, assignment)


# -- BMO on a domain -----------------------------------------------------------

def bmo_norm_domain(f, domain, max_depth=None):
    """Sup of mean oscillation over dyadic cubes (anchored and one-third
    shifted, sides ``n 2^-j`` down to 2 cells) lying inside Omega.

    On the full raster of a periodic problem (all cells, ``unbounded``) the
    lattices wrap around, which reproduces the torus seminorm exactly.
    """
    from .norms import periodic_oscillations

    a = _as_raster(f)
    n = a.shape[0]
    top = _log2_size(n)
    if max_depth is None:
        max_depth = top - 1
    if not 1 <= max_depth <= top:
        raise ValueError(f"max_depth must lie in [1, {top}]")
    mask = domain.mask
    if mask.all() and domain.unbounded:
        return max(float(osc.max()) for *_, osc in periodic_oscillations(a, max_depth))
    best = -1.0
    inside = mask.astype(np.float64)
    for ox, oy in dyadic_offsets(n):
        sub = np.ascontiguousarray(a[ox:, oy:])
        msub = inside[ox:, oy:]
        for j in range(max_depth + 1):
            side = n >> j
            if side < 2 or side > sub.shape[0] or side > sub.shape[1]:
                continue
            _, osc = kernels.block_oscillation(sub, side)
            full = _block_reduce(msub[: osc.shape[0] * side, : osc.shape[1] * side], side, np.min) > 0
            if full.any():
                best = max(best, float(osc[full].max()))
    if best < 0:
        raise ValueError("no cube of the minimum size fits inside the domain")
    return best


# -- Interpolation chain diagnostics ---------------------------------------------------

@dataclass
class ChainReport:
    alpha: float
    bmo: float
    lp0: float
    good_bound_ok: bool             # ||f1||_p^p <= alpha^{p-p0} ||f||_p0^p0
    bad_constants: dict = field(default_factory=dict)  # p -> int|f2|^p / (2^p((p bmo)^p + ||f||_p0^p))
    jn_constants: dict = field(default_factory=dict)   # p -> max_k avg|f - f_Qk|^p / (p bmo)^p


def interpolation_chain(f, p_list=(4, 8, 16), p0=2.0, bmo=None):
    """CZ split at ``alpha = ||f||_p0`` and the resulting L^p bounds."""
    a = _as_raster(f)
    lp0 = raster_lp(a, p0)
    if bmo is None:
        bmo = bmo_norm_domain(a, RasterDomain(np.ones(a.shape, bool), unbounded=True))
    cz = cz_decompose(a, lp0)
    good_ok = True
    bad_c, jn_c = {}, {}
    for p in p_list:
        lhs = raster_lp(cz.good, p) ** p
        if lhs > lp0 ** (p - p0) * lp0 ** p0 * (1 + 1e-10):
            good_ok = False
        bad = raster_lp(cz.bad, p) ** p
        bad_c[p] = bad / (2.0 ** p * ((p * bmo) ** p + lp0 ** p)) if bmo > 0 or lp0 > 0 else 0.0
        worst = 0.0
        for q in cz.bad_cubes:
            blk = a[q.cells()]
            worst = max(worst, float((np.abs(blk - blk.mean()) ** p).mean()))
        jn_c[p] = worst / (p * bmo) ** p if bmo > 0 else 0.0
    return ChainReport(alpha=lp0, bmo=bmo, lp0=lp0, good_bound_ok=good_ok,
                       bad_constants=bad_c, jn_constants=jn_c)


# -- cube lists ----------------------------------------------------------------

def format_cubes(cubes):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "ax", "ay"])
    for q in cubes:
        w.writerow([q.level, q.ax, q.ay])
    return buf.getvalue()


def parse_cubes(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["level", "ax", "ay"]:
        raise ValueError("not a cube list CSV")
    return [DyadicCube(int(a), int(b), int(c)) for a, b, c in rows[1:]]
