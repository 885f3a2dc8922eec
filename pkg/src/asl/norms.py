"""Norms and functionals on torus fields: L^p, homogeneous Sobolev, the
potential form of H^-1, dyadic BMO, log-Lipschitz modulus, first moment and
the Hardy-space pairing bound."""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np

from . import kernels
from .spectral import (
    VectorField,
    _to_spec,
    check_mean_zero,
    inverse_laplacian,
    spectral_gradient,
)


@dataclass
class NormReport:
    name: str
    value: float
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"norm value must be nonnegative, got {self.value!r}")


@dataclass(frozen=True)
class ModulusSample:
    r: float
    ratio: float
    lipschitz: float


@dataclass
class GrowthProfile:
    """Measured L^p norms against the BMO-L^p0 interpolation bound."""

    p0: float
    bmo: float
    lp0: float
    rows: list  # (p, ||f||_p, rhs)
    ratio: float
    ratio_additive: float


def _abs_values(f):
    if isinstance(f, VectorField):
        return f.magnitude(), f.grid
    return np.abs(f.values), f.grid


def lp_norm(f, p):
    """``(int |f|^p)^(1/p)`` by the equal-weight rule; ``max |f|`` for p = inf.

    Vector fields are measured through their pointwise Euclidean length.
    """
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p!r}")
    a, grid = _abs_values(f)
    top = float(a.max())
    if math.isinf(p):
        return top
    if top == 0.0:
        return 0.0
    # scale by the max to keep large p from overflowing
    return top * float(grid.cell_area * ((a / top) ** p).sum()) ** (1.0 / p)


def sobolev_norm(f, s):
    """Homogeneous ``H^s`` norm ``(sum |k|^{2s} |F(k)|^2)^{1/2}``.

    The zero mode carries weight ``|0|^{2s}`` with ``0^0 = 1``: it counts
    for ``s = 0`` only. Negative ``s`` requires mean-zero input.
    """
    if s < 0:
        check_mean_zero(f)
    grid = f.grid
    F = _to_spec(f)
    k2 = grid.k2
    w = np.zeros_like(k2)
    nz = k2 > 0
    w[nz] = k2[nz] ** s
    if s == 0:
        w[~nz] = 1.0
    return math.sqrt(float((w * np.abs(F) ** 2).sum()))


def hminus1_via_potential(w):
    """Solve ``-Delta phi = w`` and return ``(||grad phi||_2, grad phi)``."""
    check_mean_zero(w, "H^-1 argument")
    grad_phi = spectral_gradient(inverse_laplacian(w))
    return lp_norm(grad_phi, 2), grad_phi


# -- dyadic BMO ----------------------------------------------------------------

def dyadic_offsets(n):
    """Cell offsets of the lattice translates ``{0, L/3, 2L/3}^2``.

    Rounded thirds of a power of two map onto each other under doubling, so
    the family is closed under dyadic dilation of the torus.
    """
    t = (0, int(round(n / 3)), int(round(2 * n / 3)))
    return [(a, b) for a in t for b in t]


def default_depth(n):
    """Finest depth whose cubes are two cells wide."""
    return int(math.log2(n)) - 1


def periodic_oscillations(values, max_depth):
    """Yield ``(depth, offset, means, oscillations)`` over the shifted dyadic
    lattices of a periodic ``n x n`` array, for cube sides >= 2 cells."""
    n = values.shape[0]
    values = np.ascontiguousarray(values, dtype=np.float64)
    for ox, oy in dyadic_offsets(n):
        rolled = np.ascontiguousarray(np.roll(values, (-ox, -oy), axis=(0, 1)))
        for j in range(max_depth + 1):
            side = n >> j
            if side < 2:
                break
            means, osc = kernels.block_oscillation(rolled, side)
            yield j, (ox, oy), means, osc


def _check_depth(n, max_depth):
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    if (1 << max_depth) > n:
        raise ValueError(f"depth {max_depth} is too fine for an {n}-point grid")


def bmo_norm(f, max_depth=None):
    """Dyadic BMO seminorm: sup of cube averages of ``|f - f_Q|`` over the
    anchored lattice and its one-third translates, cube sides ``L 2^-j``."""
    n = f.grid.n
    if max_depth is None:
        max_depth = default_depth(n)
    _check_depth(n, max_depth)
    best = 0.0
    for _, _, _, osc in periodic_oscillations(f.values, max_depth):
        best = max(best, float(osc.max()))
    return best


def vector_bmo(v, max_depth=None):
    """Largest component BMO seminorm of a vector or matrix field."""
    return max(bmo_norm(c, max_depth) for c in v)


def lp_growth_profile(f, p_list, p0=2.0, max_depth=None):
    """Compare ``||f||_p`` with ``p^{1-p0/p} ||f||_BMO^{1-p0/p} ||f||_p0^{p0/p}``.

    ``ratio`` is the sup of lhs/rhs over ``p_list``; ``ratio_additive`` uses
    the intermediate form ``p ||f||_BMO + ||f||_p0`` instead.
    """
    p_list = list(p_list)
    if not p_list or p0 >= min(p_list):
        raise ValueError("p0 must be smaller than every p in p_list")
    bmo = bmo_norm(f, max_depth)
    lp0 = lp_norm(f, p0)
    rows = []
    ratio = 0.0
    ratio_add = 0.0
    for p in p_list:
        lhs = lp_norm(f, p)
        e = 1.0 - p0 / p
        rhs = p ** e * bmo ** e * lp0 ** (p0 / p)
        rows.append((float(p), lhs, rhs))
        ratio = max(ratio, _safe_ratio(lhs, rhs))
        ratio_add = max(ratio_add, _safe_ratio(lhs, p * bmo + lp0))
    return GrowthProfile(p0=p0, bmo=bmo, lp0=lp0, rows=rows, ratio=ratio, ratio_additive=ratio_add)


def _safe_ratio(a, b):
    if b > 0:
        return a / b
    return 0.0 if a == 0 else math.inf


# -- log-Lipschitz modulus -----------------------------------------------------

def log_lipschitz_modulus(v, r_values, samples_per_r, seed):
    """Sampled ``max |v(x) - v(y)| / (r |log r|)`` over random pairs at distance r.

    Off-grid values come from periodic bilinear interpolation, so r must be at
    least two grid spacings.
    """
    if samples_per_r < 100:
        raise ValueError("samples_per_r must be at least 100")
    grid = v.grid
    L = grid.length
    comps = [np.ascontiguousarray(c.values) for c in v]
    rng = np.random.default_rng(seed)
    out = []
    for r in r_values:
        r = float(r)
        if not (0 < r < math.exp(-1)):
            raise ValueError(f"r must lie in (0, 1/e), got {r}")
        if r < 2 * grid.h * (1 - 1e-12):
            raise ValueError(f"r = {r} is below two grid spacings ({2 * grid.h})")
        x = rng.uniform(0.0, L, size=(2, samples_per_r))
        theta = rng.uniform(0.0, 2 * math.pi, size=samples_per_r)
        y0 = x[0] + r * np.cos(theta)
        y1 = x[1] + r * np.sin(theta)
        diff2 = np.zeros(samples_per_r)
        for c in comps:
            d = (kernels.bilinear_sample(c, L, x[0], x[1])
                 - kernels.bilinear_sample(c, L, y0, y1))
            diff2 += d * d
        top = float(np.sqrt(diff2.max()))
        out.append(ModulusSample(r=r, ratio=top / (r * abs(math.log(r))), lipschitz=top / r))
    return out


# -- compact support functionals -----------------------------------------------

def centered_displacement(grid, center):
    """Displacement ``x - center`` folded into ``[-L/2, L/2)^2``."""
    L = grid.length
    X, Y = grid.mesh
    dx = np.mod(X - center[0] + L / 2, L) - L / 2
    dy = np.mod(Y - center[1] + L / 2, L) - L / 2
    return dx, dy


def first_moment(f, center, tol=1e-10):
    """``int |x - center| |f(x)| dx`` over the fundamental domain centred at
    ``center``; ``f`` must vanish outside the ball of radius L/2."""
    dx, dy = centered_displacement(f.grid, center)
    dist = np.hypot(dx, dy)
    outside = dist >= f.grid.length / 2
    if outside.any() and np.abs(f.values[outside]).max() >= tol:
        raise ValueError("support reaches the boundary of the fundamental domain")
    return float((dist * np.abs(f.values)).sum() * f.grid.cell_area)


def hardy_pairing_bound(f, kernels_, p, center=None, max_depth=None):
    """Return ``(max_K |int K f|, ||f||_p + M_1)`` over kernels with BMO <= 1.

    Each kernel must already be normalised; kernels with dyadic BMO seminorm
    above one are rejected rather than rescaled.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p!r}")
    check_mean_zero(f, "Hardy pairing argument")
    grid = f.grid
    if center is None:
        center = (grid.length / 2, grid.length / 2)
    m1 = first_moment(f, center)
    pairing = 0.0
    for K in kernels_:
        if K.grid != grid:
            raise ValueError("kernel and field live on different grids")
        b = bmo_norm(K, max_depth)
        if b > 1 + 1e-9:
            raise ValueError(f"kernel has BMO seminorm {b:.4g} > 1; normalise it first")
        pairing = max(pairing, abs(float((K.values * f.values).sum() * grid.cell_area)))
    return pairing, lp_norm(f, p) + m1


# -- reports -------------------------------------------------------------------

def norm_reports(f, p_list=(2, 4, math.inf), s_list=(-1, 1), max_depth=None):
    """Standard battery of norms for one field."""
    depth = default_depth(f.grid.n) if max_depth is None else max_depth
    out = [NormReport("lp", lp_norm(f, p), {"p": p}) for p in p_list]
    for s in s_list:
        try:
            out.append(NormReport("sobolev", sobolev_norm(f, s), {"s": s}))
        except ValueError:
            continue  # negative s on a non-mean-zero field
    out.append(NormReport("bmo", bmo_norm(f, depth), {"depth": depth}))
    return out


def format_norm_csv(reports):
    """CSV text with rows ``name,p_or_s,depth,value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "p_or_s", "depth", "value"])
    for rep in reports:
        prm = rep.parameters
        p_or_s = prm.get("p", prm.get("s", ""))
        w.writerow([rep.name, _fmt(p_or_s), prm.get("depth", ""), repr(float(rep.value))])
    return buf.getvalue()


def _fmt(x):
    if x == "":
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return repr(x)


def parse_norm_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["name", "p_or_s", "depth", "value"]:
        raise ValueError("not a norm report CSV")
    out = []
    for name, p_or_s, depth, value in rows[1:]:
        prm = {}
        if p_or_s:
            prm["s" if name == "sobolev" else "p"] = float(p_or_s)
        if depth:
            prm["depth"] = int(depth)
        out.append(NormReport(name, float(value), prm))
    return out
