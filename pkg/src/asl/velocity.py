"""Velocity laws ``v = V rho`` as Fourier multipliers, and diagnostics for the
structural conditions on V (div-free, BMO-to-BMO gradient, H^-1 to L^2)."""

from dataclasses import dataclass
import csv
import math
from pathlib import Path

import numpy as np

from .spectral import (
    MEAN_ZERO_TOL,
    ScalarField,
    VectorField,
    _to_real,
    _to_spec,
)
from . import norms

KINDS = ("none", "biot_savart", "sqg", "newtonian_attractive", "custom")


@dataclass(frozen=True)
class VelocityLaw:
    """A velocity operator ``v_j^(k) = m_j(k) rho^(k)``.

    kinds:
      none                  V = 0
      biot_savart           v = grad^perp Delta^-1 omega,   m = -i k^perp / |k|^2
      sqg                   v = grad^perp (-Delta)^-1/2 rho, m = i k^perp / |k|
      newtonian_attractive  v = -grad Delta^-1 rho,          m = i k / |k|^2
      custom                table of multiplier values per integer wavenumber

    ``k^perp = (-k2, k1)``. ``repulsive`` flips the sign of the Newtonian law.
    """

    kind: str
    table: tuple = None  # custom: ((kx, ky, m1, m2), ...)
    repulsive: bool = False
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown velocity law {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom" and not self.table:
            raise ValueError("custom velocity law needs a multiplier table")
        if self.repulsive and self.kind != "newtonian_attractive":
            raise ValueError("repulsive only applies to the Newtonian law")

    @classmethod
    def from_string(cls, text, repulsive=False):
        """Parse ``biot_savart | sqg | newtonian_attractive | none | custom:<file>``."""
        text = text.strip()
        if text.startswith("custom:"):
            return load_custom(text[len("custom:"):])
        return cls(text, repulsive=repulsive)

    @property
    def divergence_free(self):
        return self.kind in ("none", "biot_savart", "sqg")

    def multiplier(self, grid):
        """Pair of complex arrays ``(m1, m2)`` in FFT order."""
        kd1, kd2 = grid.kd
        k2 = grid.k2
        inv = np.zeros_like(k2)
        nz = k2 > 0
        if self.kind == "none":
            z = np.zeros(k2.shape, dtype=complex)
            return z, z.copy()
        if self.kind == "biot_savart":
            inv[nz] = 1.0 / k2[nz]
            return 1j * kd2 * inv, -1j * kd1 * inv
        if self.kind == "sqg":
            inv[nz] = 1.0 / np.sqrt(k2[nz])
            return -1j * kd2 * inv, 1j * kd1 * inv
        if self.kind == "newtonian_attractive":
            inv[nz] = 1.0 / k2[nz]
            sign = -1.0 if self.repulsive else 1.0
            return sign * 1j * kd1 * inv, sign * 1j * kd2 * inv
        return _table_multiplier(self.table, grid)


def _table_multiplier(table, grid):
    n = grid.n
    m1 = np.zeros((n, n), dtype=complex)
    m2 = np.zeros((n, n), dtype=complex)
    for kx, ky, a, b in table:
        if -n // 2 < kx < n // 2 and -n // 2 < ky < n // 2:
            m1[kx % n, ky % n] = a
            m2[kx % n, ky % n] = b
    m1[0, 0] = m2[0, 0] = 0.0
    return m1, m2


def load_custom(path):
    """Read a multiplier table ``kx,ky,re_m1,im_m1,re_m2,im_m2``.

    The table must be Hermitian (``m(-k) = conj m(k)``) wherever both entries
    are present, otherwise the velocity would not be real.
    """
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["kx", "ky", "re_m1", "im_m1", "re_m2", "im_m2"]:
            raise ValueError(f"{path}: bad multiplier table header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            try:
                kx, ky = int(row[0]), int(row[1])
                m1 = complex(float(row[2]), float(row[3]))
                m2 = complex(float(row[4]), float(row[5]))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
            if (kx, ky) in rows:
                raise ValueError(f"{path}:{lineno}: duplicate wavenumber ({kx}, {ky})")
            rows[(kx, ky)] = (m1, m2)
    for (kx, ky), (m1, m2) in rows.items():
        other = rows.get((-kx, -ky))
        if other is not None and (abs(other[0] - m1.conjugate()) > 1e-12
                                  or abs(other[1] - m2.conjugate()) > 1e-12):
            raise ValueError(f"{path}: multiplier is not Hermitian at ({kx}, {ky})")
    table = tuple((kx, ky, m1, m2) for (kx, ky), (m1, m2) in sorted(rows.items()))
    return VelocityLaw("custom", table=table, name=str(Path(path).name))


def write_custom(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kx", "ky", "re_m1", "im_m1", "re_m2", "im_m2"])
        for kx, ky, m1, m2 in table:
            w.writerow([kx, ky, repr(m1.real), repr(m1.imag), repr(m2.real), repr(m2.imag)])


def _velocity_from_spec(law, grid, F):
    m1, m2 = law.multiplier(grid)
    return VectorField((ScalarField(grid, _to_real(grid, m1 * F)),
                        ScalarField(grid, _to_real(grid, m2 * F))))


def apply_velocity(law, rho):
    return _velocity_from_spec(law, rho.grid, _to_spec(rho))


def velocity_gradient(law, rho):
    """``((d1 v1, d1 v2), (d2 v1, d2 v2))``: entry [i][j] is ``d_i v_j``."""
    grid = rho.grid
    F = _to_spec(rho)
    m = law.multiplier(grid)
    return tuple(
        tuple(ScalarField(grid, _to_real(grid, 1j * grid.kd[i] * m[j] * F)) for j in range(2))
        for i in range(2)
    )


def matrix_magnitude(grad):
    """Pointwise Frobenius norm of a 2x2 field matrix."""
    return np.sqrt(sum(grad[i][j].values ** 2 for i in range(2) for j in range(2)))


def symbol_divergence(law, grid):
    """``max |k . m(k)|`` relative to ``max |k| |m(k)|``: zero for an exactly
    divergence-free law, order one for a gradient law."""
    m1, m2 = law.multiplier(grid)
    kd1, kd2 = grid.kd
    div = np.abs(kd1 * m1 + kd2 * m2).max()
    scale = (np.hypot(kd1, kd2) * np.sqrt(np.abs(m1) ** 2 + np.abs(m2) ** 2)).max()
    return float(div / scale) if scale > 0 else 0.0


def divergence_residual(law, rho):
    grad = velocity_gradient(law, rho)
    div = grad[0][0].values + grad[1][1].values
    return math.sqrt(float((div ** 2).sum()) * rho.grid.cell_area)


@dataclass
class ConditionReport:
    """Measured ratios for the velocity conditions over a corpus."""

    c2_bmo_ratio: float      # sup ||grad V f||_BMO / ||f||_BMO
    c2_lp_ratio: float       # sup ||grad V f||_p / (p ||f||_p)
    c3_ratio: float          # sup ||V f||_2 / ||f||_{H^-1}
    l2_ratio: float          # sup ||V f||_2 / ||f||_2
    divfree_residual: float  # sup ||div V f||_2 / ||f||_2
    analytic_c3: float       # sup_k |k| |m(k)|
    analytic_c3_bounded: bool
    analytic_l2: float       # sup_k |m(k)|
    analytic_l2_bounded: bool

    @property
    def c3_ok(self):
        return self.analytic_c3_bounded

    @property
    def l2_ok(self):
        return self.analytic_l2_bounded


def _symbol_sup(values, grid, growth=1.5):
    """Sup of a symbol over the lattice, and whether it stays bounded: the sup
    over the full lattice must not exceed ``growth`` times the sup over the
    half-size box (an unbounded symbol grows with the box)."""
    idx = np.maximum(np.abs(grid.index[0]), np.abs(grid.index[1]))
    inner = idx <= grid.n // 4
    full = float(values.max())
    half = float(values[inner].max())
    return full, full <= growth * half


def check_conditions(law, corpus, p_list=(4, 8, 16, 32, 64), max_depth=None):
    corpus = list(corpus)
    if not corpus:
        raise ValueError("condition check needs a non-empty corpus")
    grid = corpus[0].grid
    m1, m2 = law.multiplier(grid)
    absm = np.sqrt(np.abs(m1) ** 2 + np.abs(m2) ** 2)
    an_c3, c3_bounded = _symbol_sup(grid.kabs * absm, grid)
    an_l2, l2_bounded = _symbol_sup(absm, grid)

    c2_bmo = c2_lp = c3 = l2r = div = 0.0
    for f in corpus:
        F = _to_spec(f)
        l2f = math.sqrt(float((np.abs(F) ** 2).sum()))
        if l2f == 0:
            continue
        v = _velocity_from_spec(law, f.grid, F)
        vl2 = norms.lp_norm(v, 2)
        l2r = max(l2r, vl2 / l2f)
        if abs(F[0, 0]) <= MEAN_ZERO_TOL * l2f:
            c3 = max(c3, vl2 / norms.sobolev_norm(f, -1))
        grad = velocity_gradient(law, f)
        div = max(div, divergence_residual(law, f) / l2f)
        bf = norms.bmo_norm(f, max_depth)
        if bf > 0:
            gb = max(norms.bmo_norm(grad[i][j], max_depth) for i in range(2) for j in range(2))
            c2_bmo = max(c2_bmo, gb / bf)
        gmag = matrix_magnitude(grad)
        gfield = ScalarField(f.grid, gmag)
        for p in p_list:
            c2_lp = max(c2_lp, norms.lp_norm(gfield, p) / (p * norms.lp_norm(f, p)))
    return ConditionReport(
        c2_bmo_ratio=c2_bmo, c2_lp_ratio=c2_lp, c3_ratio=c3, l2_ratio=l2r,
        divfree_residual=div, analytic_c3=an_c3, analytic_c3_bounded=c3_bounded,
        analytic_l2=an_l2, analytic_l2_bounded=l2_bounded,
    )
