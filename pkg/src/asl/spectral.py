"""Periodic 2D grid, unitary Fourier transforms and spectral operators.

Samples live at ``x_i = i * h`` with ``h = L / n`` and the array index
``values[i, j]`` is ``(x, y) = (x_i, y_j)``. Coefficients are stored in numpy
FFT order, normalised so that ``sum |F(k)|^2 == int |f|^2 dx`` (for
``L = 2*pi`` this is exactly ``(2 pi)^{-1} int f e^{-ik.x} dx``).
"""

from dataclasses import dataclass
from functools import cached_property
import math
from pathlib import Path

import numpy as np

SYMMETRY_TOL = 1e-10
MEAN_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class TorusGrid:
    """An ``n x n`` grid on the torus ``[0, L)^2``."""

    n: int
    length: float = 2 * math.pi

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {n!r}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"period must be positive and finite, got {self.length!r}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def h(self):
        return self.length / self.n

    @property
    def cell_area(self):
        return self.h * self.h

    @property
    def area(self):
        return self.length * self.length

    @cached_property
    def x(self):
        return np.arange(self.n) * self.h

    @cached_property
    def mesh(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def index(self):
        """Integer wavenumbers in FFT order, shape (2, n, n)."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(np.int64)
        return np.stack(np.meshgrid(m, m, indexing="ij"))

    @cached_property
    def k(self):
        """Physical wavenumbers ``2 pi m / L``, shape (2, n, n)."""
        return self.index * (2 * math.pi / self.length)

    @cached_property
    def kd(self):
        """Wavenumbers for odd-order operators: the Nyquist component is zero,
        since its derivative has no real representation on the grid."""
        kd = self.k.copy()
        kd[self.index == -(self.n // 2)] = 0.0
        return kd

    @cached_property
    def k2(self):
        return self.k[0] ** 2 + self.k[1] ** 2

    @cached_property
    def kabs(self):
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self):
        cut = self.n / 3.0
        return np.maximum(np.abs(self.index[0]), np.abs(self.index[1])) <= cut

    @cached_property
    def norm_factor(self):
        # FFT sum -> unitary coefficient
        return self.length / self.n ** 2


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a scalar on the torus. Immutable."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            raise ValueError("scalar field values must be real")
        v = _frozen(v)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"values have shape {v.shape}, grid needs {(self.grid.n,) * 2}")
        if not np.isfinite(v).all():
            raise ValueError("scalar field contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.n, grid.n)))

    @classmethod
    def from_function(cls, grid, fn):
        X, Y = grid.mesh
        return cls(grid, np.broadcast_to(fn(X, Y), (grid.n, grid.n)))

    def mean(self):
        return float(self.values.mean())

    def integral(self):
        return float(self.values.sum() * self.grid.cell_area)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Unitary Fourier coefficients of a field, FFT ordering."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if c.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"coefficients have shape {c.shape}, grid needs {(self.grid.n,) * 2}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def reflected(self):
        """Coefficients at ``-k`` (conjugated), aligned with ``coeffs``."""
        return np.conj(np.roll(self.coeffs[::-1, ::-1], 1, axis=(0, 1)))

    def symmetry_defect(self):
        scale = np.abs(self.coeffs).max()
        if scale == 0:
            return 0.0
        return float(np.abs(self.coeffs - self.reflected()).max() / scale)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two scalar components on a shared grid."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != 2:
            raise ValueError("a vector field has exactly two components")
        if comps[0].grid != comps[1].grid:
            raise ValueError("vector components live on different grids")
        object.__setattr__(self, "components", comps)

    @property
    def grid(self):
        return self.components[0].grid

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def magnitude(self):
        a, b = self.components
        return np.hypot(a.values, b.values)


def forward_transform(f):
    """Unitary DFT of a scalar field."""
    if not np.isfinite(f.values).all():
        raise ValueError("cannot transform non-finite values")
    return SpectralField(f.grid, np.fft.fft2(f.values) * f.grid.norm_factor)


def inverse_transform(F, tol=SYMMETRY_TOL):
    """Inverse of :func:`forward_transform`; requires conjugate symmetry."""
    defect = F.symmetry_defect()
    if defect > tol:
        raise ValueError(f"coefficients are not conjugate-symmetric (defect {defect:.3e})")
    return ScalarField(F.grid, _to_real(F.grid, F.coeffs))


def _to_real(grid, coeffs):
    return np.fft.ifft2(coeffs / grid.norm_factor).real


def _to_spec(f):
    return np.fft.fft2(f.values) * f.grid.norm_factor


def apply_multiplier(f, m):
    """Real field whose coefficients are ``m(k) * F(k)``; ``m`` must be
    Hermitian (``m(-k) = conj m(k)``) for the result to be meaningful."""
    return ScalarField(f.grid, _to_real(f.grid, m * _to_spec(f)))


def spectral_gradient(f):
    g = f.grid
    F = _to_spec(f)
    return VectorField(tuple(ScalarField(g, _to_real(g, 1j * g.kd[j] * F)) for j in range(2)))


def spectral_divergence(v):
    g = v.grid
    total = sum(1j * g.kd[j] * _to_spec(v[j]) for j in range(2))
    return ScalarField(g, _to_real(g, total))


def fractional_laplacian(f, gamma):
    """``(-Delta)^gamma f`` for ``gamma`` in (0, 1]; the mean is annihilated."""
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must lie in (0, 1], got {gamma!r}")
    return apply_multiplier(f, f.grid.kabs ** (2.0 * gamma))


def dealias(F):
    """2/3-rule truncation: zero modes with max(|m1|, |m2|) > n/3."""
    return SpectralField(F.grid, np.where(F.grid.dealias_mask, F.coeffs, 0.0))


def check_mean_zero(f, what="field"):
    """Raise unless the zero mode is negligible relative to the L2 norm."""
    zero_mode = abs(f.values.sum()) * f.grid.norm_factor
    l2 = math.sqrt(float((f.values ** 2).sum()) * f.grid.cell_area)
    if zero_mode > MEAN_ZERO_TOL * l2:
        raise ValueError(f"{what} must be mean-zero (|F(0)| = {zero_mode:.3e}, ||f||_2 = {l2:.3e})")


def inverse_laplacian(f):
    """``phi`` with ``-Delta phi = f`` and zero mean; ``f`` must be mean-zero."""
    check_mean_zero(f)
    k2 = f.grid.k2
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    return apply_multiplier(f, inv)


# -- snapshot format ---------------------------------------------------------

_MAGIC = "ASFIELD v1"


def write_field(path, f):
    """Write ``f`` as an ASFIELD v1 snapshot (header line + little-endian f64)."""
    header = f"{_MAGIC} n={f.grid.n} L={f.grid.length!r}\n".encode("ascii")
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_field(path):
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ValueError("missing ASFIELD header")
    parts = data[:nl].decode("ascii").split()
    if len(parts) != 4 or " ".join(parts[:2]) != _MAGIC:
        raise ValueError(f"not an ASFIELD v1 file: {data[:nl]!r}")
    try:
        n = int(parts[2].removeprefix("n="))
        length = float(parts[3].removeprefix("L="))
    except ValueError:
        raise ValueError(f"malformed ASFIELD header: {data[:nl]!r}") from None
    body = data[nl + 1:]
    if len(body) != 8 * n * n:
        raise ValueError(f"expected {8 * n * n} payload bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(n, n)
    return ScalarField(TorusGrid(n, length), values)
