"""Initial-data presets: band-limited random fields, mollified logarithmic
singularities (the standard BMO-but-unbounded example) and Gaussian bumps."""

import math

import numpy as np

from .spectral import ScalarField


def smooth_random(grid, slope=2.0, seed=0, kmax=8, amplitude=1.0):
    """Mean-zero random field with spectrum ``|k|^-slope`` on modes ``|m|_inf <= kmax``.

    The coefficients depend only on ``(seed, kmax, slope)``, so the same field
    is obtained on every grid with ``n >= 3 kmax`` (resolution studies).
    The result has ``||f||_2 = amplitude``.
    """
    if kmax < 1 or 3 * kmax > grid.n:
        raise ValueError(f"kmax must lie in [1, n/3], got {kmax} for n = {grid.n}")
    rng = np.random.default_rng(seed)
    side = 2 * kmax + 1
    z = rng.standard_normal((side, side)) + 1j * rng.standard_normal((side, side))
    m = np.arange(-kmax, kmax + 1)
    M1, M2 = np.meshgrid(m, m, indexing="ij")
    r = np.hypot(M1, M2)
    weight = np.zeros_like(r)
    weight[r > 0] = r[r > 0] ** (-slope)
    F = np.zeros((grid.n, grid.n), dtype=complex)
    F[M1 % grid.n, M2 % grid.n] = z * weight
    values = np.fft.ifft2(F).real
    values -= values.mean()
    norm = math.sqrt(float((values ** 2).sum()) * grid.cell_area)
    return ScalarField(grid, values * (amplitude / norm))


def smooth_distance_sq(grid, center):
    """Smooth periodic surrogate for ``|x - center|^2``; exact to second order
    near the center and free of kinks at the cell boundary."""
    L = grid.length
    X, Y = grid.mesh
    c = (L / (2 * math.pi)) ** 2
    w = 2 * math.pi / L
    return c * ((2 - 2 * np.cos(w * (X - center[0]))) + (2 - 2 * np.cos(w * (Y - center[1]))))


def mollified_log(grid, center, delta, amplitude=1.0):
    """``amplitude * log(1 / sqrt(|x - center|^2 + delta^2))`` on the torus."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    d2 = smooth_distance_sq(grid, center)
    return ScalarField(grid, -0.5 * amplitude * np.log(d2 + delta * delta))


def mollified_log_line(grid, x0, delta, amplitude=1.0):
    """Logarithmic singularity along the line ``x = x0``; depends on x only."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    L = grid.length
    X, _ = grid.mesh
    d2 = (L / (2 * math.pi)) ** 2 * (2 - 2 * np.cos(2 * math.pi * (X - x0) / L))
    return ScalarField(grid, -0.5 * amplitude * np.log(d2 + delta * delta))


def gaussian_bump(grid, center, width, mass=1.0):
    """Periodised Gaussian with total integral ``mass``."""
    if width <= 0:
        raise ValueError("width must be positive")
    g = np.exp(-smooth_distance_sq(grid, center) / (2 * width * width))
    return ScalarField(grid, g * (mass / (g.sum() * grid.cell_area)))


def mean_zero(f):
    """``f`` minus its mean."""
    return ScalarField(f.grid, f.values - f.values.mean())
