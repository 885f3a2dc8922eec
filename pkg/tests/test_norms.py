import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asl import norms
from asl.initial import gaussian_bump, mollified_log, smooth_random
from asl.spectral import ScalarField, TorusGrid, VectorField, spectral_gradient


def random_field(grid, seed):
    return ScalarField(grid, np.random.default_rng(seed).standard_normal((grid.n, grid.n)))


def brute_bmo(values, max_depth):
    """Explicit loops over every cube of the anchored and shifted lattices."""
    n = values.shape[0]
    best = 0.0
    for ox, oy in norms.dyadic_offsets(n):
        for j in range(max_depth + 1):
            s = n >> j
            if s < 2:
                break
            for a in range(0, n, s):
                for b in range(0, n, s):
                    ii = (np.arange(a, a + s) + ox) % n
                    jj = (np.arange(b, b + s) + oy) % n
                    block = values[np.ix_(ii, jj)]
                    best = max(best, float(np.abs(block - block.mean()).mean()))
    return best


class TestLp:
    @pytest.mark.parametrize("p", [1, 2, 3.5, 10, math.inf])
    def test_constant(self, p):
        g = TorusGrid(16)
        f = ScalarField(g, np.full((16, 16), -3.0))
        expected = 3.0 if math.isinf(p) else 3.0 * g.length ** (2 / p)
        assert norms.lp_norm(f, p) == pytest.approx(expected, rel=1e-13)

    def test_sine_l2(self):
        g = TorusGrid(64)
        f = ScalarField.from_function(g, lambda X, Y: np.sin(X))
        assert norms.lp_norm(f, 2) == pytest.approx(math.pi * math.sqrt(2), rel=1e-13)

    def test_rejects_small_p(self):
        with pytest.raises(ValueError):
            norms.lp_norm(ScalarField.zeros(TorusGrid(16)), 0.5)

    def test_large_p_does_not_overflow(self):
        g = TorusGrid(16)
        f = ScalarField(g, np.full((16, 16), 1e3))
        assert norms.lp_norm(f, 400) == pytest.approx(1e3 * g.area ** (1 / 400))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.sampled_from([1, 2, 4, 8, 64]))
    def test_holder_bound(self, seed, p):
        g = TorusGrid(16)
        f = random_field(g, seed)
        assert norms.lp_norm(f, p) <= norms.lp_norm(f, math.inf) * g.length ** (2 / p) * (1 + 1e-12)

    def test_monotone_in_p_on_unit_torus(self):
        g = TorusGrid(32, length=1.0)
        f = random_field(g, 0)
        vals = [norms.lp_norm(f, p) for p in (1, 2, 4, 8, 16, 32, 64, math.inf)]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))

    def test_vector_uses_euclidean_length(self):
        g = TorusGrid(16)
        v = VectorField((ScalarField(g, np.full((16, 16), 3.0)), ScalarField(g, np.full((16, 16), 4.0))))
        assert norms.lp_norm(v, math.inf) == 5.0


class TestSobolev:
    def test_h1_of_sine_equals_gradient_norm(self):
        g = TorusGrid(32)
        f = ScalarField.from_function(g, lambda X, Y: np.sin(X))
        assert norms.sobolev_norm(f, 1) == pytest.approx(norms.lp_norm(spectral_gradient(f), 2), rel=1e-12)

    def test_hminus1_of_sin2x(self):
        g = TorusGrid(32)
        f = ScalarField.from_function(g, lambda X, Y: np.sin(2 * X))
        assert norms.sobolev_norm(f, -1) == pytest.approx(0.5 * norms.lp_norm(f, 2), rel=1e-12)

    def test_s0_is_l2(self):
        f = random_field(TorusGrid(32), 1)
        assert norms.sobolev_norm(f, 0) == pytest.approx(norms.lp_norm(f, 2), rel=1e-12)

    def test_negative_s_requires_mean_zero(self):
        g = TorusGrid(16)
        with pytest.raises(ValueError, match="mean-zero"):
            norms.sobolev_norm(ScalarField(g, np.ones((16, 16))), -1)

    @pytest.mark.parametrize("seed", range(10))
    def test_potential_identity(self, seed):
        w = smooth_random(TorusGrid(64), slope=1.0, seed=seed, kmax=21)
        val, _ = norms.hminus1_via_potential(w)
        assert val == pytest.approx(norms.sobolev_norm(w, -1), rel=1e-12)

    def test_potential_of_sine(self):
        g = TorusGrid(32)
        w = ScalarField.from_function(g, lambda X, Y: np.sin(X))
        val, grad = norms.hminus1_via_potential(w)
        assert np.abs(grad[0].values - np.cos(g.mesh[0])).max() < 1e-13
        assert val == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)

    def test_potential_of_zero(self):
        val, grad = norms.hminus1_via_potential(ScalarField.zeros(TorusGrid(16)))
        assert val == 0.0 and np.all(grad[0].values == 0)


class TestBMO:
    def test_constant_is_zero(self):
        assert norms.bmo_norm(ScalarField(TorusGrid(32), np.full((32, 32), 2.5)), 4) == 0.0

    def test_half_indicator(self):
        g = TorusGrid(32)
        v = np.zeros((32, 32))
        v[:16] = 1.0
        f = ScalarField(g, v)
        assert norms.bmo_norm(f, 4) == pytest.approx(0.5, abs=1e-15)
        assert brute_bmo(v, 4) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_brute_force(self, seed):
        f = random_field(TorusGrid(32), seed)
        assert norms.bmo_norm(f, 4) == pytest.approx(brute_bmo(f.values, 4), rel=1e-13)

    def test_truncated_log_stabilises(self):
        g = TorusGrid(256)
        c = (math.pi, math.pi)
        coarse, fine = (mollified_log(g, c, d) for d in (0.1, 0.025))
        b0, b1 = norms.bmo_norm(coarse), norms.bmo_norm(fine)
        assert abs(b1 - b0) <= 0.1 * b0
        assert norms.lp_norm(fine, math.inf) > norms.lp_norm(coarse, math.inf) + 1.0

    @pytest.mark.parametrize("depth", [0, 6])
    def test_depth_validation(self, depth):
        with pytest.raises(ValueError):
            norms.bmo_norm(random_field(TorusGrid(32), 0), depth)

    def test_dyadic_dilation(self):
        g = TorusGrid(32)
        f = random_field(g, 5)
        f2 = ScalarField(TorusGrid(64), np.tile(f.values, (2, 2)))
        assert norms.bmo_norm(f2, 5) == pytest.approx(norms.bmo_norm(f, 4), rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.floats(-50, 50), st.floats(-4, 4))
    def test_constants_scaling_and_sup(self, seed, c, lam):
        f = random_field(TorusGrid(16), seed)
        b = norms.bmo_norm(f, 3)
        assert norms.bmo_norm(f + c, 3) == pytest.approx(b, rel=1e-9, abs=1e-12)
        assert norms.bmo_norm(lam * f, 3) == pytest.approx(abs(lam) * b, rel=1e-12, abs=1e-300)
        assert b <= 2 * norms.lp_norm(f, math.inf)


class TestGrowthProfile:
    def test_constant(self):
        f = ScalarField(TorusGrid(32, length=1.0), np.full((32, 32), 2.0))
        prof = norms.lp_growth_profile(f, [4, 8, 16], 2)
        assert all(lhs == pytest.approx(2.0) for _, lhs, _ in prof.rows)
        assert prof.ratio == math.inf  # BMO vanishes, multiplicative rhs is 0
        assert math.isfinite(prof.ratio_additive)

    def test_log_norms_grow_at_most_linearly(self):
        f = mollified_log(TorusGrid(256), (1.0, 2.0), 0.01)
        per_p = [norms.lp_norm(f, p) / p for p in (4, 8, 16, 32, 64)]
        assert all(b <= a for a, b in zip(per_p[1:], per_p[2:]))
        assert max(per_p) < 10

    def test_dilation_keeps_ratio(self):
        g = TorusGrid(128)
        f = mollified_log(g, (2.0, 3.0), 0.05)
        small = f.values[::2, ::2]
        f2 = ScalarField(g, np.tile(small, (2, 2)))  # f(2x) on the same torus
        r1 = norms.lp_growth_profile(f, [4, 8, 16, 32, 64], 2).ratio
        r2 = norms.lp_growth_profile(f2, [4, 8, 16, 32, 64], 2).ratio
        assert r2 == pytest.approx(r1, rel=0.05)

    def test_p0_must_be_smallest(self):
        with pytest.raises(ValueError):
            norms.lp_growth_profile(random_field(TorusGrid(16), 0), [4, 8], 4)


class TestModulus:
    def test_constant_field(self):
        g = TorusGrid(64, 1.0)
        c = ScalarField(g, np.full((64, 64), 1.5))
        out = norms.log_lipschitz_modulus(VectorField((c, c)), [0.05, 0.1], 200, 0)
        assert all(s.ratio == 0 for s in out)

    def test_smooth_field_ratio_decays(self):
        g = TorusGrid(256, 1.0)
        w = 2 * math.pi
        v = VectorField((ScalarField.from_function(g, lambda X, Y: np.sin(w * Y)),
                         ScalarField.from_function(g, lambda X, Y: np.sin(w * X))))
        out = norms.log_lipschitz_modulus(v, [0.01, 0.1], 5000, 1)
        # Lipschitz field: ratio ~ const/|log r|
        assert out[0].ratio < out[1].ratio
        assert out[0].ratio * math.log(100) == pytest.approx(out[0].lipschitz * 1.0, rel=1e-12)

    def test_rejects_large_r(self):
        g = TorusGrid(64, 1.0)
        z = ScalarField.zeros(g)
        with pytest.raises(ValueError, match="1/e"):
            norms.log_lipschitz_modulus(VectorField((z, z)), [0.5], 200, 0)

    def test_rejects_subgrid_r(self):
        g = TorusGrid(64, 1.0)
        z = ScalarField.zeros(g)
        with pytest.raises(ValueError, match="grid spacing"):
            norms.log_lipschitz_modulus(VectorField((z, z)), [g.h], 200, 0)

    def test_deterministic(self):
        g = TorusGrid(64, 1.0)
        f = smooth_random(g, seed=3)
        v = VectorField((f, f))
        a = norms.log_lipschitz_modulus(v, [0.05], 500, 9)
        b = norms.log_lipschitz_modulus(v, [0.05], 500, 9)
        assert a == b


def mollified_disc(grid, center, radius, width):
    dx, dy = norms.centered_displacement(grid, center)
    r = np.hypot(dx, dy)
    return ScalarField(grid, 0.5 * (1 - np.tanh((r - radius) / width)) * (r < radius + 30 * width))


class TestFirstMoment:
    def test_zero(self):
        assert norms.first_moment(ScalarField.zeros(TorusGrid(16)), (1.0, 1.0)) == 0.0

    def test_disc(self):
        g = TorusGrid(512)
        R = 1.0
        f = mollified_disc(g, (3.0, 3.0), R, 0.005)
        assert norms.first_moment(f, (3.0, 3.0)) == pytest.approx(2 * math.pi * R ** 3 / 3, rel=2e-3)

    def test_grows_off_centroid(self):
        g = TorusGrid(128)
        f = gaussian_bump(g, (3.0, 3.0), 0.2)
        assert norms.first_moment(f, (3.4, 3.0)) > norms.first_moment(f, (3.0, 3.0))

    def test_support_at_boundary_rejected(self):
        g = TorusGrid(64)
        f = ScalarField.from_function(g, lambda X, Y: 1.0 + 0 * X)
        with pytest.raises(ValueError, match="support"):
            norms.first_moment(f, (math.pi, math.pi))


def log_kernel(grid, a, cap=8.0):
    """log|x - a| truncated below, normalised to dyadic BMO seminorm 1."""
    dx, dy = norms.centered_displacement(grid, a)
    v = np.maximum(np.log(np.hypot(dx, dy) + 1e-300), -cap)
    k = ScalarField(grid, v)
    return (1.0 / norms.bmo_norm(k)) * k


class TestHardy:
    def setup_method(self):
        self.grid = TorusGrid(128)
        g = self.grid
        d = gaussian_bump(g, (2.8, 3.1), 0.1) - gaussian_bump(g, (3.5, 3.3), 0.1)
        # equal masses, so the difference is mean-zero; drop the far-field tails
        self.f = ScalarField(g, np.where(np.abs(d.values) < 1e-13, 0.0, d.values))

    def kernels(self):
        return [log_kernel(self.grid, a) for a in [(1.0, 1.0), (3.0, 3.0), (3.2, 3.2), (5.0, 2.0)]]

    def test_pairing_bounded(self):
        pair, bound = norms.hardy_pairing_bound(self.f, self.kernels(), 2.0, center=(3.14, 3.2))
        assert 0 < pair <= 5 * bound

    def test_zero(self):
        pair, bound = norms.hardy_pairing_bound(ScalarField.zeros(self.grid), self.kernels(), 2.0)
        assert pair == 0.0 and bound == 0.0

    def test_kernel_scaling(self):
        k = self.kernels()[1]
        f = self.f
        p1, _ = norms.hardy_pairing_bound(f, [k], 2.0, center=(3.14, 3.2))
        p2, _ = norms.hardy_pairing_bound(f, [0.5 * k], 2.0, center=(3.14, 3.2))
        assert p2 == pytest.approx(0.5 * p1, rel=1e-12)

    def test_unnormalised_kernel_rejected(self):
        with pytest.raises(ValueError, match="normalise"):
            norms.hardy_pairing_bound(self.f, [3.0 * self.kernels()[0]], 2.0, center=(3.14, 3.2))

    def test_requires_mean_zero(self):
        with pytest.raises(ValueError, match="mean-zero"):
            norms.hardy_pairing_bound(gaussian_bump(self.grid, (3, 3), 0.1), self.kernels(), 2.0)


class TestReportCSV:
    def test_round_trip(self):
        f = smooth_random(TorusGrid(32), seed=0)
        reps = norms.norm_reports(f)
        text = norms.format_norm_csv(reps)
        assert text.splitlines()[0] == "name,p_or_s,depth,value"
        back = norms.parse_norm_csv(text)
        assert [r.value for r in back] == [r.value for r in reps]

    def test_negative_value_rejected(self):
        with pytest.raises(ValueError):
            norms.NormReport("lp", -1.0)
