import math

import numpy as np
import pytest

from asl import norms
from asl.initial import mollified_log, mean_zero, smooth_random
from asl.spectral import ScalarField, TorusGrid, spectral_divergence, spectral_gradient
from asl.velocity import (
    VelocityLaw,
    apply_velocity,
    check_conditions,
    load_custom,
    velocity_gradient,
    write_custom,
)

BS = VelocityLaw("biot_savart")
SQG = VelocityLaw("sqg")
NEWTON = VelocityLaw("newtonian_attractive")


def corpus(grid, count=4):
    fields = [smooth_random(grid, slope=s, seed=i, kmax=grid.n // 4) for i, s in enumerate([1.0, 1.5, 2.0, 2.5][:count])]
    fields.append(mean_zero(mollified_log(grid, (2.0, 4.0), 0.1)))
    return fields


class TestLaws:
    def test_biot_savart_on_product_mode(self):
        g = TorusGrid(32)
        X, Y = g.mesh
        w = ScalarField(g, np.sin(X) * np.sin(Y))
        v = apply_velocity(BS, w)
        # psi = Delta^-1 w = -w/2, v = (-psi_y, psi_x)
        assert np.abs(v[0].values - 0.5 * np.sin(X) * np.cos(Y)).max() < 1e-14
        assert np.abs(v[1].values + 0.5 * np.cos(X) * np.sin(Y)).max() < 1e-14

    def test_biot_savart_curl_recovers_vorticity(self):
        g = TorusGrid(64)
        w = smooth_random(g, seed=1, kmax=20)
        v = apply_velocity(BS, w)
        curl = spectral_gradient(v[1])[0].values - spectral_gradient(v[0])[1].values
        assert np.abs(curl - w.values).max() < 1e-12 * np.abs(w.values).max()

    def test_sqg_single_mode(self):
        g = TorusGrid(32)
        X, _ = g.mesh
        v = apply_velocity(SQG, ScalarField(g, np.cos(X)))
        assert np.abs(v[0].values).max() < 1e-14
        assert np.abs(v[1].values + np.sin(X)).max() < 1e-14

    def test_newtonian_is_minus_grad_inverse_laplacian(self):
        g = TorusGrid(32)
        X, _ = g.mesh
        v = apply_velocity(NEWTON, ScalarField(g, np.cos(2 * X)))
        # Delta^-1 cos 2x = -cos(2x)/4 ; -grad of it = (-sin(2x)/2, 0)
        assert np.abs(v[0].values + 0.5 * np.sin(2 * X)).max() < 1e-14
        rep = apply_velocity(VelocityLaw("newtonian_attractive", repulsive=True), ScalarField(g, np.cos(2 * X)))
        assert np.array_equal(rep[0].values, -v[0].values)

    @pytest.mark.parametrize("law", [BS, SQG, NEWTON, VelocityLaw("none")])
    def test_zero_density(self, law):
        v = apply_velocity(law, ScalarField.zeros(TorusGrid(16)))
        assert np.all(v[0].values == 0) and np.all(v[1].values == 0)

    def test_constant_density_has_no_velocity(self):
        g = TorusGrid(16)
        for law in (BS, SQG, NEWTON):
            v = apply_velocity(law, ScalarField(g, np.full((16, 16), 2.0)))
            assert np.abs(v[0].values).max() == 0

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown"):
            VelocityLaw("stokes")

    def test_from_string(self):
        assert VelocityLaw.from_string(" sqg ").kind == "sqg"


class TestGradient:
    def test_trace_free_on_single_mode(self):
        g = TorusGrid(32)
        X, Y = g.mesh
        grad = velocity_gradient(BS, ScalarField(g, np.cos(X + 2 * Y)))
        assert np.abs(grad[0][0].values + grad[1][1].values).max() < 1e-14

    def test_sqg_gradient_scales_with_wavenumber(self):
        g = TorusGrid(32)
        rho = ScalarField.from_function(g, lambda X, Y: np.cos(2 * X))
        v = apply_velocity(SQG, rho)
        grad = velocity_gradient(SQG, rho)
        gl2 = math.sqrt(sum(norms.lp_norm(grad[i][j], 2) ** 2 for i in range(2) for j in range(2)))
        assert gl2 == pytest.approx(2 * norms.lp_norm(v, 2), rel=1e-12)

    @pytest.mark.parametrize("law", [BS, SQG, NEWTON])
    def test_matches_composition(self, law):
        rho = smooth_random(TorusGrid(64), seed=4, kmax=21)
        v = apply_velocity(law, rho)
        grad = velocity_gradient(law, rho)
        for j in range(2):
            gj = spectral_gradient(v[j])
            for i in range(2):
                assert np.abs(grad[i][j].values - gj[i].values).max() < 1e-12 * max(1.0, np.abs(gj[i].values).max())

    @pytest.mark.parametrize("law", [BS, SQG])
    def test_divergence_free(self, law):
        for f in corpus(TorusGrid(64)):
            div = spectral_divergence(apply_velocity(law, f))
            assert norms.lp_norm(div, 2) <= 1e-12 * norms.lp_norm(f, 2)

    def test_linearity(self):
        g = TorusGrid(32)
        f, h = smooth_random(g, seed=1), smooth_random(g, seed=2)
        a, b = 1.7, -0.4
        lhs = apply_velocity(SQG, a * f + b * h)
        vf, vh = apply_velocity(SQG, f), apply_velocity(SQG, h)
        for j in range(2):
            assert np.abs(lhs[j].values - (a * vf[j].values + b * vh[j].values)).max() < 1e-12


class TestConditions:
    def test_biot_savart_c3(self):
        rep = check_conditions(BS, corpus(TorusGrid(64)))
        assert rep.analytic_c3 == pytest.approx(1.0, abs=1e-12)
        assert rep.c3_ok
        assert rep.c3_ratio <= 1 + 1e-10
        assert rep.divfree_residual < 1e-12

    def test_newtonian_c3(self):
        rep = check_conditions(NEWTON, corpus(TorusGrid(64)))
        assert rep.c3_ok and rep.c3_ratio <= 1 + 1e-10

    def test_sqg_fails_c3_passes_l2(self):
        rep = check_conditions(SQG, corpus(TorusGrid(64)))
        assert not rep.c3_ok
        assert rep.l2_ok
        assert rep.analytic_l2 == pytest.approx(1.0, abs=1e-12)
        assert rep.l2_ratio <= 1 + 1e-12

    @pytest.mark.parametrize("law", [BS, SQG])
    def test_c2_surrogate_stable_under_refinement(self, law):
        # same band-limited corpus on n and 2n
        def ratio(n):
            g = TorusGrid(n)
            fields = [smooth_random(g, slope=s, seed=i, kmax=10) for i, s in enumerate([1.0, 2.0])]
            return check_conditions(law, fields).c2_lp_ratio
        a, b = ratio(64), ratio(128)
        assert math.isfinite(a) and b == pytest.approx(a, rel=0.2)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            check_conditions(BS, [])


class TestCustom:
    def test_round_trip_matches_builtin(self, tmp_path):
        g = TorusGrid(16)
        m1, m2 = SQG.multiplier(g)
        table = [(int(g.index[0, a, b]), int(g.index[1, a, b]), complex(m1[a, b]), complex(m2[a, b]))
                 for a in range(16) for b in range(16)]
        path = tmp_path / "m.csv"
        write_custom(path, table)
        law = VelocityLaw.from_string(f"custom:{path}")
        f = smooth_random(g, seed=0, kmax=5)
        assert np.allclose(apply_velocity(law, f)[1].values, apply_velocity(SQG, f)[1].values, atol=1e-14)

    def test_non_hermitian_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("kx,ky,re_m1,im_m1,re_m2,im_m2\n1,0,0,1,0,0\n-1,0,0,1,0,0\n")
        with pytest.raises(ValueError, match="Hermitian"):
            load_custom(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("a,b\n")
        with pytest.raises(ValueError, match="header"):
            load_custom(path)
