import math

import numpy as np
import pytest

from asl import norms
from asl.initial import gaussian_bump, smooth_random
from asl.spectral import ScalarField, TorusGrid
from asl.solver import (
    DiffusionSpec,
    Stepper,
    StepError,
    Type1Problem,
    Type2Problem,
    format_diagnostics_csv,
    run,
    step_type1,
    step_type2,
    time_steps,
)
from asl.velocity import VelocityLaw, apply_velocity

NONE = VelocityLaw("none")
BS = VelocityLaw("biot_savart")
SQG = VelocityLaw("sqg")
NEWTON = VelocityLaw("newtonian_attractive")


def interpolant_sup(f, factor=8):
    """Sup of the trigonometric interpolant, sampled on a grid ``factor`` finer."""
    n = f.grid.n
    F = np.fft.fftshift(np.fft.fft2(f.values))
    big = np.zeros((factor * n, factor * n), dtype=complex)
    lo = (factor * n - n) // 2
    big[lo:lo + n, lo:lo + n] = F
    return float(np.abs(np.fft.ifft2(np.fft.ifftshift(big)).real).max()) * factor * factor


def type2(law, f, nu=0.0, gamma=1.0, dt=0.02, t_end=1.0, **kw):
    return Type2Problem(law, nu, gamma, f.grid, dt, t_end, f, **kw)


def type1(law, diffusion, f, dt=0.02, t_end=1.0, **kw):
    return Type1Problem(law, diffusion, f.grid, dt, t_end, f, **kw)


class TestDiffusionSpec:
    def test_values(self):
        x = np.array([-2.0, 0.0, 3.0])
        assert np.array_equal(DiffusionSpec().apply(x), np.zeros(3))
        assert np.array_equal(DiffusionSpec.linear(0.5).apply(x), 0.5 * x)
        assert np.array_equal(DiffusionSpec.porous(2, 1.0).apply(x), [-4.0, 0.0, 9.0])

    def test_monotone(self):
        x = np.linspace(-3, 3, 101)
        for spec in (DiffusionSpec.linear(0.1), DiffusionSpec.porous(3, 0.2)):
            assert np.all(np.diff(spec.apply(x)) >= 0)

    @pytest.mark.parametrize("args", [("heat", 1.0), ("linear", -1.0), ("porous", 1.0, 0.5), ("none", 0.3)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            DiffusionSpec(*args)


class TestProblems:
    def test_type2_rejects_gradient_law(self):
        g = TorusGrid(16)
        with pytest.raises(ValueError, match="divergence-free"):
            type2(NEWTON, ScalarField.zeros(g))

    @pytest.mark.parametrize("gamma", [0.0, 1.5])
    def test_gamma_range(self, gamma):
        with pytest.raises(ValueError, match="gamma"):
            type2(SQG, ScalarField.zeros(TorusGrid(16)), gamma=gamma)

    def test_backward_dissipative_rejected(self):
        f = ScalarField.zeros(TorusGrid(16))
        with pytest.raises(ValueError, match="ill-posed"):
            type2(SQG, f, nu=0.1, dt=-0.1, t_end=-1.0)
        with pytest.raises(ValueError, match="ill-posed"):
            type1(NONE, DiffusionSpec.linear(0.1), f, dt=-0.1, t_end=-1.0)

    def test_sign_mismatch(self):
        with pytest.raises(ValueError, match="same sign"):
            type2(SQG, ScalarField.zeros(TorusGrid(16)), dt=0.1, t_end=-1.0)

    def test_frozen_velocity_must_be_divergence_free(self):
        g = TorusGrid(32)
        v = apply_velocity(NEWTON, smooth_random(g, seed=1))
        with pytest.raises(ValueError, match="frozen"):
            type2(BS, smooth_random(g), frozen_velocity=v)


class TestStepType1:
    @pytest.mark.parametrize("law", [BS, SQG, NEWTON])
    def test_constant_is_steady(self, law):
        g = TorusGrid(32)
        c = ScalarField(g, np.full((32, 32), 1.7))
        prob = type1(law, DiffusionSpec.porous(2, 0.1), c)
        assert np.array_equal(step_type1(c, prob).values, c.values)

    def test_heat_eigenmode(self):
        g = TorusGrid(32)
        X, _ = g.mesh
        nu = 0.7
        f = ScalarField(g, np.sin(X))
        traj = run(type1(NONE, DiffusionSpec.linear(nu), f, dt=0.1))
        exact = math.exp(-nu) * np.sin(X)
        assert np.abs(traj.final.values - exact).max() <= 1e-6 * math.exp(-nu)

    def test_mass_conserved_per_step(self):
        g = TorusGrid(64)
        rho = gaussian_bump(g, (3.0, 3.0), 0.6, mass=2.0)
        prob = type1(NEWTON, DiffusionSpec.porous(2, 0.02), rho, dt=0.01)
        mass0 = rho.integral()
        state = rho
        for _ in range(5):
            state = step_type1(state, prob)
            assert abs(state.integral() - mass0) <= 1e-12 * abs(mass0)

    def test_porous_l2_non_increasing(self):
        g = TorusGrid(64)
        rho = ScalarField(g, 1.0 + 0.5 * smooth_random(g, seed=5, kmax=6).values)
        traj = run(type1(NONE, DiffusionSpec.porous(2, 0.05), rho, dt=0.01, t_end=0.5))
        l2 = np.array([r.l2 for r in traj.diagnostics])
        assert np.all(np.diff(l2) <= 1e-14)

    def test_porous_matches_linear_for_m1(self):
        g = TorusGrid(32)
        f = smooth_random(g, seed=2, kmax=5)
        a = run(type1(NONE, DiffusionSpec.porous(1, 0.1), f, dt=0.005, t_end=0.2)).final
        b = run(type1(NONE, DiffusionSpec.linear(0.1), f, dt=0.005, t_end=0.2)).final
        assert np.abs(a.values - b.values).max() < 1e-8

    def test_porous_halving_recorded(self):
        g = TorusGrid(64)
        rho = gaussian_bump(g, (3.0, 3.0), 0.5, mass=4.0)
        traj = run(type1(NONE, DiffusionSpec.porous(2, 0.5), rho, dt=0.01, t_end=0.02))
        assert traj.ok and traj.diagnostics[1].halvings > 0


class TestStepType2:
    def test_sqg_single_mode_conserves_l2(self):
        g = TorusGrid(32)
        X, _ = g.mesh
        f = ScalarField(g, np.cos(X))
        traj = run(type2(SQG, f))
        assert abs(traj.diagnostics[-1].l2 - traj.diagnostics[0].l2) <= 1e-8 * traj.diagnostics[0].l2

    def test_fractional_decay(self):
        g = TorusGrid(32)
        X, _ = g.mesh
        nu = 0.3
        f = ScalarField(g, np.cos(2 * X))
        out = run(type2(NONE, f, nu=nu, gamma=0.5, dt=0.1)).final
        assert np.abs(out.values - math.exp(-2 * nu) * f.values).max() < 1e-13

    def test_euler_enstrophy(self):
        g = TorusGrid(64)
        w = smooth_random(g, seed=1, kmax=6, amplitude=2.0)
        traj = run(type2(BS, w, dt=0.01))
        e0 = traj.diagnostics[0].enstrophy
        assert max(abs(r.enstrophy - e0) for r in traj.diagnostics) <= 1e-6 * e0

    def test_euler_converges_in_dt(self):
        # refined-dt oracle: RK4 error shrinks ~16x when dt halves
        g = TorusGrid(64)
        w = smooth_random(g, seed=1, kmax=6, amplitude=3.0)
        ref = run(type2(BS, w, dt=0.0025, t_end=0.5)).final.values
        e1 = np.abs(run(type2(BS, w, dt=0.02, t_end=0.5)).final.values - ref).max()
        e2 = np.abs(run(type2(BS, w, dt=0.01, t_end=0.5)).final.values - ref).max()
        assert e2 < e1 / 10

    @pytest.mark.parametrize("law", [BS, SQG])
    def test_lp_non_increasing_inviscid(self, law):
        # grid samples can miss the sup; compare the sup of the interpolant
        g = TorusGrid(64)
        f = smooth_random(g, seed=3, kmax=5, amplitude=2.0)
        traj = run(type2(law, f, dt=0.01, t_end=0.5), schedule=[0.1, 0.2, 0.3, 0.4, 0.5])
        for r in traj.diagnostics:
            assert r.l2 <= traj.diagnostics[0].l2 * (1 + 1e-4)
        sup0 = interpolant_sup(f)
        for snap in traj.snapshots:
            assert interpolant_sup(snap) <= sup0 * (1 + 1e-4)

    def test_time_reversal_frozen(self):
        g = TorusGrid(64)
        v = apply_velocity(BS, smooth_random(g, seed=3, kmax=5))
        rho = smooth_random(g, seed=4, kmax=5)
        fwd = run(type2(BS, rho, dt=0.02, frozen_velocity=v)).final
        back = run(type2(BS, fwd, dt=-0.02, t_end=-1.0, frozen_velocity=v)).final
        assert np.abs(back.values - rho.values).max() < 1e-6

    def test_resolution_doubling(self):
        def final_l2(n):
            g = TorusGrid(n)
            f = smooth_random(g, seed=2, kmax=4, amplitude=2.0)
            return run(type2(SQG, f, nu=0.05, gamma=0.5, dt=0.01)).diagnostics[-1].l2
        assert abs(final_l2(64) - final_l2(128)) < 1e-6

    def test_step_rejects_other_problem(self):
        g = TorusGrid(16)
        f = ScalarField.zeros(g)
        with pytest.raises(TypeError):
            step_type2(f, type1(NONE, DiffusionSpec(), f))


class TestRun:
    def test_t_end_zero(self):
        f = smooth_random(TorusGrid(16), seed=0, kmax=4)
        traj = run(type2(SQG, f, t_end=0.0))
        assert traj.times == [0.0] and len(traj.snapshots) == 1 and len(traj.diagnostics) == 1

    def test_schedule_lands_exactly(self):
        f = smooth_random(TorusGrid(32), seed=0, kmax=4)
        traj = run(type2(SQG, f, dt=0.03, t_end=1.0), schedule=[0.1, 0.55, 1.0])
        assert traj.times == [0.0, 0.1, 0.55, 1.0]
        assert len(traj.snapshots) == 4
        ts = [r.t for r in traj.diagnostics]
        assert all(b > a for a, b in zip(ts, ts[1:]))
        assert {0.1, 0.55, 1.0} <= set(ts)
        assert max(r.dt for r in traj.diagnostics) <= 0.03 * (1 + 1e-9)

    @pytest.mark.parametrize("schedule", [[0.5, 0.2], [1.5], [0.0]])
    def test_bad_schedule(self, schedule):
        f = smooth_random(TorusGrid(16), seed=0, kmax=4)
        with pytest.raises(ValueError):
            run(type2(SQG, f), schedule=schedule)

    def test_time_steps_no_drift(self):
        steps = list(time_steps(0.0, 1.0, 0.1))
        assert len(steps) == 10 and steps[-1][1] == 1.0

    def test_deterministic_csv(self):
        g = TorusGrid(32)
        f = smooth_random(g, seed=7, kmax=5)
        a = run(type2(BS, f), with_bmo=True).diagnostics_csv(with_bmo=True)
        b = run(type2(BS, f), with_bmo=True).diagnostics_csv(with_bmo=True)
        assert a == b
        assert a.splitlines()[0] == "t,mass,l2,linf,bmo"

    def test_csv_header(self):
        assert format_diagnostics_csv([]) == "t,mass,l2,linf\n"

    def test_step_error_gives_partial_trajectory(self, monkeypatch):
        g = TorusGrid(32)
        f = smooth_random(g, seed=7, kmax=5)
        calls = {"n": 0}
        real = Stepper.step

        def failing(self, hat, dt, halvings=0):
            calls["n"] += 1
            if calls["n"] > 3:
                raise StepError("forced")
            return real(self, hat, dt, halvings)

        monkeypatch.setattr(Stepper, "step", failing)
        traj = run(type2(BS, f, dt=0.1))
        assert not traj.ok and "forced" in traj.error
        assert len(traj.diagnostics) == 4

    def test_unresolvable_step(self):
        g = TorusGrid(16)
        X, _ = g.mesh
        huge = ScalarField(g, 1e12 * np.sin(X + 0.3) * np.cos(2 * X))
        st = Stepper(type2(BS, huge, dt=1.0))
        with pytest.raises(StepError, match="CFL"):
            st.step(st.to_hat(huge.values), 1e3)

    def test_norm_diagnostics_match_norms_module(self):
        g = TorusGrid(32)
        f = smooth_random(g, seed=9, kmax=5)
        row = run(type2(SQG, f, t_end=0.0)).diagnostics[0]
        assert row.l2 == norms.lp_norm(f, 2)
        assert row.linf == norms.lp_norm(f, math.inf)
