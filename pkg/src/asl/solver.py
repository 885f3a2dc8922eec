"""Pseudospectral time integration of the two active scalar model classes.

Type 1 (conservative):  rho_t + div(rho V rho) = Delta A(rho)
Type 2 (advective):     rho_t + V rho . grad rho = -nu (-Delta)^gamma rho

Both use fourth-order Runge-Kutta in integrating-factor (Lawson) form: linear
dissipation is integrated exactly, transport and nonlinear diffusion
explicitly. Products are formed from 2/3-truncated coefficients and truncated
again, so quadratic terms are alias-free.
"""

from dataclasses import dataclass
import io
import math

import numpy as np

from . import norms
from .spectral import ScalarField, TorusGrid, VectorField
from .velocity import VelocityLaw, symbol_divergence

CFL_LIMIT = 0.5
MAX_HALVINGS = 12
DIVFREE_TOL = 1e-10
DIFFUSION_KINDS = ("none", "linear", "porous")


class StepError(RuntimeError):
    """A step could not satisfy the stability limits even after halving."""


@dataclass(frozen=True)
class DiffusionSpec:
    """``A(rho)``: 0, ``nu rho`` or ``nu sign(rho) |rho|^m``."""

    kind: str = "none"
    nu: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        if self.kind not in DIFFUSION_KINDS:
            raise ValueError(f"unknown diffusion {self.kind!r}; expected one of {DIFFUSION_KINDS}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise ValueError(f"diffusion nu must be finite and >= 0, got {self.nu!r}")
        if not (math.isfinite(self.m) and self.m >= 1):
            raise ValueError(f"porous exponent m must be >= 1, got {self.m!r}")
        if self.kind == "none" and self.nu != 0:
            raise ValueError("diffusion 'none' takes no nu")

    @classmethod
    def linear(cls, nu):
        return cls("linear", nu)

    @classmethod
    def porous(cls, m, nu):
        return cls("porous", nu, m)

    def apply(self, values):
        """Pointwise ``A(values)``."""
        values = np.asarray(values, dtype=np.float64)
        if self.kind == "none":
            return np.zeros_like(values)
        if self.kind == "linear":
            return self.nu * values
        return self.nu * np.sign(values) * np.abs(values) ** self.m

    @property
    def active(self):
        return self.kind != "none" and self.nu > 0


def _check_common(grid, dt, t_end, initial, frozen_velocity):
    if not isinstance(grid, TorusGrid):
        raise TypeError("grid must be a TorusGrid")
    if initial.grid != grid:
        raise ValueError("initial field lives on a different grid")
    if not (math.isfinite(dt) and dt != 0):
        raise ValueError(f"dt must be finite and nonzero, got {dt!r}")
    if not math.isfinite(t_end):
        raise ValueError(f"t_end must be finite, got {t_end!r}")
    if t_end != 0 and (t_end > 0) != (dt > 0):
        raise ValueError("dt and t_end must have the same sign")
    if frozen_velocity is not None and frozen_velocity.grid != grid:
        raise ValueError("frozen velocity lives on a different grid")


@dataclass(frozen=True, eq=False)
class Type1Problem:
    law: VelocityLaw
    diffusion: DiffusionSpec
    grid: TorusGrid
    dt: float
    t_end: float
    initial: ScalarField
    frozen_velocity: VectorField = None  # overrides V rho when given

    def __post_init__(self):
        _check_common(self.grid, self.dt, self.t_end, self.initial, self.frozen_velocity)
        if self.dt < 0 and self.diffusion.active:
            raise ValueError("backward integration of a diffusive problem is ill-posed")


@dataclass(frozen=True, eq=False)
class Type2Problem:
    law: VelocityLaw
    nu: float
    gamma: float
    grid: TorusGrid
    dt: float
    t_end: float
    initial: ScalarField
    frozen_velocity: VectorField = None

    def __post_init__(self):
        _check_common(self.grid, self.dt, self.t_end, self.initial, self.frozen_velocity)
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise ValueError(f"nu must be finite and >= 0, got {self.nu!r}")
        if not (0 < self.gamma <= 1):
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if self.dt < 0 and self.nu > 0:
            raise ValueError("backward integration of a dissipative problem is ill-posed")
        if self.frozen_velocity is None:
            res = symbol_divergence(self.law, self.grid)
            if res > DIVFREE_TOL:
                raise ValueError(f"Type 2 needs a divergence-free law; {self.law.kind} has residual {res:.3e}")
        else:
            v = self.frozen_velocity
            g = self.grid
            half = slice(0, g.n // 2 + 1)
            div = sum(1j * g.kd[j][:, half] * np.fft.rfft2(v[j].values) for j in range(2))
            scale = max(np.abs(np.fft.rfft2(v[j].values)).max() for j in range(2)) * g.kabs.max()
            if scale > 0 and np.abs(div).max() > DIVFREE_TOL * scale:
                raise ValueError("frozen velocity is not divergence-free")


class Stepper:
    """Cached operators for one problem, acting on rfft2 half-spectra that use
    the same normalisation as :func:`asl.spectral.forward_transform`."""

    def __init__(self, prob):
        g = prob.grid
        self.grid = g
        self.problem = prob
        self.type1 = isinstance(prob, Type1Problem)
        half = slice(0, g.n // 2 + 1)
        self._shape = (g.n, g.n)
        self._scale = g.norm_factor
        self.kd = g.kd[:, :, half]
        self.k2 = g.k2[:, half]
        self.mask = g.dealias_mask[:, half]
        self.kmax2 = float(self.k2[self.mask].max())
        if self.type1:
            d = prob.diffusion
            self.porous = d if (d.kind == "porous" and d.active) else None
            rate = d.nu * self.k2 if d.kind == "linear" else np.zeros_like(self.k2)
        else:
            self.porous = None
            rate = prob.nu * g.kabs[:, half] ** (2.0 * prob.gamma)
        self.rate = rate if np.any(rate) else None
        if prob.frozen_velocity is not None:
            self.frozen = tuple(np.array(c.values) for c in prob.frozen_velocity)
            self.mult = None
        else:
            self.frozen = None
            self.mult = tuple(m[:, half] for m in prob.law.multiplier(g))
        self._factors = {}

    # -- transforms
    def to_hat(self, values):
        return np.fft.rfft2(values) * self._scale

    def to_real(self, hat):
        return np.fft.irfft2(hat / self._scale, s=self._shape)

    def field(self, hat):
        return ScalarField(self.grid, self.to_real(hat))

    def velocity(self, hat):
        if self.frozen is not None:
            return self.frozen
        return tuple(self.to_real(m * hat) for m in self.mult)

    # -- right-hand side
    def rhs(self, hat):
        """Explicit part of the equation; also the transport speed and max|rho|."""
        low = hat * self.mask
        rho = self.to_real(low)
        v1, v2 = self.velocity(low)
        if self.type1:
            out = -1j * (self.kd[0] * self.to_hat(rho * v1) + self.kd[1] * self.to_hat(rho * v2))
            if self.porous is not None:
                out -= self.k2 * self.to_hat(self.porous.apply(rho))
        else:
            g1 = self.to_real(1j * self.kd[0] * low)
            g2 = self.to_real(1j * self.kd[1] * low)
            out = -self.to_hat(v1 * g1 + v2 * g2)
        speed = float(np.sqrt(v1 * v1 + v2 * v2).max())
        return out * self.mask, speed, float(np.abs(rho).max())

    def _factor(self, dt):
        if self.rate is None:
            return 1.0, 1.0
        got = self._factors.get(dt)
        if got is None:
            e2 = np.exp(-self.rate * (dt / 2))
            got = (e2, e2 * e2)
            if len(self._factors) > 8:
                self._factors.clear()
            self._factors[dt] = got
        return got

    def limits(self, speed, rho_max, dt):
        """``(cfl, porous)`` stability numbers for a step of size ``dt``."""
        cfl = abs(dt) * speed / self.grid.h
        por = 0.0
        if self.porous is not None:
            d = self.porous
            por = d.nu * d.m * rho_max ** (d.m - 1) * self.kmax2 * abs(dt)
        return cfl, por

    def substep(self, hat, dt):
        """One Lawson RK4 step, or ``None`` if the stability limits fail."""
        k1, speed, rmax = self.rhs(hat)
        cfl, por = self.limits(speed, rmax, dt)
        if cfl > CFL_LIMIT or por > CFL_LIMIT:
            return None
        e2, e = self._factor(dt)
        k2 = self.rhs(e2 * (hat + dt / 2 * k1))[0]
        k3 = self.rhs(e2 * hat + dt / 2 * k2)[0]
        k4 = self.rhs(e * hat + dt * (e2 * k3))[0]
        out = e * hat + dt / 6 * (e * k1 + 2 * e2 * (k2 + k3) + k4)
        if not np.isfinite(out).all():
            return None
        return out

    def step(self, hat, dt, halvings=0):
        """Advance by exactly ``dt`` using ``2^j`` equal substeps, ``j >= halvings``
        the smallest level at which every substep is admissible."""
        (out,), level = self.step_joint([hat], dt, halvings)
        return out, level

    def step_joint(self, hats, dt, halvings=0):
        """Advance several states with one common substep sequence (twins must
        see identical time discretisations)."""
        start = max(halvings, self._required_level(hats, dt))
        for level in range(start, MAX_HALVINGS + 1):
            sub = dt / 2 ** level
            out = list(hats)
            for _ in range(2 ** level):
                for i in range(len(out)):
                    out[i] = self.substep(out[i], sub)
                    if out[i] is None:
                        break
                if out[i] is None:
                    break
            else:
                return out, level
        speed, rmax = 0.0, 0.0
        for h in hats:
            _, s, r = self.rhs(h)
            speed, rmax = max(speed, s), max(rmax, r)
        raise StepError(self._message(speed, rmax, dt))

    def _required_level(self, hats, dt):
        """Smallest level whose substep passes the limits at the initial states."""
        worst = 0.0
        for h in hats:
            _, speed, rmax = self.rhs(h)
            worst = max(worst, *self.limits(speed, rmax, dt))
        if not np.isfinite(worst):
            return MAX_HALVINGS
        if worst <= CFL_LIMIT:
            return 0
        return min(MAX_HALVINGS, math.ceil(math.log2(worst / CFL_LIMIT)))

    def _message(self, speed, rmax, dt):
        cfl, por = self.limits(speed, rmax, dt / 2 ** MAX_HALVINGS)
        msg = (f"step rejected: after {MAX_HALVINGS} halvings of dt = {dt!r} the CFL number is "
               f"{cfl:.3e} (max|v| = {speed:.3e}) and the porous number is {por:.3e}; limit {CFL_LIMIT}")
        if cfl <= CFL_LIMIT and por <= CFL_LIMIT:
            msg += ("; the limits hold, so the substeps produced non-finite values"
                    " (blow-up or loss of resolution)")
        return msg


def _single_step(state, prob, dt):
    if state.grid != prob.grid:
        raise ValueError("state lives on a different grid")
    st = Stepper(prob)
    hat, _ = st.step(st.to_hat(state.values), prob.dt if dt is None else dt)
    return st.field(hat)


def step_type1(state, prob, dt=None):
    """Advance a Type 1 state by ``dt`` (default ``prob.dt``)."""
    if not isinstance(prob, Type1Problem):
        raise TypeError("step_type1 needs a Type1Problem")
    return _single_step(state, prob, dt)


def step_type2(state, prob, dt=None):
    """Advance a Type 2 state by ``dt`` (default ``prob.dt``)."""
    if not isinstance(prob, Type2Problem):
        raise TypeError("step_type2 needs a Type2Problem")
    return _single_step(state, prob, dt)


# -- trajectories --------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticRow:
    t: float
    dt: float
    halvings: int
    mass: float
    l2: float
    linf: float
    enstrophy: float  # (1/2) ||rho||_2^2
    bmo: float = math.nan


@dataclass
class Trajectory:
    times: list
    snapshots: list
    diagnostics: list
    error: str = None

    @property
    def ok(self):
        return self.error is None

    @property
    def final(self):
        return self.snapshots[-1]

    def diagnostics_csv(self, with_bmo=False):
        return format_diagnostics_csv(self.diagnostics, with_bmo)


def _fmt(x):
    return repr(float(x))


def format_diagnostics_csv(rows, with_bmo=False):
    out = io.StringIO()
    out.write("t,mass,l2,linf,bmo\n" if with_bmo else "t,mass,l2,linf\n")
    for r in rows:
        cols = [r.t, r.mass, r.l2, r.linf] + ([r.bmo] if with_bmo else [])
        out.write(",".join(_fmt(c) for c in cols) + "\n")
    return out.getvalue()


def diagnose(f, t=0.0, dt=0.0, halvings=0, with_bmo=False):
    v = f.values
    l2 = norms.lp_norm(f, 2)
    return DiagnosticRow(
        t=float(t), dt=float(dt), halvings=int(halvings),
        mass=float(v.sum() * f.grid.cell_area), l2=l2, linf=float(np.abs(v).max()),
        enstrophy=0.5 * l2 * l2,
        bmo=norms.bmo_norm(f) if with_bmo else math.nan,
    )


def schedule_targets(t_end, schedule):
    """Snapshot times after 0, validated and ending at ``t_end``."""
    if t_end == 0:
        if schedule:
            raise ValueError("t_end = 0 admits no snapshot times")
        return []
    targets = [float(t) for t in (schedule if schedule is not None else [t_end])]
    sign = 1.0 if t_end > 0 else -1.0
    prev = 0.0
    for t in targets:
        if not sign * prev < sign * t <= sign * t_end:
            raise ValueError(f"snapshot time {t!r} out of order or outside (0, {t_end}]")
        prev = t
    return targets


def time_steps(start, target, dt):
    """Yield ``(dt_k, t_k)`` stepping from start to target: full steps of
    ``dt`` counted from ``start`` (no drift), then one step landing exactly.
    A remainder within rounding of ``dt`` is taken as the landing step."""
    count = 0
    t = start
    while True:
        remaining = target - t
        if abs(remaining) <= abs(dt) * (1 + 1e-9):
            yield remaining, target
            return
        count += 1
        t = start + count * dt
        yield dt, t


def run(prob, schedule=None, with_bmo=False):
    """Integrate ``prob`` to ``t_end``, recording a diagnostic row per step and
    a snapshot at 0 and at every schedule time (default: ``t_end`` only)."""
    targets = schedule_targets(prob.t_end, schedule)
    st = Stepper(prob)
    hat = st.to_hat(prob.initial.values)
    rows = [diagnose(prob.initial, with_bmo=with_bmo)]
    traj = Trajectory(times=[0.0], snapshots=[prob.initial], diagnostics=rows)
    t = 0.0
    for target in targets:
        for dt, t_next in time_steps(t, target, prob.dt):
            try:
                hat, level = st.step(hat, dt)
            except StepError as exc:
                traj.error = f"t = {t!r}: {exc}"
                return traj
            t = t_next
            rows.append(diagnose(st.field(hat), t, dt, level, with_bmo))
        t = target
        traj.times.append(target)
        traj.snapshots.append(st.field(hat))
    return traj
