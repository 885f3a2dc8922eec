"""Twin-solution experiments: evolve two solutions side by side, track their
distance in H^-1 or L^2, and check the differential and exponential envelopes
that drive the uniqueness and stability estimates.

Envelope protocol. With ``X(t)`` the squared distance and ``B(t)`` the
measured bracket of norms for the chosen estimate, the inequality is

    X'(t) <= C B(t) X(t)^(1 - 1/p).

``C`` is fitted by least squares on the centred-difference derivative over
the times where it is positive, the inequality is checked pointwise with
``slack * C``, and the envelope integrand is ``f = slack * C * B / p``, so
that the integrated form reads ``X(t)^(1/p) - X(0)^(1/p) <= int_0^t f``.
"""

from dataclasses import dataclass, field
import io
import json
import math

import numpy as np

from . import norms
from .initial import smooth_random
from .solver import StepError, Stepper, Type1Problem, Type2Problem, time_steps
from .spectral import ScalarField, check_mean_zero, inverse_laplacian, spectral_gradient
from .velocity import apply_velocity, velocity_gradient

METRICS = ("hminus1", "l2")
DEFAULT_SLACK = 3.0
DEFAULT_FRACTION = 0.99
MAX_STRIDE = 10
DIMENSION = 2


@dataclass(frozen=True)
class Perturbation:
    """Mean-zero random perturbation scaled to ``amplitude`` in the twin metric."""

    amplitude: float
    slope: float = 2.0
    kmax: int = 8
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError(f"perturbation amplitude must be finite and >= 0, got {self.amplitude!r}")

    def field(self, grid, metric):
        base = smooth_random(grid, slope=self.slope, seed=self.seed, kmax=self.kmax)
        size = norms.sobolev_norm(base, -1) if metric == "hminus1" else norms.lp_norm(base, 2)
        return ScalarField(grid, base.values * (self.amplitude / size))


@dataclass(frozen=True, eq=False)
class TwinRun:
    problem: object  # Type1Problem or Type2Problem
    rho1_0: ScalarField
    rho2_0: ScalarField
    metric: str = "l2"
    perturbation: Perturbation = None
    stride: int = 1  # diagnostic interval in steps

    def __post_init__(self):
        if not isinstance(self.problem, (Type1Problem, Type2Problem)):
            raise TypeError("twin problem must be a Type1Problem or Type2Problem")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        g = self.problem.grid
        if self.rho1_0.grid != g or self.rho2_0.grid != g:
            raise ValueError("twin initials must live on the problem grid")
        if not 1 <= self.stride <= MAX_STRIDE:
            raise ValueError(f"diagnostic stride must lie in [1, {MAX_STRIDE}] steps")
        w = twin_difference(self.rho1_0, self.rho2_0)
        if self.metric == "hminus1" or isinstance(self.problem, Type1Problem):
            # equal masses; mean-zero difference
            check_mean_zero(w, "twin difference")

    @classmethod
    def perturbed(cls, problem, perturbation, metric="l2", stride=1):
        """Twins ``rho1 = initial`` and ``rho2 = initial + perturbation``."""
        dw = perturbation.field(problem.grid, metric)
        return cls(problem, problem.initial, problem.initial + dw, metric, perturbation, stride)


@dataclass
class EnvelopeVerdict:
    kind: str
    p: float
    fitted_C: float
    slack: float
    fraction_ok: float
    ok: bool
    integrated_ok: bool
    status: str  # pass | fail | inconclusive
    rows: list   # (t, distance, f, lhs, rhs, ok)
    exponent_r: float = math.nan
    q: float = math.nan
    extra: dict = field(default_factory=dict)


@dataclass
class StabilityReport:
    times: np.ndarray
    distance: np.ndarray
    metric: str
    states: list  # (rho1, rho2) at every diagnostic time
    problem: object
    meta: dict
    error: str = None
    f_series: np.ndarray = None
    p_used: float = None
    envelope_ok: bool = None
    fitted_C: float = None
    contraction_ok: bool = None
    eps0_estimate: float = None
    verdicts: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def series(self, key, fn):
        """``fn(rho1, rho2)`` over the diagnostic times, cached under ``key``."""
        got = self._cache.get(key)
        if got is None:
            got = np.array([fn(a, b) for a, b in self.states], dtype=np.float64)
            self._cache[key] = got
        return got

    def record(self, verdict):
        if self.error is not None:
            # the verdict only covers the times reached before the step failure
            verdict.extra["truncated"] = self.error
        self.verdicts[f"{verdict.kind}:p={verdict.p:g}:q={verdict.q:g}"] = verdict
        self.f_series = np.array([r[2] for r in verdict.rows])
        self.p_used = verdict.p
        self.envelope_ok = verdict.ok and verdict.integrated_ok
        self.fitted_C = verdict.fitted_C


MEAN_ROUNDING = 1e-12


def twin_difference(a, b):
    """``a - b`` with its mean removed when that mean is rounding noise of the
    states themselves (twins of equal mass differ by a mean-zero field)."""
    w = a.values - b.values
    mean = float(w.mean())
    scale = float(np.abs(a.values).max() + np.abs(b.values).max())
    if mean != 0 and abs(mean) <= MEAN_ROUNDING * scale:
        w = w - mean
    return ScalarField(a.grid, w)


def twin_distance(w, metric):
    if metric == "hminus1":
        return norms.sobolev_norm(w, -1)
    return norms.lp_norm(w, 2)


def _meta(spec):
    prob = spec.problem
    m = {
        "n": prob.grid.n, "length": prob.grid.length, "dt": prob.dt, "t_end": prob.t_end,
        "law": prob.law.kind, "metric": spec.metric, "stride": spec.stride,
        "type": 1 if isinstance(prob, Type1Problem) else 2,
    }
    if isinstance(prob, Type1Problem):
        m.update(diffusion=prob.diffusion.kind, nu=prob.diffusion.nu, m=prob.diffusion.m)
    else:
        m.update(nu=prob.nu, gamma=prob.gamma)
    if spec.perturbation is not None:
        p = spec.perturbation
        m.update(eps=p.amplitude, slope=p.slope, kmax=p.kmax, seed=p.seed)
    return m


def run_twin(spec):
    """Evolve both twins with one stepper and common substeps; record the
    distance and both states every ``stride`` steps and at ``t_end``."""
    prob = spec.problem
    st = Stepper(prob)
    h1 = st.to_hat(spec.rho1_0.values)
    h2 = st.to_hat(spec.rho2_0.values)
    states = [(spec.rho1_0, spec.rho2_0)]
    times = [0.0]
    error = None
    steps = list(time_steps(0.0, prob.t_end, prob.dt)) if prob.t_end != 0 else []
    for k, (dt, t) in enumerate(steps, start=1):
        try:
            (h1, h2), _ = st.step_joint([h1, h2], dt)
        except StepError as exc:
            error = f"t = {t!r}: {exc}"
            break
        if k % spec.stride == 0 or k == len(steps):
            states.append((st.field(h1), st.field(h2)))
            times.append(t)
    dist = np.array([twin_distance(twin_difference(a, b), spec.metric) for a, b in states])
    return StabilityReport(
        times=np.array(times), distance=dist, metric=spec.metric, states=states,
        problem=prob, meta=_meta(spec), error=error,
    )


# -- measured quantities ---------------------------------------------------------

def _grad_phi(w):
    return spectral_gradient(inverse_laplacian(w))


def _law(report):
    return report.problem.law


def _q_tag(q):
    return repr(float(q))


# -- envelope fit ----------------------------------------------------------------

def _derivative(t, x):
    """Centred differences on the (possibly non-uniform) diagnostic grid."""
    if len(t) < 3:
        return None
    return np.gradient(x, t, edge_order=2)


def _trapezoid(t, y):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _active_fit(base, y):
    """Least-squares ``C`` in ``y ~ C base`` over the samples with ``y > 0``.

    The bounds are one-sided, so stretches where the distance shrinks satisfy
    them for every ``C >= 0`` and carry no information on the constant.
    """
    active = y > 0
    den = float((base[active] ** 2).sum())
    if den == 0:
        return 0.0
    return max(float((base[active] * y[active]).sum()) / den, 0.0)


def fit_envelope(t, x, bracket, p, slack=DEFAULT_SLACK, fraction=DEFAULT_FRACTION, kind="envelope"):
    """Fit ``x' <= C bracket x^(1-1/p)`` and verify it with ``slack * C``.

    ``x`` is the squared distance. Returns an :class:`EnvelopeVerdict`; the
    verdict is inconclusive when the diagnostics are too coarse for a
    derivative or contain non-finite values.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(bracket, dtype=np.float64)
    dx = _derivative(t, x)
    if dx is None or not (np.isfinite(dx).all() and np.isfinite(b).all()):
        return EnvelopeVerdict(kind, p, math.nan, slack, 0.0, False, False, "inconclusive", [])
    base = b * np.maximum(x, 0.0) ** (1.0 - 1.0 / p)
    C = _active_fit(base, dx)
    rhs = slack * C * base
    # rounding floor for the derivative of a numerically constant series
    atol = 1e-10 * float(np.abs(x).max()) / max(float(t[-1] - t[0]), 1e-300)
    pointwise = dx <= rhs + atol
    frac = float(pointwise.mean())
    f = slack * C * b / p
    root = np.maximum(x, 0.0) ** (1.0 / p)
    integral = _trapezoid(t, f)
    integrated = root - root[0] <= integral + 1e-12 * max(float(root.max()), 1e-300)
    dist = np.sqrt(np.maximum(x, 0.0))
    rows = [(float(t[i]), float(dist[i]), float(f[i]), float(dx[i]), float(rhs[i]), bool(pointwise[i]))
            for i in range(len(t))]
    ok = frac >= fraction
    integrated_ok = bool(integrated.all())
    status = "pass" if ok and integrated_ok else "fail"
    extra = {"subintervals": gronwall_subintervals(t, f)}
    return EnvelopeVerdict(kind, p, C, slack, frac, ok, integrated_ok, status, rows, extra=extra)


def gronwall_subintervals(t, f):
    """Partition ``[t0, T]`` greedily into pieces with ``length < 2^-3 ||f||^-3``
    in ``L^{3/2}`` of the piece: the restriction under which the iterated
    bound ``X <= (int f)^p`` forces ``X <= 2^-p``."""
    t = np.asarray(t, dtype=np.float64)
    f = np.abs(np.asarray(f, dtype=np.float64))
    cuts = [float(t[0])]
    start = 0
    for i in range(1, len(t)):
        seg = _trapezoid(t[start:i + 1], f[start:i + 1] ** 1.5)[-1]
        norm = seg ** (2.0 / 3.0)
        if norm > 0 and t[i] - t[start] >= 0.125 / norm ** 3 and i - 1 > start:
            start = i - 1
            cuts.append(float(t[start]))
    cuts.append(float(t[-1]))
    return cuts


# -- Model-specific envelopes ------------------------------------------------------

def t1_pairing(report):
    """``int (A(rho1) - A(rho2)) (rho1 - rho2)`` per diagnostic time (Type 1)."""
    prob = report.problem
    if not isinstance(prob, Type1Problem):
        raise ValueError("the diffusion pairing is defined for Type 1 problems")
    A = prob.diffusion.apply
    area = prob.grid.cell_area
    return report.series("t1", lambda a, b: float(((A(a.values) - A(b.values)) * (a.values - b.values)).sum() * area))


def envelope_type1(report, p=16, slack=DEFAULT_SLACK, fraction=DEFAULT_FRACTION):
    """``d/dt ||grad phi||_2^2 <= C B ||grad phi||_2^(2-2/p)`` with
    ``B = (p ||grad V rho1||_BMO + 1) ||grad phi||_inf^(1/p)
        + (p ||rho2||_BMO + 1) (||grad phi||_inf ||V w||_inf)^(1/p) (||V w||_2 / ||grad phi||_2)^(1-1/p)``."""
    if report.metric != "hminus1":
        raise ValueError("the Type 1 envelope needs the hminus1 metric")
    if p < 4:
        raise ValueError(f"p must be >= 4, got {p}")
    law = _law(report)
    gp_inf = report.series("gradphi_inf", lambda a, b: norms.lp_norm(_grad_phi(twin_difference(a, b)), math.inf))
    gp_2 = report.series("gradphi_2", lambda a, b: norms.sobolev_norm(twin_difference(a, b), -1))
    vw_inf = report.series("Vw_inf", lambda a, b: norms.lp_norm(apply_velocity(law, twin_difference(a, b)), math.inf))
    vw_2 = report.series("Vw_2", lambda a, b: norms.lp_norm(apply_velocity(law, twin_difference(a, b)), 2))
    bmo_gv1 = report.series("bmo_gradV1", lambda a, b: norms.vector_bmo(
        [c for row in velocity_gradient(law, a) for c in row]))
    bmo_r2 = report.series("bmo_rho2", lambda a, b: norms.bmo_norm(b))
    ratio = np.divide(vw_2, gp_2, out=np.zeros_like(vw_2), where=gp_2 > 0)
    bracket = ((p * bmo_gv1 + 1) * gp_inf ** (1.0 / p)
               + (p * bmo_r2 + 1) * (gp_inf * vw_inf) ** (1.0 / p) * ratio ** (1.0 - 1.0 / p))
    v = fit_envelope(report.times, gp_2 ** 2, bracket, p, slack, fraction, kind="type1")
    if isinstance(report.problem, Type1Problem):
        t1 = t1_pairing(report)
        v.extra["t1_min"] = float(t1.min())
    report.record(v)
    return v


def envelope_type2(report, p=16, p0=2.0, slack=DEFAULT_SLACK, fraction=DEFAULT_FRACTION):
    """``d/dt ||w||_2^2 <= C B ||w||_2^(2-2/p)`` with
    ``B = (p ||grad rho2||_BMO + ||grad rho2||_p0) ||w||_inf^(2/p)``."""
    if report.metric != "l2":
        raise ValueError("the Type 2 envelope needs the l2 metric")
    if p < 4:
        raise ValueError(f"p must be >= 4, got {p}")
    bmo_g2 = report.series("bmo_grad_rho2", lambda a, b: norms.vector_bmo(spectral_gradient(b)))
    g2_p0 = report.series(f"grad_rho2_l{_q_tag(p0)}", lambda a, b: norms.lp_norm(spectral_gradient(b), p0))
    w_inf = report.series("w_inf", lambda a, b: norms.lp_norm(twin_difference(a, b), math.inf))
    bracket = (p * bmo_g2 + g2_p0) * w_inf ** (2.0 / p)
    v = fit_envelope(report.times, report.distance ** 2, bracket, p, slack, fraction, kind="type2")
    v.extra["p0"] = p0
    report.record(v)
    return v


# -- dissipative bounds ------------------------------------------------------------

def exponent_r_l2(gamma, q, d=DIMENSION):
    """``r = 2 gamma q / (2 gamma q - d)`` for the dissipative L^2 estimate."""
    crit = d / (2.0 * gamma)
    if not (q > crit and q > 1):
        raise ValueError(f"q = {q} must exceed the critical value d/(2 gamma) = {crit:g} (and 1)")
    return 2.0 * gamma * q / (2.0 * gamma * q - d)


def exponent_r_hminus1(q, d=DIMENSION):
    """``r = 2q / (2q - d)`` for the dissipative H^-1 estimate."""
    crit = d / 2.0
    if not (q > crit and q > 1):
        raise ValueError(f"q = {q} must exceed the critical value d/2 = {crit:g} (and 1)")
    return 2.0 * q / (2.0 * q - d)


def _fit_exponential(report, drive, prefactor, slack, kind, q, r, extra):
    """Fit ``log(d(t)/d(0)) <= C prefactor int_0^t drive`` on the times where the
    log ratio is positive and verify it with ``slack * C`` at every diagnostic
    time."""
    t = report.times
    d = report.distance
    x = prefactor * _trapezoid(t, drive)
    if d[0] > 0:
        with np.errstate(divide="ignore"):
            y = np.log(np.maximum(d, 1e-300) / d[0])
        C = _active_fit(x, y)
        bound = d[0] * np.exp(slack * C * x)
    else:
        C = 0.0
        bound = np.zeros_like(d)
    tol = 1e-10 * max(float(d.max()), 1e-300)
    okv = d <= bound * (1 + 1e-12) + tol
    rows = [(float(t[i]), float(d[i]), float(drive[i]), float(d[i]), float(bound[i]), bool(okv[i]))
            for i in range(len(t))]
    ok = bool(okv.all())
    v = EnvelopeVerdict(kind, math.nan, C, slack, float(okv.mean()), ok, ok,
                        "pass" if ok else "fail", rows, exponent_r=r, q=q, extra=extra)
    report.record(v)
    return v


def _gn_constant(values_lhs, values_rhs):
    ratio = np.divide(values_lhs, values_rhs, out=np.zeros_like(values_lhs), where=values_rhs > 0)
    return float(ratio.max())


def dissipative_bound_l2(report, q, slack=DEFAULT_SLACK):
    """``||w(t)||_2 <= exp[nu^(-d/(2 gamma q - d)) C int ||grad rho2||_q^r] ||w(0)||_2``,
    with the Gagliardo-Nirenberg step measured on every snapshot."""
    prob = report.problem
    if report.metric != "l2":
        raise ValueError("the dissipative L^2 bound needs the l2 metric")
    if not isinstance(prob, Type2Problem) or not prob.nu > 0:
        raise ValueError("the dissipative L^2 bound needs a Type 2 problem with nu > 0")
    gamma, nu, d = prob.gamma, prob.nu, DIMENSION
    r = exponent_r_l2(gamma, q)
    gq = report.series(f"grad_rho2_l{_q_tag(q)}", lambda a, b: norms.lp_norm(spectral_gradient(b), q))
    pref = nu ** (-d / (2 * gamma * q - d))
    s = 2 * q / (q - 1)
    e = d / (2 * q * gamma)
    lhs = report.series(f"w_l{_q_tag(s)}", lambda a, b: norms.lp_norm(twin_difference(a, b), s))
    w2 = report.distance
    wg = report.series(f"w_dot_h{_q_tag(gamma)}", lambda a, b: norms.sobolev_norm(twin_difference(a, b), gamma))
    gn = _gn_constant(lhs, w2 ** (1 - e) * wg ** e)
    extra = {"gn_constant": gn, "prefactor": pref}
    return _fit_exponential(report, gq ** r, pref, slack, "dissipative_l2", q, r, extra)


def dissipative_bound_hminus1(report, q, slack=DEFAULT_SLACK):
    """``||grad phi(t)||_2 <= exp[nu^(-d/(2q-d)) C int (||rho1||_q^r + ||rho2||_q^r)] ||grad phi(0)||_2``,
    with the Gagliardo-Nirenberg / Calderon-Zygmund step measured on snapshots."""
    prob = report.problem
    if report.metric != "hminus1":
        raise ValueError("the dissipative H^-1 bound needs the hminus1 metric")
    if not isinstance(prob, Type1Problem) or prob.diffusion.kind != "linear" or not prob.diffusion.nu > 0:
        raise ValueError("the dissipative H^-1 bound is limited to linear diffusion with nu > 0")
    nu, d = prob.diffusion.nu, DIMENSION
    r = exponent_r_hminus1(q)
    r1 = report.series(f"rho1_l{_q_tag(q)}", lambda a, b: norms.lp_norm(a, q))
    r2 = report.series(f"rho2_l{_q_tag(q)}", lambda a, b: norms.lp_norm(b, q))
    pref = nu ** (-d / (2 * q - d))
    s = 2 * q / (q - 1)
    e = d / (2 * q)
    lhs = report.series(f"gradphi_l{_q_tag(s)}", lambda a, b: norms.lp_norm(_grad_phi(twin_difference(a, b)), s))
    w2 = report.series("w_l2", lambda a, b: norms.lp_norm(twin_difference(a, b), 2))
    gn = _gn_constant(lhs, report.distance ** (1 - e) * w2 ** e)
    extra = {"gn_constant": gn, "prefactor": pref}
    return _fit_exponential(report, r1 ** r + r2 ** r, pref, slack, "dissipative_hminus1", q, r, extra)


# -- contraction -------------------------------------------------------------------

def is_non_increasing(d, rtol=1e-10):
    d = np.asarray(d, dtype=np.float64)
    scale = max(float(d.max()), 1e-300) if d.size else 1.0
    return bool(np.all(np.diff(d) <= rtol * scale))


@dataclass
class ContractionResult:
    levels: list
    contracting: list
    eps0_estimate: float  # None when no level contracts
    reports: list


def contraction_probe(spec, smallness_levels):
    """Scale the base initial datum by each level (the perturbation is kept),
    rerun the twins, and record whether ``d(t)`` is non-increasing. The
    estimate is the largest level up to which every probed level contracts."""
    prob = spec.problem
    if isinstance(prob, Type2Problem):
        if not prob.nu > 0:
            raise ValueError("contraction probe needs nu > 0")
        if not DIMENSION > 2 * prob.gamma:
            raise ValueError("the L^2 contraction probe needs d > 2 gamma (gamma < 1 in 2D)")
    elif not prob.diffusion.active:
        raise ValueError("contraction probe needs nu > 0")
    levels = sorted(float(s) for s in smallness_levels)
    dw = spec.rho2_0 - spec.rho1_0
    flags, reports = [], []
    for s in levels:
        base = ScalarField(prob.grid, spec.rho1_0.values * s)
        sub = TwinRun(_with_initial(prob, base), base, base + dw, spec.metric, spec.perturbation, spec.stride)
        rep = run_twin(sub)
        flags.append(rep.error is None and is_non_increasing(rep.distance))
        reports.append(rep)
    eps0 = None
    for s, ok in zip(levels, flags):
        if not ok:
            break
        eps0 = s
    return ContractionResult(levels, flags, eps0, reports)


def _with_initial(prob, initial):
    if isinstance(prob, Type1Problem):
        return Type1Problem(prob.law, prob.diffusion, prob.grid, prob.dt, prob.t_end, initial, prob.frozen_velocity)
    return Type2Problem(prob.law, prob.nu, prob.gamma, prob.grid, prob.dt, prob.t_end, initial, prob.frozen_velocity)


def refinement_stable(c_coarse, c_fine, tol=0.5):
    """True when a fitted constant changes by at most ``tol`` (relative) under refinement."""
    if c_coarse == 0 and c_fine == 0:
        return True
    return abs(c_fine - c_coarse) <= tol * max(abs(c_coarse), abs(c_fine))


# -- output --------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, bool):
        return "1" if x else "0"
    return repr(float(x))


def verdict_csv(verdict):
    out = io.StringIO()
    out.write("t,distance,f,lhs,rhs,ok\n")
    for row in verdict.rows:
        out.write(",".join(_fmt(c) for c in row) + "\n")
    return out.getvalue()


def _json_value(x):
    if isinstance(x, (bool, str)) or x is None:
        return x
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def report_summary(report):
    """JSON-ready summary: metadata, distances and every recorded verdict."""
    verdicts = {}
    for key, v in sorted(report.verdicts.items()):
        verdicts[key] = {
            "kind": v.kind, "p": v.p, "q": v.q, "r": v.exponent_r, "fitted_C": v.fitted_C,
            "slack": v.slack, "fraction_ok": v.fraction_ok, "ok": v.ok,
            "integrated_ok": v.integrated_ok, "status": v.status, "extra": v.extra,
        }
    return _json_value({
        "meta": report.meta,
        "error": report.error,
        "d0": report.distance[0],
        "d_max": report.distance.max(),
        "d_final": report.distance[-1],
        "contraction_ok": report.contraction_ok,
        "eps0_estimate": report.eps0_estimate,
        "verdicts": verdicts,
    })


def report_json(report):
    return json.dumps(report_summary(report), indent=2, sort_keys=True) + "\n"
