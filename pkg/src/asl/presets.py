"""Built-in experiments. Each preset is one or more configuration documents;
``quick`` settings shrink them for smoke runs (``asl verify-all --quick``)."""

from dataclasses import dataclass, field

from .config import parse_config


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    parts: tuple  # (part name, config text)
    quick: dict = field(default_factory=dict)  # part name -> {"section.key": value}

    def configs(self, quick=False):
        """Parsed configurations, in order, as ``(part name, config)``."""
        out = []
        for part, text in self.parts:
            cfg = parse_config(text)
            if quick and part in self.quick:
                cfg = cfg.with_overrides(settings=self.quick[part])
            out.append((part, cfg))
        return out


def _doc(kind, seed=0, **sections):
    lines = ["[experiment]", f"kind = {kind}", f"seed = {seed}", ""]
    for sec, body in sections.items():
        lines.append(f"[{sec}]")
        lines.extend(line.strip() for line in body.strip().splitlines())
        lines.append("")
    return "\n".join(lines)


EULER_ENVELOPE = _doc(
    "twin_run",
    grid="n = 64",
    model="type = 1\nlaw = biot_savart\ndiffusion = none",
    time="dt = 0.01\nt_end = 1.0",
    initial="kind = smooth_random\namplitude = 5.0\nkmax = 8",
    twin="metric = hminus1\neps = 1e-6\nchecks = envelope_type1\np = 8, 16, 32\nrefine = true",
)

SQG_DISSIPATIVE_Q4 = _doc(
    "twin_run",
    grid="n = 64",
    model="type = 2\nlaw = sqg\nnu = 0.1\ngamma = 0.5",
    time="dt = 0.005\nt_end = 1.0",
    initial="kind = smooth_random\namplitude = 10.0\nkmax = 8",
    twin="metric = l2\neps = 1e-3\nchecks = dissipative_l2\nq = 4\nrefine = true",
)

SQG_DISSIPATIVE_GAMMA1 = _doc(
    "twin_run",
    grid="n = 64",
    model="type = 2\nlaw = sqg\nnu = 0.1\ngamma = 1.0",
    time="dt = 0.005\nt_end = 1.0",
    initial="kind = smooth_random\namplitude = 10.0\nkmax = 8",
    twin="metric = l2\neps = 1e-3\nchecks = dissipative_l2\nq = 2\nrefine = true",
)

PKS_DISSIPATIVE_Q2 = _doc(
    "twin_run",
    grid="n = 64",
    model="type = 1\nlaw = newtonian_attractive\ndiffusion = linear\nnu = 0.5",
    time="dt = 0.005\nt_end = 1.0",
    initial="kind = gaussian\nmass = 16.0\nwidth = 0.6",
    twin="metric = hminus1\neps = 1e-3\nchecks = dissipative_hminus1\nq = 2\nrefine = true",
)


def _uniqueness(model, initial):
    return _doc(
        "twin_run",
        grid="n = 128",
        model=model,
        time="dt = 0.01\nt_end = 1.0",
        initial=initial,
        twin="metric = hminus1\neps = 0\nchecks = uniqueness\nstride = 10",
    )


SMOOTH = "kind = smooth_random\namplitude = 3.0\nkmax = 8"
POSITIVE = "kind = smooth_random\namplitude = 0.5\nkmax = 6\noffset = 1.0"


def _porous(m):
    return _doc(
        "twin_run",
        grid="n = 128",
        model=f"type = 1\nlaw = newtonian_attractive\ndiffusion = porous\nnu = 0.01\nm = {m}",
        time="dt = 0.01\nt_end = 1.0",
        initial=POSITIVE,
        twin="metric = hminus1\neps = 1e-2\nchecks = t1_sign",
    )


PRESETS = {}


def _add(name, description, parts, quick=None):
    PRESETS[name] = Preset(name, description, tuple(parts), quick or {})


_add("spectral_exactness", "(-Delta)^gamma on Fourier modes against |k|^(2 gamma)",
     [("modes", _doc("norm_study", grid="n = 64", study="name = spectral_exactness\nmodes = 1, 2, 4\ngammas = 0.25, 0.5, 1.0"))])
_add("hminus1_identity", "spectral H^-1 norm against the potential gradient on random mean-zero fields",
     [("random", _doc("norm_study", grid="n = 128", study="name = hminus1_identity\ncount = 100"))],
     {"random": {"grid.n": 32, "study.count": 10}})
_add("lp_growth", "L^p growth of mollified logarithms against the BMO interpolation bound, n and 2n",
     [("logs", _doc("norm_study", grid="n = 256",
                    study="name = lp_growth\ndeltas = 0.1, 0.05, 0.025\nseeds = 3\np = 4, 8, 16, 32, 64\np0 = 2\nrefine = true"))],
     {"logs": {"grid.n": 64}})
_add("log_lipschitz", "log-Lipschitz modulus of the Biot-Savart velocity of a logarithmic vortex",
     [("vortex", _doc("norm_study", grid="n = 2048\nlength = 1.0",
                      study="name = log_lipschitz\ndelta_cells = 1.5\nsamples = 200000\nradii = 13"))])
_add("cz_decomposition", "Calderon-Zygmund split invariants and maximal cubes on a 50-function corpus",
     [("corpus", _doc("harmonic_study", grid="n = 64", study="name = cz_corpus\ncount = 50"))],
     {"corpus": {"grid.n": 32, "study.count": 10}})
_add("jones_extension", "BMO extension constant over five domains and ten functions, n and 2n",
     [("domains", _doc("harmonic_study", grid="n = 64", study="name = jones_extension\nrefine = true"))],
     {"domains": {"grid.n": 32, "study.refine": "false"}})
_add("numerical_uniqueness", "identical twins stay identical: Euler, SQG inviscid and viscous, PKS with porous diffusion",
     [("euler", _uniqueness("type = 1\nlaw = biot_savart", SMOOTH)),
      ("sqg_inviscid", _uniqueness("type = 2\nlaw = sqg\nnu = 0\ngamma = 0.5", SMOOTH)),
      ("sqg_viscous", _uniqueness("type = 2\nlaw = sqg\nnu = 0.1\ngamma = 0.5", SMOOTH)),
      ("pks_porous", _uniqueness("type = 1\nlaw = newtonian_attractive\ndiffusion = porous\nnu = 0.01\nm = 2", POSITIVE))],
     {k: {"grid.n": 32, "time.t_end": 0.2} for k in ("euler", "sqg_inviscid", "sqg_viscous", "pks_porous")})
_add("euler_envelope", "2D Euler twin: fitted differential and integrated H^-1 envelope for p = 8, 16, 32",
     [("euler", EULER_ENVELOPE)],
     {"euler": {"grid.n": 32, "time.t_end": 0.3, "twin.refine": "false"}})
_add("dissipative_bounds", "exponents r and exponential stability bounds on dissipative twins",
     [("sqg_q4", SQG_DISSIPATIVE_Q4), ("sqg_gamma1_q2", SQG_DISSIPATIVE_GAMMA1), ("pks_q2", PKS_DISSIPATIVE_Q2)],
     {k: {"grid.n": 32, "time.t_end": 0.3, "twin.refine": "false"} for k in ("sqg_q4", "sqg_gamma1_q2", "pks_q2")})
_add("t1_sign", "monotone diffusion pairing on porous-medium twins, m = 2 and 3",
     [("m2", _porous(2)), ("m3", _porous(3))],
     {k: {"grid.n": 32, "time.t_end": 0.2} for k in ("m2", "m3")})
_add("velocity_conditions", "analytic C3 and L^2 multiplier checks for Biot-Savart and SQG",
     [("laws", _doc("condition_check", grid="n = 64", study="laws = biot_savart, sqg"))],
     {"laws": {"grid.n": 32}})
_add("euler_bmo_uniqueness", "BMO interpolation bound on a logarithmic vortex, then its H^-1 Euler twin envelope",
     [("vortex", _doc(
         "twin_run",
         grid="n = 64",
         model="type = 1\nlaw = biot_savart",
         time="dt = 0.005\nt_end = 1.0",
         initial="kind = mollified_log\namplitude = 1.0\ndelta = 0.2",
         twin="metric = hminus1\neps = 1e-6\nchecks = lp_growth, envelope_type1\np = 16",
     ))],
     {"vortex": {"grid.n": 32, "time.t_end": 0.3}})
_add("sqg_dissipative_q4", "dissipative SQG L^2 stability bound with q = 4, r = 2",
     [("sqg", SQG_DISSIPATIVE_Q4)],
     {"sqg": {"grid.n": 32, "time.t_end": 0.3, "twin.refine": "false"}})
_add("sqg_contraction", "L^2 contraction threshold for viscous SQG with gamma = 0.4",
     [("sqg", _doc(
         "contraction_probe",
         grid="n = 32",
         model="type = 2\nlaw = sqg\nnu = 0.2\ngamma = 0.4",
         time="dt = 0.01\nt_end = 0.5",
         initial="kind = smooth_random\namplitude = 1.0\nkmax = 6",
         twin="metric = l2\neps = 1e-3",
         probe="levels = 0.5, 1, 2, 4, 8, 16, 32",
     ))],
     {"sqg": {"time.t_end": 0.2}})
_add("euler_single_run", "single 2D Euler run with diagnostics and snapshots",
     [("euler", _doc(
         "single_run",
         grid="n = 64",
         model="type = 1\nlaw = biot_savart",
         time="dt = 0.01\nt_end = 1.0\nschedule = 0.25, 0.5, 0.75, 1.0\nwith_bmo = true",
         initial=SMOOTH,
     ))],
     {"euler": {"grid.n": 32, "time.t_end": 0.5, "time.schedule": "0.25, 0.5"}})


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
