"""Experiment configuration: a flat, sectioned ``key = value`` document.

    # comment
    [experiment]
    kind = twin_run
    seed = 0

    [grid]
    n = 64

Parsing collects every problem (unknown keys, bad values, duplicates, missing
seed) with its line number before reporting, and fills in documented defaults.
"""

from dataclasses import dataclass, field
import math

from .velocity import KINDS as LAW_KINDS

KINDS = ("norm_study", "harmonic_study", "condition_check", "single_run", "twin_run", "contraction_probe")
RUN_KINDS = ("single_run", "twin_run", "contraction_probe")
STUDIES = {
    "norm_study": ("spectral_exactness", "hminus1_identity", "lp_growth", "log_lipschitz"),
    "harmonic_study": ("cz_corpus", "jones_extension"),
    "condition_check": ("conditions",),
}
INITIAL_KINDS = ("smooth_random", "mollified_log", "mollified_log_line", "gaussian")
CHECKS = ("uniqueness", "envelope_type1", "envelope_type2", "dissipative_l2",
          "dissipative_hminus1", "t1_sign", "lp_growth")


class ConfigError(ValueError):
    """All problems found in a configuration document."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# -- value parsers ---------------------------------------------------------------

def _int(text):
    return int(text)


def _float(text):
    x = float(text)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _bool(text):
    t = text.lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError("expected true or false")


def _str(text):
    return text


def _list(item):
    def parse(text):
        if not text.strip():
            return ()
        return tuple(item(s.strip()) for s in text.split(","))
    return parse


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# -- schema ------------------------------------------------------------------------

@dataclass(frozen=True)
class Key:
    parse: object
    default: object = None
    required: bool = False
    check: object = None  # value -> error message or None
    doc: str = ""


def _choice(options):
    return lambda v: None if v in options else f"must be one of {', '.join(options)}"


def _each(options):
    def check(values):
        bad = [v for v in values if v not in options]
        return f"unknown entries {', '.join(bad)}; expected any of {', '.join(options)}" if bad else None
    return check


def _range(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        ok = True
        if lo is not None:
            ok &= v > lo if lo_open else v >= lo
        if hi is not None:
            ok &= v < hi if hi_open else v <= hi
        if ok:
            return None
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        return f"must lie in {left}{'-inf' if lo is None else _fmt(lo)}, {'inf' if hi is None else _fmt(hi)}{right}"
    return check


def _power_of_two(v):
    return None if v >= 16 and v & (v - 1) == 0 else "must be a power of two >= 16"


def _law(v):
    if v.startswith("custom:"):
        return None if len(v) > len("custom:") else "custom law needs a file path"
    return _choice(tuple(k for k in LAW_KINDS if k != "custom"))(v)


def _nonzero(v):
    return None if v != 0 else "must be nonzero"


def _positive_all(values):
    return None if all(v > 0 for v in values) else "entries must be positive"


SCHEMA = {
    "experiment": {
        "kind": Key(_str, required=True, check=_choice(KINDS), doc="experiment kind"),
        "seed": Key(_int, required=True, check=_range(0), doc="seed for every random element"),
        "name": Key(_str, "", doc="label echoed in the manifest"),
        "output": Key(_str, "", doc="output directory for `asl run`; --out takes precedence"),
    },
    "grid": {
        "n": Key(_int, 64, check=_power_of_two),
        "length": Key(_float, 2 * math.pi, check=_range(0, lo_open=True)),
    },
    "model": {
        "type": Key(_int, 1, check=_choice((1, 2))),
        "law": Key(_str, "biot_savart", check=_law),
        "repulsive": Key(_bool, False),
        "diffusion": Key(_str, "none", check=_choice(("none", "linear", "porous"))),
        "nu": Key(_float, 0.0, check=_range(0)),
        "m": Key(_float, 1.0, check=_range(1)),
        "gamma": Key(_float, 1.0, check=_range(0, 1, lo_open=True)),
    },
    "time": {
        "dt": Key(_float, 0.01, check=_nonzero),
        "t_end": Key(_float, 1.0),
        "schedule": Key(_list(_float), ()),
        "with_bmo": Key(_bool, False),
    },
    "initial": {
        "kind": Key(_str, "smooth_random", check=_choice(INITIAL_KINDS)),
        "amplitude": Key(_float, 1.0),
        "slope": Key(_float, 2.0),
        "kmax": Key(_int, 8, check=_range(1)),
        "center": Key(_list(_float), (math.pi, math.pi),
                      check=lambda v: None if len(v) == 2 else "needs two coordinates"),
        "x0": Key(_float, math.pi),
        "delta": Key(_float, 0.1, check=_range(0, lo_open=True)),
        "width": Key(_float, 0.6, check=_range(0, lo_open=True)),
        "mass": Key(_float, 1.0),
        "offset": Key(_float, 0.0, doc="constant added to the datum"),
    },
    "twin": {
        "metric": Key(_str, "auto", check=_choice(("auto", "hminus1", "l2"))),
        "eps": Key(_float, 1e-6, check=_range(0)),
        "slope": Key(_float, 2.0),
        "kmax": Key(_int, 8, check=_range(1)),
        "stride": Key(_int, 1, check=_range(1, 10)),
        "checks": Key(_list(_str), (), check=_each(CHECKS)),
        "p": Key(_list(_int), (16,), check=lambda v: None if v and all(p >= 4 for p in v) else "entries must be >= 4"),
        "p0": Key(_float, 2.0, check=_range(1, lo_open=True)),
        "q": Key(_float, 0.0, doc="integrability exponent of the dissipative bounds"),
        "slack": Key(_float, 3.0, check=_range(1)),
        "fraction": Key(_float, 0.99, check=_range(0, 1, lo_open=True)),
        "refine": Key(_bool, False, doc="repeat at 2n and require fitted constants stable within 50%"),
    },
    "probe": {
        "levels": Key(_list(_float), (), check=lambda v: None if all(x >= 0 for x in v)
                      else "entries must be non-negative"),
    },
    "study": {
        "name": Key(_str, "", doc="study within the kind"),
        "gammas": Key(_list(_float), (0.25, 0.5, 1.0), check=_positive_all),
        "modes": Key(_list(_int), (1, 2, 4), check=_positive_all),
        "count": Key(_int, 10, check=_range(1)),
        "deltas": Key(_list(_float), (0.1, 0.05, 0.025), check=_positive_all),
        "seeds": Key(_int, 3, check=_range(1)),
        "p": Key(_list(_float), (4.0, 8.0, 16.0, 32.0, 64.0), check=_positive_all),
        "p0": Key(_float, 2.0, check=_range(1)),
        "refine": Key(_bool, True),
        "tolerance": Key(_float, 0.2, check=_range(0, lo_open=True)),
        "delta_cells": Key(_float, 1.5, check=_range(0, lo_open=True)),
        "samples": Key(_int, 20000, check=_range(1)),
        "radii": Key(_int, 13, check=_range(4)),
        "laws": Key(_list(_str), ("biot_savart", "sqg"), check=_each(tuple(k for k in LAW_KINDS if k != "custom"))),
    },
}

OVERRIDE = "override"

REQUIRED_SECTIONS = {
    "norm_study": ("study",),
    "harmonic_study": ("study",),
    "condition_check": (),
    "single_run": ("model", "time", "initial"),
    "twin_run": ("model", "time", "initial", "twin"),
    "contraction_probe": ("model", "time", "initial", "twin", "probe"),
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    values: dict  # section -> key -> value, defaults applied
    given: dict = field(default_factory=dict)  # section -> key -> line of explicit settings

    def __getitem__(self, item):
        section, key = item
        return self.values[section][key]

    @property
    def name(self):
        return self.values["experiment"]["name"]

    @property
    def output(self):
        return self.values["experiment"]["output"]

    @property
    def study(self):
        return self.values["study"]["name"] or STUDIES.get(self.kind, ("",))[0]

    @property
    def metric(self):
        m = self.values["twin"]["metric"]
        if m == "auto":
            return "hminus1" if self.values["model"]["type"] == 1 else "l2"
        return m

    def canonical(self):
        """Every setting, defaults included, in a fixed order."""
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, n=None, dt=None, seed=None, settings=None):
        """Copy with grid size, time step or seed replaced, plus any
        ``{"section.key": text}`` settings."""
        values = {s: dict(v) for s, v in self.values.items()}
        given = {s: dict(v) for s, v in self.given.items()}
        items = dict(settings or {})
        for key, value in (("grid.n", n), ("time.dt", dt), ("experiment.seed", seed)):
            if value is not None:
                items[key] = value
        errors = []
        for dotted, value in items.items():
            sec, _, key = dotted.partition(".")
            if sec not in SCHEMA or key not in SCHEMA[sec]:
                errors.append(f"command line: unknown setting {dotted!r}")
                continue
            try:
                values[sec][key] = SCHEMA[sec][key].parse(_fmt(value) if not isinstance(value, str) else value)
            except ValueError as exc:
                errors.append(f"command line: {dotted} = {value!r} is not valid ({exc})")
                continue
            given.setdefault(sec, {})[key] = OVERRIDE
        if errors:
            raise ConfigError(errors)
        return validate(values, given)


def _split_line(raw):
    text = raw.split("#", 1)[0].strip()
    return text


def parse_config(text):
    """Parse and validate a configuration document; raises :class:`ConfigError`
    listing every problem with its line number."""
    errors = []
    raw = {}      # section -> key -> (text, line)
    headers = {}  # section -> first header line
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _split_line(line)
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                errors.append(f"line {lineno}: malformed section header {body!r}")
                section = None
                continue
            section = body[1:-1].strip()
            if section not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = None
                continue
            headers.setdefault(section, lineno)
            raw.setdefault(section, {})
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if section is None:
            if not any(e.startswith(f"line {lineno}:") for e in errors):
                errors.append(f"line {lineno}: key {key!r} outside a known section")
            continue
        if key not in SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        if key in raw[section]:
            first = raw[section][key][1]
            errors.append(f"line {lineno}: duplicate key {key!r} in [{section}] (lines {first} and {lineno})")
            continue
        raw[section][key] = (value, lineno)

    values = {}
    given = {sec: {} for sec in raw}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, spec in keys.items():
            if key in raw.get(sec, {}):
                text_value, lineno = raw[sec][key]
                given[sec][key] = lineno
                try:
                    values[sec][key] = spec.parse(text_value)
                except ValueError as exc:
                    errors.append(f"line {lineno}: {sec}.{key} = {text_value!r} is not valid ({exc})")
                    values[sec][key] = spec.default
                    given[sec][key] = None
                    continue
            elif spec.required:
                where = headers.get(sec)
                loc = f"line {where}" if where else "line -"
                errors.append(f"{loc}: missing required key {key!r} in [{sec}]")
                values[sec][key] = spec.default
            else:
                values[sec][key] = spec.default
    try:
        cfg = validate(values, given, headers)
    except ConfigError as exc:
        errors.extend(exc.errors)
        cfg = None
    if errors:
        raise ConfigError(_ordered(errors))
    return cfg


def _ordered(errors):
    """Unique messages sorted by line number; messages without one go last."""
    def line(e):
        head = e.split(":", 1)[0]
        return int(head[5:]) if head.startswith("line ") and head[5:].isdigit() else math.inf
    return sorted(dict.fromkeys(errors), key=line)


def validate(values, given, headers=None):
    """Range and cross-field checks on parsed values; returns the config."""
    headers = headers or {}
    errors = []

    def where(sec, key=None):
        line = given.get(sec, {}).get(key) if key else None
        if line == OVERRIDE:
            return "command line"
        line = line or headers.get(sec)
        return f"line {line}" if line else "line -"

    for sec, keys in SCHEMA.items():
        for key, spec in keys.items():
            v = values[sec][key]
            # defaults are valid by construction; unparsable values are reported already
            if spec.check is None or given.get(sec, {}).get(key) is None:
                continue
            msg = spec.check(v)
            if msg:
                errors.append(f"{where(sec, key)}: {sec}.{key} = {_fmt(v)} {msg}")

    kind = values["experiment"]["kind"]
    if kind in KINDS:
        for sec in REQUIRED_SECTIONS[kind]:
            if sec not in given:
                errors.append(f"line -: kind {kind} needs a [{sec}] section")
        study = values["study"]["name"]
        if kind in STUDIES and study and study not in STUDIES[kind]:
            errors.append(f"{where('study', 'name')}: study.name = {study} must be one of {', '.join(STUDIES[kind])}")
        if kind in RUN_KINDS:
            errors.extend(_run_checks(values, where, kind))
    if errors:
        raise ConfigError(errors)
    given = {s: {k: v for k, v in d.items() if v is not None} for s, d in given.items()}
    return ExperimentConfig(kind=kind, seed=values["experiment"]["seed"], values=values, given=given)


def _run_checks(values, where, kind):
    from .stability import exponent_r_hminus1, exponent_r_l2

    errors = []
    model, twin = values["model"], values["twin"]
    t1 = model["type"] == 1
    if t1 and model["diffusion"] == "porous" and not model["m"] > 1:
        errors.append(f"{where('model', 'm')}: porous diffusion needs m > 1")
    if t1 and model["diffusion"] != "none" and not model["nu"] > 0:
        errors.append(f"{where('model', 'nu')}: {model['diffusion']} diffusion needs nu > 0")
    if not t1 and model["diffusion"] != "none":
        errors.append(f"{where('model', 'diffusion')}: diffusion applies to type 1 only; type 2 uses nu and gamma")
    if model["repulsive"] and model["law"] != "newtonian_attractive":
        errors.append(f"{where('model', 'repulsive')}: repulsive applies to the newtonian_attractive law only")
    if kind == "single_run":
        return errors
    metric = twin["metric"] if twin["metric"] != "auto" else ("hminus1" if t1 else "l2")
    q = twin["q"]
    for check in twin["checks"]:
        loc = where("twin", "checks")
        if check == "envelope_type1" and metric != "hminus1":
            errors.append(f"{loc}: envelope_type1 needs metric hminus1")
        if check == "envelope_type2" and metric != "l2":
            errors.append(f"{loc}: envelope_type2 needs metric l2")
        if check == "t1_sign" and not t1:
            errors.append(f"{loc}: t1_sign needs a type 1 model")
        if check == "uniqueness" and twin["eps"] != 0:
            errors.append(f"{where('twin', 'eps')}: the uniqueness check needs eps = 0")
        if check == "dissipative_l2":
            if t1 or metric != "l2" or not model["nu"] > 0:
                errors.append(f"{loc}: dissipative_l2 needs a type 2 model with nu > 0 and metric l2")
            try:
                exponent_r_l2(model["gamma"], q)
            except ValueError as exc:
                errors.append(f"{where('twin', 'q')}: {exc}")
        if check == "dissipative_hminus1":
            if not t1 or model["diffusion"] != "linear" or metric != "hminus1":
                errors.append(f"{loc}: dissipative_hminus1 is limited to linear diffusion (type 1, metric hminus1)")
            try:
                exponent_r_hminus1(q)
            except ValueError as exc:
                errors.append(f"{where('twin', 'q')}: {exc}")
    if kind == "contraction_probe":
        if not values["probe"]["levels"]:
            errors.append(f"{where('probe', 'levels')}: the contraction probe needs at least one level")
        if t1 and model["diffusion"] == "none" or not t1 and not model["nu"] > 0:
            errors.append(f"{where('model', 'nu')}: the contraction probe needs nu > 0")
        if not t1 and not model["gamma"] < 1:
            errors.append(f"{where('model', 'gamma')}: the L^2 contraction probe needs gamma < 1 (d > 2 gamma)")
    return errors
