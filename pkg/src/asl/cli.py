"""Command-line experiment runner.

    asl run <config> [--out DIR]
    asl preset <name> [--n N] [--dt DT] [--seed S] [--out DIR] [--quick]
    asl preset --list
    asl norms <field-file> [--p 2,4,inf] [--depth D]
    asl verify-all [--quick] [--out DIR]

Exit status: 0 when every verdict passes, 1 when a verdict fails, 2 for
configuration or usage errors, 3 when an experiment raised an error.
``ASL_THREADS`` caps the number of worker processes used by ``verify-all``.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import hashlib
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, parse_config
from .experiments import csv_table, execute_config
from .norms import format_norm_csv, norm_reports
from .presets import PRESETS, get_preset
from .spectral import read_field, write_field

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


def versions():
    return {"asl": __version__, "numpy": np.__version__, "python": platform.python_version()}


def _json_value(x):
    if isinstance(x, dict):
        return {str(k): _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _dump(obj):
    return json.dumps(_json_value(obj), indent=2, sort_keys=True) + "\n"


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def thread_count():
    raw = os.environ.get("ASL_THREADS", "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError([f"ASL_THREADS = {raw!r} is not an integer"]) from None
    if n < 1:
        raise ConfigError([f"ASL_THREADS = {n} must be at least 1"])
    return n


def execute(cfg, out_dir, preset=None, part=None):
    """Run ``cfg`` and write its artifacts and manifest into ``out_dir``.

    Returns ``(exit status, verdicts)``. Nothing time- or host-dependent other
    than the library versions enters the files, so reruns are byte-identical.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, text):
        _write_text(os.path.join(out_dir, name), text)
        written.append(name)

    config_text = cfg.canonical()
    put("config.txt", config_text)
    error = None
    verdicts, metrics = {}, {}
    try:
        res = execute_config(cfg)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        res = None
        error = {"type": type(exc).__name__, "message": str(exc)}
    if res is not None:
        for name, text in sorted(res.tables.items()):
            put(name, text)
        for name, f in sorted(res.fields.items()):
            write_field(os.path.join(out_dir, name), f)
            written.append(name)
        verdicts, metrics = res.verdicts, res.metrics
        put("verdicts.csv", csv_table(("verdict", "ok"), sorted(verdicts.items())))
        if res.error is not None:
            error = {"type": "StepError", "message": res.error}
    if error is not None:
        put("error.json", _dump(error))
    files = {name: _sha256(os.path.join(out_dir, name)) for name in sorted(written)}
    if error is not None and res is None:
        status = EXIT_ERROR
    elif all(verdicts.values()) and error is None:
        status = EXIT_OK
    else:
        status = EXIT_FAIL
    manifest = {
        "preset": preset, "part": part, "kind": cfg.kind, "seed": cfg.seed,
        "config": config_text, "versions": versions(),
        "verdicts": verdicts, "metrics": metrics, "error": error,
        "status": status, "files": files,
    }
    _write_text(os.path.join(out_dir, "manifest.json"), _dump(manifest))
    return status, verdicts


def _combine(statuses):
    if EXIT_ERROR in statuses:
        return EXIT_ERROR
    return EXIT_FAIL if EXIT_FAIL in statuses else EXIT_OK


def _line(label, status, verdicts, seconds):
    failed = [k for k, v in verdicts.items() if not v]
    word = {EXIT_OK: "PASS", EXIT_FAIL: "FAIL", EXIT_ERROR: "ERROR"}[status]
    extra = f"  failed: {', '.join(failed)}" if failed else ""
    return f"{word:5s} {label}  ({seconds:.1f} s){extra}"


def _job(args):
    preset_name, part, quick, out_dir = args
    t0 = time.perf_counter()
    cfg = dict(get_preset(preset_name).configs(quick))[part]
    status, verdicts = execute(cfg, out_dir, preset_name, part)
    return status, verdicts, time.perf_counter() - t0


def run_preset(name, out, quick=False, n=None, dt=None, seed=None, stream=None):
    stream = stream or sys.stdout
    preset = get_preset(name)
    statuses = []
    for part, cfg in preset.configs(quick):
        if n is not None or dt is not None or seed is not None:
            cfg = cfg.with_overrides(n=n, dt=dt, seed=seed)
        t0 = time.perf_counter()
        status, verdicts = execute(cfg, os.path.join(out, part), name, part)
        print(_line(f"{name}/{part}", status, verdicts, time.perf_counter() - t0), file=stream, flush=True)
        statuses.append(status)
    return _combine(statuses)


def verify_all(out, quick=False, stream=None):
    """Every preset, each part in its own directory, plus a summary table."""
    stream = stream or sys.stdout
    jobs = [(name, part, quick, os.path.join(out, name, part))
            for name, preset in PRESETS.items() for part, _ in preset.parts]
    threads = thread_count()
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_job(job))
            status, verdicts, seconds = results[-1]
            print(_line(f"{job[0]}/{job[1]}", status, verdicts, seconds), file=stream, flush=True)
    if threads > 1:
        for job, (status, verdicts, seconds) in zip(jobs, results):
            print(_line(f"{job[0]}/{job[1]}", status, verdicts, seconds), file=stream, flush=True)
    rows = []
    for (name, part, _, _), (status, verdicts, _) in zip(jobs, results):
        for verdict, ok in sorted(verdicts.items()):
            rows.append((name, part, verdict, ok))
        if not verdicts:
            rows.append((name, part, "executed", status == EXIT_OK))
    _write_text(os.path.join(out, "summary.csv"), csv_table(("preset", "part", "verdict", "ok"), rows))
    status = _combine([r[0] for r in results])
    _write_text(os.path.join(out, "manifest.json"), _dump({
        "command": "verify-all", "quick": quick, "versions": versions(), "status": status,
        "presets": {name: [part for part, _ in preset.parts] for name, preset in PRESETS.items()},
    }))
    passed = sum(1 for r in results if r[0] == EXIT_OK)
    print(f"{passed}/{len(results)} experiments passed", file=stream, flush=True)
    return status


def _parse_p(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        out.append(math.inf if tok in ("inf", "infinity") else float(tok))
    return out


def build_parser():
    ap = argparse.ArgumentParser(prog="asl", description="Active scalar laboratory experiment runner")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment configuration file")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (default: the config's output key, else runs/<config stem>)")

    p = sub.add_parser("preset", help="run a built-in experiment")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true", help="list the presets and exit")
    p.add_argument("--n", type=int, default=None, help="grid size")
    p.add_argument("--dt", type=float, default=None, help="time step")
    p.add_argument("--seed", type=int, default=None, help="seed")
    p.add_argument("--out", default=None, help="output directory (default: runs/<name>)")
    p.add_argument("--quick", action="store_true", help="use the reduced smoke-test sizes")

    p = sub.add_parser("norms", help="norm battery of an ASFIELD snapshot, as CSV on stdout")
    p.add_argument("field")
    p.add_argument("--p", default="2,4,inf", help="comma-separated L^p exponents (inf allowed)")
    p.add_argument("--depth", type=int, default=None, help="dyadic BMO depth")

    p = sub.add_parser("verify-all", help="run every preset")
    p.add_argument("--quick", action="store_true", help="use the reduced smoke-test sizes")
    p.add_argument("--out", default="verify", help="output directory (default: verify)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            with open(args.config, encoding="utf-8") as fh:
                cfg = parse_config(fh.read())
            stem = os.path.splitext(os.path.basename(args.config))[0]
            out = args.out or cfg.output or os.path.join("runs", stem)
            t0 = time.perf_counter()
            status, verdicts = execute(cfg, out)
            print(_line(stem, status, verdicts, time.perf_counter() - t0), flush=True)
            return status
        if args.command == "preset":
            if args.list or not args.name:
                for name, preset in PRESETS.items():
                    print(f"{name:24s} {preset.description}")
                return EXIT_OK if args.list else EXIT_USAGE
            return run_preset(args.name, args.out or os.path.join("runs", args.name),
                              args.quick, args.n, args.dt, args.seed)
        if args.command == "norms":
            f = read_field(args.field)
            sys.stdout.write(format_norm_csv(norm_reports(f, _parse_p(args.p), max_depth=args.depth)))
            return EXIT_OK
        return verify_all(args.out, args.quick)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, OSError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
