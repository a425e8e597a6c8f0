"""Command-line harness: ``htawgm {solve,bench,precond-check,diag-ratio,params-check}``.

Configuration is flat ``section.key=value`` text (``--config FILE``); every key
can be overridden with a flag of the same name, e.g. ``--problem.d 4``.
Logs are JSON lines: a header with the full configuration and spectral
estimates, then one convergence record per line. Wall-clock times live only
in the ``wall_time`` field, so logs of identical runs differ nowhere else.
The environment variable ``HTAWGM_LOG_DIR`` overrides ``log.dir``.

Exit codes: 0 ok, 1 configuration or validation error, 2 no convergence,
3 internal assertion.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics
from .awgm import (SAFETY, AwgmParams, ConvergenceError, ParameterError, default_params,
                   ht_awgm, poisson_rhs, reference_spectrum, validate_params)
from .operator import laplacian
from .preconditioner import PreconditionerWindowError, accuracy, build_expsum
from .wavelet_basis import Basis1D

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INTERNAL = 0, 1, 2, 3
LOG_ENV = "HTAWGM_LOG_DIR"
LARGE_D = 8

_PARAM_KEYS = tuple(f.name for f in dataclasses.fields(AwgmParams) if f.name != "eps")

# value None marks an optional float
DEFAULTS = {
    "problem.d": 2,
    "problem.eps": 1e-4,
    "problem.lam_min": None,
    "problem.lam_max": None,
    "problem.kappa": None,
    "run.seed": 42,
    "log.dir": "runs",
    "log.name": "",
    "log.csv": False,
    "bench.dims": "2,4",
    "bench.eps": "",
    "bench.workers": 1,
    "bench.allow_large": False,
    "precond.delta": "0.5,0.1,0.01",
    "precond.T": "1e3,1e6",
    "precond.eta": None,
    "precond.points": 10000,
    "diag.dims": "2,3",
    "diag.sizes": "3,4,5",
    "diag.alphas": "0.3,0.5,0.7,0.9",
    "diag.trials": 100,
    "diag.structure": "random",
    "diag.csv": "",
}
DEFAULTS.update({f"params.{k}": None for k in _PARAM_KEYS})
_INT_PARAMS = {"M", "max_outer", "width", "max_pcg"}


class ConfigError(ValueError):
    """Malformed configuration file or flag."""


def _convert(key, raw):
    default = DEFAULTS[key]
    if isinstance(raw, str):
        raw = raw.strip()
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if default is None:
            if raw in ("", "none", "None"):
                return None
            if key.split(".", 1)[1] in _INT_PARAMS:
                return int(raw)
            return float(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return str(raw)


def parse_config_text(text: str) -> dict:
    """``section.key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def parse_overrides(tokens) -> dict:
    """``--section.key value`` or ``--section.key=value`` flags."""
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        if key not in DEFAULTS:
            raise ConfigError(f"unknown option --{key}")
        if not eq:
            if isinstance(DEFAULTS[key], bool):
                value = "true"
            else:
                value = next(it, None)
                if value is None:
                    raise ConfigError(f"--{key} needs a value")
        out[key] = _convert(key, value)
    return out


def load_config(path=None, overrides=()) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg.update(parse_config_text(text))
    cfg.update(parse_overrides(overrides))
    return cfg


def _floats(cfg, key):
    try:
        return [float(x) for x in str(cfg[key]).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers") from None


def _ints(cfg, key):
    vals = _floats(cfg, key)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{key}: expected integers")
    return [int(v) for v in vals]


def log_dir(cfg) -> Path:
    return Path(os.environ.get(LOG_ENV) or cfg["log.dir"])


# -- solver setup ------------------------------------------------------------------


def spectrum_for(cfg, basis, d, delta):
    """Raw ``(lam_min, lam_max)``: from the config or by power iteration."""
    lo, hi = cfg["problem.lam_min"], cfg["problem.lam_max"]
    if (lo is None) != (hi is None):
        raise ConfigError("set both problem.lam_min and problem.lam_max or neither")
    if lo is not None:
        if not 0 < lo <= hi:
            raise ConfigError("need 0 < problem.lam_min <= problem.lam_max")
        return lo, hi
    return reference_spectrum(basis, d, delta, seed=cfg["run.seed"])


def params_for(cfg, d, kappa) -> AwgmParams:
    explicit = {k: cfg[f"params.{k}"] for k in _PARAM_KEYS if cfg[f"params.{k}"] is not None}
    return default_params(d, kappa, eps=cfg["problem.eps"], **explicit)


def _delta(cfg):
    return cfg["params.delta"] if cfg["params.delta"] is not None else AwgmParams.delta


def run_solve(cfg, d, stream=None):
    """Run one solve; returns ``(status, log, header)``."""
    basis = Basis1D()
    delta = _delta(cfg)
    spec = spectrum_for(cfg, basis, d, delta)
    kappa = spec[1] / spec[0] * SAFETY**2
    p = params_for(cfg, d, kappa)
    header = {"type": "header", "command": "solve", "d": d,
              "config": {k: cfg[k] for k in sorted(cfg)}, "params": p.to_dict(),
              "lam_min": spec[0] / SAFETY, "lam_max": spec[1] * SAFETY, "kappa": kappa}
    if stream is not None:
        stream.write(json.dumps(header) + "\n")

    def emit(rec):
        if stream is not None:
            row = {"type": "record", **rec.to_dict(include_time=False), "wall_time": rec.wall_time}
            stream.write(json.dumps(row) + "\n")
            stream.flush()

    try:
        _, log = ht_awgm(laplacian(basis, d), poisson_rhs(basis, d), basis, p,
                         spectrum=spec, callback=emit)
    except ConvergenceError as exc:
        return "diverged", exc, header
    header.update({k: log.meta[k] for k in ("M_star", "K_star", "omega0") if k in log.meta})
    return "ok", log, header


def _write_csv(path, rows):
    cols = ["k", "m", "event", "residual", "max_rank", "support", "max_level",
            "pcg_iterations", "omega0_k", "wall_time"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _solve_to_files(cfg, d):
    out = log_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["log.name"] or f"solve_d{d}"
    path = out / f"{name}.jsonl"
    with open(path, "w") as fh:
        status, log, header = run_solve(cfg, d, fh)
        if status == "ok":
            summary = {"type": "summary", "converged": True,
                       "iterations": log.meta["iterations"],
                       "residual": log[-1].residual, "M_star": log.meta["M_star"],
                       "K_star": log.meta["K_star"]}
        else:
            summary = {"type": "summary", "converged": False, "message": str(log)}
        fh.write(json.dumps(summary) + "\n")
    if cfg["log.csv"] and status == "ok":
        _write_csv(out / f"{name}.csv", [r.to_dict() for r in log])
    return status, log, path


# -- subcommands -------------------------------------------------------------------


def cmd_solve(cfg) -> int:
    d = cfg["problem.d"]
    if d < 1:
        raise ConfigError("problem.d must be positive")
    if d >= LARGE_D and not cfg["bench.allow_large"]:
        raise ConfigError(f"d >= {LARGE_D} needs --bench.allow_large")
    status, log, path = _solve_to_files(cfg, d)
    if status != "ok":
        print(f"no convergence: {log}", file=sys.stderr)
        print(f"log: {path}")
        return EXIT_DIVERGED
    last = log[-1]
    print(f"d={d} converged: residual {last.residual:.3e} after {log.meta['iterations']} "
          f"iterations, max rank {last.max_rank}, support {last.support}")
    print(f"log: {path}")
    return EXIT_OK


def cmd_bench(cfg) -> int:
    dims = _ints(cfg, "bench.dims")
    if not dims or min(dims) < 1:
        raise ConfigError("bench.dims must list positive dimensions")
    if max(dims) >= LARGE_D and not cfg["bench.allow_large"]:
        raise ConfigError(f"dimensions >= {LARGE_D} need --bench.allow_large")
    eps = _floats(cfg, "bench.eps")
    if eps and len(eps) not in (1, len(dims)):
        raise ConfigError("bench.eps needs one value or one per dimension")
    eps = eps * len(dims) if len(eps) == 1 else eps

    def one(i):
        c = dict(cfg)
        c["log.name"] = f"{cfg['log.name'] or 'bench'}_d{dims[i]}"
        if eps:
            c["problem.eps"] = eps[i]
        return _solve_to_files(c, dims[i])

    workers = max(1, cfg["bench.workers"])
    if workers == 1:
        results = [one(i) for i in range(len(dims))]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(len(dims))))
    summary = {"dims": dims, "runs": []}
    code = EXIT_OK
    for d, (status, log, path) in zip(dims, results):
        if status != "ok":
            code = EXIT_DIVERGED
            summary["runs"].append({"d": d, "converged": False, "log": str(path)})
            print(f"d={d}: no convergence ({log})")
            continue
        inner = [r for r in log if r.event == "inner"]
        summary["runs"].append({
            "d": d, "converged": True, "log": str(path),
            "iterations": log.meta["iterations"],
            "residual_per_iteration": [r.residual for r in log],
            "residual_vs_rank": [[r.max_rank, r.residual] for r in inner],
            "residual_vs_support": [[r.support, r.residual] for r in inner],
            "pcg_per_iteration": [r.pcg_iterations for r in inner],
        })
        print(f"d={d}: residual {log[-1].residual:.3e}, {log.meta['iterations']} iterations, "
              f"max PCG {max(r.pcg_iterations for r in inner)}, "
              f"wall {log[-1].wall_time:.1f}s")
    out = log_dir(cfg) / f"{cfg['log.name'] or 'bench'}_summary.json"
    out.write_text(json.dumps(summary, indent=1) + "\n")
    print(f"summary: {out}")
    return code


def cmd_precond_check(cfg) -> int:
    deltas = _floats(cfg, "precond.delta")
    Ts = _floats(cfg, "precond.T")
    if not deltas or not Ts:
        raise ConfigError("precond.delta and precond.T must be non-empty")
    bad = 0
    for delta in deltas:
        for T in Ts:
            try:
                P = build_expsum(delta, eta=cfg["precond.eta"], T=T)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            err = accuracy(P, cfg["precond.points"])
            ok = err <= delta
            bad += not ok
            print(f"delta={delta:g} T={T:g} terms={P.n_terms} "
                  f"max sqrt(t)|1/sqrt(t)-phi(t)|={err:.3e} {'ok' if ok else 'VIOLATED'}")
    return EXIT_OK if bad == 0 else EXIT_CONFIG


def cmd_diag_ratio(cfg) -> int:
    try:
        rep = diagnostics.ratio_experiment(_ints(cfg, "diag.dims"), _ints(cfg, "diag.sizes"),
                                           _floats(cfg, "diag.alphas"), cfg["diag.trials"],
                                           cfg["diag.structure"], seed=cfg["run.seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for row in rep.summary():
        print(f"d={row['d']} shape={row['shape']} alpha={row['alpha']:g} "
              f"ratio mean={row['ratio_mean']:.3f} [{row['ratio_min']:.3f}, "
              f"{row['ratio_max']:.3f}] window=[{row['bound_low']:.3f}, "
              f"{row['bound_high']:.3f}] inside={row['within_bounds']}/{row['trials']} "
              f"NQ>=NE {row['nq_ge_ne']}/{row['trials']}")
    for shape in rep.skipped:
        print(f"skipped shape {shape}: beyond exhaustive-search limits")
    fam = diagnostics.diagonal_family()
    for row in fam:
        print(f"diagonal t={row['t']:g} n={row['n']} NE={row['NE']} NQ={row['NQ']} "
              f"ratio={row['ratio']:.2f}")
    if cfg["diag.csv"]:
        Path(cfg["diag.csv"]).write_text(rep.to_csv())
    monotone = all(a["ratio"] < b["ratio"] for a, b in zip(fam, fam[1:]))
    ok = rep.nq_ge_ne == rep.n_trials and monotone
    print(f"NQ >= NE in {rep.nq_ge_ne}/{rep.n_trials} trials; bound window held in "
          f"{rep.within_bounds}/{rep.n_trials}; diagonal ratio monotone: {monotone}")
    return EXIT_OK if ok else EXIT_CONFIG


def cmd_params_check(cfg) -> int:
    d = cfg["problem.d"]
    kappa = cfg["problem.kappa"]
    if kappa is None:
        lo, hi = spectrum_for(cfg, Basis1D(), d, _delta(cfg))
        kappa = hi / lo * SAFETY**2
    p = params_for(cfg, d, kappa)
    try:
        ms, ks = validate_params(p, d, kappa)
    except ParameterError as exc:
        for name, msg in exc.violations:
            print(f"violated {name}: {msg}")
        return EXIT_CONFIG
    print(f"d={d} kappa={kappa:.4g}: parameters admissible, M*={ms}, K*={ks}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "precond-check": cmd_precond_check,
    "diag-ratio": cmd_diag_ratio,
    "params-check": cmd_params_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="htawgm", description=__doc__.split("\n\n")[0],
        epilog="Any config key can be given as --section.key VALUE.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat section.key=value file")
    args, rest = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config, rest)
        np.random.seed(cfg["run.seed"])
        return COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionError, PreconditionerWindowError, ArithmeticError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
