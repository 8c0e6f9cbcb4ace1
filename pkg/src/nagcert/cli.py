"""Config-driven experiment runner.

    nagcert run CONFIG [--out DIR] [--jobs N]
    nagcert --verify-only TRACE.csv

A config is a JSON object::

    {
      "name": "two-mode",
      "problem": {"kind": "quadratic", "hessian_diagonal": [0.02, 0.0005]},
      "methods": ["nesterov"],
      "s": 1.0,             # or a list, or "s_factor": 0.9 for s = 0.9 / L
      "r": [2, 5, -1.5],
      "x0": [1, 1],
      "max_iter": 100000,
      "burn_in": 20000,
      "fit_floor": 0,       # default 1e2 * eps * f_err(0)
      "certify": false,
      "rate_tolerance": 0.05,
      "r_independence_tolerance": 0.05
    }

Each (method, s, r) run writes a CSV trace; ``report.json`` collects the
threshold, rate base, verdicts and rate fits.  The exit status is 0 only when
every requested verdict passes.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import analysis, lyapunov, ode, optimizers, spectral
from .errors import ConfigError, InsufficientDataError, InvalidInputError, NagcertError
from .problems import (
    CompositeProblem,
    as_composite,
    make_lasso_deblur,
    make_quadratic,
    smooth_part,
    spike_signal,
)

log = logging.getLogger("nagcert")

OUT_ENV = "NAGCERT_OUT"
DISCRETE_HEADER = ("k",) + optimizers.TRACE_COLUMNS
CONTINUOUS_HEADER = ("t", "f_err", "lyapunov", "theorem3_bound")
CERTIFIABLE = ("nesterov", "nesterov-phase", "fista")
ALL_METHODS = optimizers.METHODS + ("ode",)

_KNOWN_KEYS = {
    "name", "problem", "methods", "s", "s_factor", "r", "x0", "max_iter", "record_every", "burn_in",
    "certify", "window", "tol", "shift_start", "rate_tolerance", "r_independence_tolerance",
    "t0", "t_end", "dt", "sample_every", "ode_tol", "output_dir", "seed", "spectral",
    "fit_floor",
}


# ---------------------------------------------------------------------------
# Config


@dataclass
class ExperimentConfig:
    name: str
    problem: dict
    methods: list
    s_values: list
    r_values: list
    x0: Optional[list] = None
    max_iter: int = 1000
    record_every: Optional[int] = None
    burn_in: int = 0
    fit_floor: Optional[float] = None
    certify: bool = False
    window: int = 2000
    tol: float = 1e-8
    shift_start: bool = False
    rate_tolerance: Optional[float] = None
    r_independence_tolerance: Optional[float] = None
    t0: Optional[float] = None
    t_end: float = 100.0
    dt: float = 0.01
    sample_every: int = 1
    ode_tol: float = 1e-3
    output_dir: Optional[str] = None
    seed: int = 0
    spectral: bool = True
    raw: dict = field(default_factory=dict)


def _field_error(name: str, msg: str) -> ConfigError:
    return ConfigError(f"field '{name}': {msg}")


def _as_list(value, name: str, cast=float) -> list:
    vals = value if isinstance(value, list) else [value]
    try:
        return [cast(v) for v in vals]
    except (TypeError, ValueError):
        raise _field_error(name, f"expected number or list of numbers, got {value!r}")


def build_problem(spec: dict, seed: int = 0):
    """Construct the problem described by a config's ``problem`` block."""
    if not isinstance(spec, dict):
        raise _field_error("problem", "expected an object")
    kind = spec.get("kind")
    try:
        if kind == "quadratic":
            if "hessian_diagonal" not in spec:
                raise _field_error("problem.hessian_diagonal", "required for kind 'quadratic'")
            return make_quadratic(spec["hessian_diagonal"], spec.get("shift"))
        if kind == "lasso-deblur":
            if "kernel" not in spec:
                raise _field_error("problem.kernel", "required for kind 'lasso-deblur'")
            if "signal" in spec:
                signal = spec["signal"]
            else:
                signal = spike_signal(int(spec.get("signal_length", 64)), int(spec.get("n_spikes", 6)),
                                      int(spec.get("signal_seed", 7)))
            lam = 0.0 if spec.get("g_zero", False) else float(spec.get("lambda", 0.1))
            return make_lasso_deblur(spec["kernel"], signal, int(spec.get("noise_seed", seed)), lam,
                                     float(spec.get("ridge", 0.5)), float(spec.get("noise_std", 1e-2)))
    except NagcertError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise _field_error("problem", str(exc)) from exc
    raise _field_error("problem.kind", f"expected 'quadratic' or 'lasso-deblur', got {kind!r}")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1:1: top level must be a JSON object")
    unknown = sorted(set(raw) - _KNOWN_KEYS)
    if unknown:
        raise _field_error(unknown[0], "unknown key")
    if "problem" not in raw:
        raise _field_error("problem", "required")
    methods = raw.get("methods", ["nesterov"])
    methods = methods if isinstance(methods, list) else [methods]
    for m in methods:
        if m not in ALL_METHODS:
            raise _field_error("methods", f"unknown method {m!r}; choose from {ALL_METHODS}")
    if "s" in raw and "s_factor" in raw:
        raise _field_error("s", "give either 's' or 's_factor', not both")

    def num(key, default, cast=float):
        if key not in raw:
            return default
        try:
            return cast(raw[key])
        except (TypeError, ValueError):
            raise _field_error(key, f"expected {cast.__name__}, got {raw[key]!r}")

    cfg = ExperimentConfig(
        name=str(raw.get("name", Path(source).stem)),
        problem=raw["problem"],
        methods=list(methods),
        s_values=[],
        r_values=_as_list(raw.get("r", 2.0), "r"),
        x0=raw.get("x0"),
        max_iter=num("max_iter", 1000, int),
        record_every=num("record_every", None, int),
        burn_in=num("burn_in", 0, int),
        fit_floor=num("fit_floor", None),
        certify=bool(raw.get("certify", False)),
        window=num("window", 2000, int),
        tol=num("tol", 1e-8),
        shift_start=bool(raw.get("shift_start", False)),
        rate_tolerance=num("rate_tolerance", None),
        r_independence_tolerance=num("r_independence_tolerance", None),
        t0=num("t0", None),
        t_end=num("t_end", 100.0),
        dt=num("dt", 0.01),
        sample_every=num("sample_every", 1, int),
        ode_tol=num("ode_tol", 1e-3),
        output_dir=raw.get("output_dir"),
        seed=num("seed", 0, int),
        spectral=bool(raw.get("spectral", True)),
        raw=raw,
    )
    if cfg.max_iter < 1:
        raise _field_error("max_iter", "must be >= 1")
    if cfg.record_every is not None and cfg.record_every < 1:
        raise _field_error("record_every", "must be >= 1")

    problem = build_problem(cfg.problem, cfg.seed)
    L = problem.L
    if "s_factor" in raw:
        cfg.s_values = [f / L for f in _as_list(raw["s_factor"], "s_factor")]
    else:
        cfg.s_values = _as_list(raw.get("s", 0.9 / L), "s")
    for s in cfg.s_values:
        if not (0.0 < s < 1.0 / L):
            raise _field_error("s", f"step size {s} violates 0 < s < 1/L = {1.0 / L:.17g}")
    for r in cfg.r_values:
        if optimizers.is_negative_integer(r) and not cfg.shift_start:
            raise _field_error("r", f"integer r={r:g} makes k + r vanish; use a non-integer r or set shift_start")
    if cfg.x0 is not None and len(cfg.x0) != problem.dimension:
        raise _field_error("x0", f"expected length {problem.dimension}, got {len(cfg.x0)}")
    if "fista" in cfg.methods and not isinstance(problem, CompositeProblem):
        log.info("fista on a smooth problem runs with g = 0")
    return cfg


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from exc
    return parse_config(text, str(p))


# ---------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else format(x, ".17g")


def emit_csv(trace, path: str | os.PathLike) -> Path:
    """Write a discrete :class:`Trace` or a :class:`ContinuousTrace` as CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(trace, ode.ContinuousTrace):
            w.writerow(CONTINUOUS_HEADER)
            for row in trace.rows():
                w.writerow([_fmt(v) for v in row])
        else:
            w.writerow(DISCRETE_HEADER)
            cols = [getattr(trace, c) for c in optimizers.TRACE_COLUMNS]
            for i, k in enumerate(trace.k):
                w.writerow([str(int(k))] + [_fmt(c[i]) for c in cols])
    return path


def read_csv(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read a trace CSV into float columns (empty fields become NaN)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = rows[0]
    if tuple(header) not in (DISCRETE_HEADER, CONTINUOUS_HEADER):
        raise InvalidInputError(f"{path}: unrecognised header {header}")
    data = np.array([[float(v) if v != "" else math.nan for v in row] for row in rows[1:]], dtype=float)
    data = data.reshape(len(rows) - 1, len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def write_spectral_csv(rows, path: str | os.PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(spectral.SWEEP_COLUMNS)
        for row in rows:
            w.writerow([str(row[0])] + [_fmt(v) for v in row[1:]])
    return path


# ---------------------------------------------------------------------------
# Runs


def run_id(method: str, s: float, r: float) -> str:
    return f"{method}_s{s:.6g}_r{r:g}"


def _execute(cfg: ExperimentConfig, method: str, s: float, r: float, out_dir: str) -> dict:
    """One run; returns its report entry.  Executed in worker processes with --jobs."""
    problem = build_problem(cfg.problem, cfg.seed)
    sm = smooth_part(problem)
    rid = run_id(method, s, r)
    entry: dict[str, Any] = {"id": rid, "method": method, "s": s, "r": r}
    default_x0 = np.ones(problem.dimension) if cfg.problem.get("kind") == "quadratic" else np.zeros(problem.dimension)
    x0 = default_x0 if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    try:
        if method == "ode":
            tr = ode.integrate(sm, s, x0, cfg.t0, cfg.t_end, cfg.dt, cfg.sample_every)
            entry.update(T=tr.T, E_T=tr.E_T)
            try:
                rep = ode.ode_rate_check(tr, cfg.ode_tol)
                entry.update(bounds_passed=rep.bound_passed, max_ratio_f=rep.max_ratio,
                             lyapunov_passed=rep.lyapunov_passed,
                             max_lyapunov_increase=rep.max_lyapunov_increase)
            except InsufficientDataError as exc:
                entry.update(bounds_passed=False, error=str(exc))
            entry["csv"] = emit_csv(tr, Path(out_dir) / f"{rid}.csv").name
            return entry

        target = problem
        if method == "fista" and not isinstance(problem, CompositeProblem):
            target = as_composite(problem)
        record_every = cfg.record_every
        if cfg.certify and method in CERTIFIABLE:
            cert = lyapunov.certify(method, target, s, r, x0, window=cfg.window, max_iter=cfg.max_iter,
                                    tol=cfg.tol, record_every=record_every or 1, shift_start=cfg.shift_start)
            trace = cert.trace
            entry.update(cert.summary())
        else:
            trace = optimizers.run(method, target, s, r, x0, cfg.max_iter, record_every,
                                   shift_start=cfg.shift_start)
        entry["csv"] = emit_csv(trace, Path(out_dir) / f"{rid}.csv").name

        mu_s = sm.mu * s
        predicted = math.log1p(-mu_s)
        entry["predicted_slope"] = predicted
        try:
            fit = analysis.fit_linear_rate(trace.k, trace.f_err, burn_in=cfg.burn_in, floor=cfg.fit_floor)
            entry["fit"] = fit.to_dict()
            entry["rate_relative_error"] = abs(fit.slope - predicted) / abs(predicted)
            if method in ("nesterov", "nesterov-phase", "fista"):
                corrected = analysis.fit_linear_rate(trace.k, trace.f_err, burn_in=cfg.burn_in,
                                                         floor=cfg.fit_floor, k_power=r + 1)
                entry["fit_prefactor_corrected"] = corrected.to_dict()
                entry["corrected_rate_relative_error"] = abs(corrected.slope - predicted) / abs(predicted)
        except InsufficientDataError as exc:
            entry["fit_error"] = str(exc)
        return entry
    except NagcertError as exc:
        raise NagcertError(f"run {rid} failed: {exc}") from exc


def _spectral_outputs(cfg: ExperimentConfig, out_dir: Path) -> list[str]:
    if cfg.problem.get("kind") != "quadratic" or not cfg.spectral:
        return []
    diag = np.asarray(cfg.problem["hessian_diagonal"], dtype=float)
    names = []
    ks = spectral.log_spaced_ks(1, max(cfg.max_iter, 2), 200)
    for s, r in itertools.product(cfg.s_values, cfg.r_values):
        for i, c in enumerate(diag):
            mu = 2.0 * c
            if not 0 < mu * s < 1:
                continue
            valid = [int(k) for k in ks if k + r != 0]
            rows = spectral.sweep_rows(spectral.spectral_sweep(mu, s, r, valid))
            name = f"spectral_mode{i}_s{s:.6g}_r{r:g}.csv"
            write_spectral_csv(rows, out_dir / name)
            names.append(name)
    return names


def _verdicts(cfg: ExperimentConfig, entries: list[dict]) -> tuple[dict, dict]:
    verdicts: dict[str, bool] = {}
    r_independence: dict[str, float] = {}
    for e in entries:
        rid = e["id"]
        if "bounds_passed" in e:
            verdicts[f"{rid}:bounds"] = bool(e["bounds_passed"])
        if "contraction_passed" in e:
            verdicts[f"{rid}:contraction"] = bool(e["contraction_passed"])
        if "lyapunov_passed" in e:
            verdicts[f"{rid}:lyapunov"] = bool(e["lyapunov_passed"])
        if cfg.rate_tolerance is not None and e["method"] != "ode":
            ok = "rate_relative_error" in e and e["rate_relative_error"] <= cfg.rate_tolerance
            verdicts[f"{rid}:rate"] = bool(ok)
    for method in cfg.methods:
        if method == "ode":
            continue
        for s in cfg.s_values:
            group = [e for e in entries if e["method"] == method and e["s"] == s and "fit" in e]
            if len(group) >= 2:
                dev = analysis.compare_rates([e["fit"]["slope"] for e in group])
                key = f"{method}_s{s:.6g}"
                r_independence[key] = dev
                if cfg.r_independence_tolerance is not None:
                    verdicts[f"{key}:r_independence"] = dev <= cfg.r_independence_tolerance
    return verdicts, r_independence


def resolve_out_dir(cli_out: Optional[str], cfg: Optional[ExperimentConfig]) -> Path:
    if cli_out:
        return Path(cli_out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("nagcert-out")


def run_experiment(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> tuple[int, dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    # the ODE does not depend on r, so it runs once per step size
    combos = [(m, s, r) for m in cfg.methods for s in cfg.s_values
              for r in (cfg.r_values[:1] if m == "ode" else cfg.r_values)]
    if jobs > 1 and len(combos) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_execute, cfg, m, s, r, str(out_dir)) for m, s, r in combos]
            entries = [f.result() for f in futures]
    else:
        entries = [_execute(cfg, m, s, r, str(out_dir)) for m, s, r in combos]

    verdicts, r_indep = _verdicts(cfg, entries)
    first_cert = next((e for e in entries if "K" in e), None)
    report = {
        "name": cfg.name,
        "K": first_cert["K"] if first_cert else None,
        "rate_base": first_cert["rate_base"] if first_cert else None,
        "runs": entries,
        "r_independence": r_indep,
        "spectral_csv": _spectral_outputs(cfg, out_dir),
        "verdicts": verdicts,
        "passed": all(verdicts.values()),
    }
    with (out_dir / "report.json").open("w") as fh:
        json.dump(report, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return (0 if report["passed"] else 1), report


# ---------------------------------------------------------------------------
# Verification from CSV


def verify_trace(path: str | os.PathLike, tol: float = 1e-8, ode_tol: float = 1e-3,
                 lyapunov_tol: float = 1e-6) -> dict:
    """Recompute bound and contraction verdicts from a CSV trace.

    Discrete traces need ``K`` and ``rate_base`` for the contraction check;
    they are taken from ``report.json`` next to the CSV when present.
    """
    path = Path(path)
    cols = read_csv(path)
    result: dict[str, Any] = {"trace": path.name}
    if "t" in cols:
        sel = ~np.isnan(cols["theorem3_bound"])
        if sel.sum() < 2:
            raise InsufficientDataError("no samples past the threshold time")
        f, b, E = cols["f_err"][sel], cols["theorem3_bound"][sel], cols["lyapunov"][sel]
        result["bounds_passed"] = bool(np.all(f <= b * (1 + ode_tol)))
        result["lyapunov_passed"] = bool(np.all(E[1:] <= E[:-1] * (1 + lyapunov_tol)))
    else:
        sel = ~np.isnan(cols["bound_f"])
        if not np.any(sel):
            raise InvalidInputError("trace has no bound columns; run with certification enabled")
        grad = cols["prox_grad_sq"] if not np.all(np.isnan(cols["prox_grad_sq"])) else cols["grad_sq"]
        result["bounds_passed"] = bool(np.all(cols["f_err"][sel] <= cols["bound_f"][sel] * (1 + tol))
                                       and np.all(grad[sel] <= cols["bound_grad"][sel] * (1 + tol)))
        meta = _report_entry(path)
        if meta is not None and "contraction_window" in meta:
            ks = cols["k"]
            K, rb, window = meta["K"], meta["rate_base"], meta["contraction_window"]
            w = (ks >= K) & (ks <= K + window)
            E = cols["lyapunov"][w]
            if np.any(np.diff(ks[w]) != 1) or np.any(np.isnan(E)):
                raise InvalidInputError("contraction window has gaps")
            result["contraction_passed"] = bool(np.all(E[1:] * rb <= E[:-1] * (1 + tol)))
    result["passed"] = all(v for k, v in result.items() if k.endswith("_passed"))
    return result


def _report_entry(csv_path: Path) -> Optional[dict]:
    report = csv_path.parent / "report.json"
    if not report.exists():
        return None
    data = json.loads(report.read_text())
    for e in data.get("runs", []):
        if e.get("csv") == csv_path.name:
            return e
    return None


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nagcert", description="Run and certify accelerated-gradient experiments.")
    p.add_argument("--verify-only", metavar="TRACE", help="re-check the verdicts of an existing CSV trace")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.verify_only:
            result = verify_trace(args.verify_only)
            print(json.dumps(result, indent=2))
            return 0 if result["passed"] else 1
        if args.command != "run":
            parser.print_usage(sys.stderr)
            return 2
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config)
        out_dir = resolve_out_dir(args.out, cfg)
        status, report = run_experiment(cfg, out_dir, args.jobs)
        for key, ok in report["verdicts"].items():
            print(f"{'PASS' if ok else 'FAIL'} {key}")
        print(f"report: {out_dir / 'report.json'}")
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NagcertError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
