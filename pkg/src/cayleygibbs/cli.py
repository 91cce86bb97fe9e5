"""Config-driven command line front end.

A job is a flat ``key = value`` document with ``#`` comments, e.g.::

    command = solve
    kernel = tau
    tau = 1/1
    variant = corrected
    nodes = 64

Exit codes: 0 success, 1 numerical non-convergence, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .analytic import (analytic_f1, analytic_f2, check_degenerate_operator, printed_image_of_f2,
                       verify_fixed_point)
from .kernel import (CouplingParams, Kernel, OddRational, TauVariant, ising_interactions,
                     make_ising_kernel, make_potts_kernel, make_sum_kernel, make_tau_kernel,
                     positivity_scan, reduce_to_pair_kernel, separability_test)
from .operator import GridFunction, apply_A, apply_pair_A
from .quadrature import default_rule, gauss_legendre, graded_gauss_legendre, trapezoid_rule
from .solver import (NotConverged, SolverConfig, multistart_search, refine_newton,
                     solve_period_two, solve_translation_invariant)
from .tree import BoundaryField, build_tree, compatibility_residual

__all__ = ["JobSpec", "ConfigError", "ParseError", "ValidationError", "parse_config", "emit",
           "execute", "main"]

SCHEMA_VERSION = "1"
OUTPUT_DIR_ENV = "CAYLEYGIBBS_OUTPUT_DIR"

COMMANDS = ("solve", "solve-period2", "verify-analytic", "scan-positivity",
            "check-separability", "oracle-check", "sweep")
FAMILIES = ("ising", "potts", "tau", "sum")

ZETAS: dict[str, Callable] = {
    "exp_tu": lambda t, u: np.exp(t * u),
    "half": lambda t, u: np.full(np.broadcast_shapes(np.shape(t), np.shape(u)), 0.5),
}


class ConfigError(ValueError):
    def record(self) -> dict:
        return {"type": type(self).__name__, "message": str(self)}


class ParseError(ConfigError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line

    def record(self):
        return {**super().record(), "line": self.line}


class ValidationError(ConfigError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key

    def record(self):
        return {**super().record(), "key": self.key}


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return conv


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected a boolean")


def _taus(text):
    return tuple(OddRational.parse(s) for s in text.split(",") if s.strip())


# key -> (converter, default)
_KEYS: dict[str, tuple[Callable, Any]] = {
    "command": (_choice(*COMMANDS), None),
    "kernel": (_choice(*FAMILIES), None),
    "J3": (float, 0.0),
    "J": (float, 0.0),
    "J1": (float, 0.0),
    "alpha": (float, 0.0),
    "beta": (float, 1.0),
    "tau": (OddRational.parse, None),
    "variant": (TauVariant, TauVariant.CORRECTED),
    "potts_mode": (_choice("reduced", "naive_diagonal"), "reduced"),
    "zeta": (_choice(*ZETAS), "exp_tu"),
    "nodes": (int, 64),
    "rule": (_choice("auto", "gauss", "graded"), "auto"),
    "tol": (float, 1e-10),
    "max_iter": (int, 10000),
    "damping": (float, 1.0),
    "dedup_tol": (float, 1e-6),
    "seed": (int, 0),
    "n_starts": (int, 20),
    "newton": (_bool, False),
    "resolution": (int, 201),
    "grid": (int, 17),
    "sep_tol": (float, 1e-10),
    "depth": (int, 2),
    "oracle_grid": (int, 7),
    "oracle_method": (_choice("enumerate", "factorized"), "enumerate"),
    "h_source": (_choice("solver", "zero"), "solver"),
    "taus": (_taus, (OddRational(1), OddRational(3), OddRational(5), OddRational(7),
                     OddRational(9))),
    "output": (str, None),
    "format": (_choice("json", "csv"), "json"),
}


def _fmt(value) -> str:
    if isinstance(value, TauVariant):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class JobSpec:
    """A validated job; ``settings`` maps every known key to its typed value."""

    settings: tuple[tuple[str, Any], ...]

    def __getattr__(self, name):
        for k, v in object.__getattribute__(self, "settings"):
            if k == name:
                return v
        raise AttributeError(name)

    def get(self, key):
        return dict(self.settings)[key]

    @property
    def couplings(self) -> CouplingParams:
        return CouplingParams(self.get("J3"), self.get("J"), self.get("J1"), self.get("alpha"),
                              self.get("beta"))

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(self.tol, self.max_iter, self.damping, self.dedup_tol, self.seed)

    def echo(self) -> dict[str, str | None]:
        return {k: (None if v is None else _fmt(v)) for k, v in self.settings}


def parse_config(text: str) -> JobSpec:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(lineno, f"expected 'key = value', got {body!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ParseError(lineno, "empty key")
        if key in raw:
            raise ParseError(lineno, f"duplicate key {key!r}")
        raw[key] = value
    return _validate(raw)


def _validate(raw: dict[str, str]) -> JobSpec:
    for key in raw:
        if key not in _KEYS:
            raise ValidationError(key, "unknown key")
    values: dict[str, Any] = {}
    for key, (conv, default) in _KEYS.items():
        if key in raw and raw[key] != "":
            try:
                values[key] = conv(raw[key])
            except ValueError as exc:
                raise ValidationError(key, str(exc)) from None
        else:
            values[key] = default
    if values["command"] is None:
        raise ValidationError("command", "missing required key")
    if values["kernel"] is None and values["command"] != "sweep":
        raise ValidationError("kernel", "missing required key")
    if values["kernel"] == "tau" and values["tau"] is None:
        raise ValidationError("tau", "required for the tau kernel")
    if values["beta"] <= 0:
        raise ValidationError("beta", "must be positive")
    if values["kernel"] == "potts" and values["J3"] != 0:
        raise ValidationError("J3", "the Potts kernel has no triple term")
    checks = [("nodes", 1 <= values["nodes"] <= 512, "must be in [1, 512]"),
              ("tol", values["tol"] > 0, "must be positive"),
              ("max_iter", values["max_iter"] >= 1, "must be at least 1"),
              ("damping", 0 < values["damping"] <= 1, "must lie in (0, 1]"),
              ("dedup_tol", values["dedup_tol"] > 0, "must be positive"),
              ("n_starts", values["n_starts"] >= 1, "must be at least 1"),
              ("resolution", values["resolution"] >= 2, "must be at least 2"),
              ("grid", values["grid"] >= 3, "must be at least 3"),
              ("sep_tol", values["sep_tol"] > 0, "must be positive"),
              ("depth", 2 <= values["depth"] <= 3, "oracle depth must be 2 or 3"),
              ("oracle_grid", values["oracle_grid"] >= 2, "must be at least 2"),
              ("taus", len(values["taus"]) > 0, "needs at least one value")]
    for key, ok, msg in checks:
        if not ok:
            raise ValidationError(key, msg)
    if values["rule"] == "graded" and values["nodes"] % 2:
        raise ValidationError("nodes", "the graded rule needs an even node count")
    if values["command"] == "oracle-check" and values["kernel"] != "ising":
        raise ValidationError("kernel", "oracle-check is defined for the ising interactions")
    if values["format"] == "csv" and values["command"] != "sweep":
        raise ValidationError("format", "csv output is only available for sweep")
    return JobSpec(tuple(values.items()))


def emit(job: JobSpec) -> str:
    """Serialize a job back to config text; parse_config(emit(job)) == job."""
    lines = [f"{k} = {_fmt(v)}" for k, v in job.settings if v is not None]
    return "\n".join(lines) + "\n"


def build_kernel(job: JobSpec) -> Kernel:
    family = job.kernel
    if family == "ising":
        return make_ising_kernel(job.couplings)
    if family == "potts":
        return make_potts_kernel(job.couplings, job.potts_mode)
    if family == "tau":
        return make_tau_kernel(job.tau, job.variant)
    return make_sum_kernel(ZETAS[job.zeta], name=job.zeta)


def build_rule(job: JobSpec, K: Kernel):
    if job.rule == "gauss":
        return gauss_legendre(job.nodes)
    if job.rule == "graded":
        return graded_gauss_legendre(job.nodes, job.tau.q if job.tau else 1)
    return default_rule(K, job.nodes)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fixed_point_record(K, rule, fp):
    return {**K.describe(), "rule": rule.describe(), **fp.as_dict()}


def _run_solve(job):
    K = build_kernel(job)
    rule = build_rule(job, K)
    cfg = job.solver
    fps = multistart_search(K, cfg, job.n_starts, rule)
    if job.newton:
        polished = []
        for fp in fps:
            try:
                nfp = refine_newton(K, fp.f, cfg)
                polished.append(dataclasses.replace(nfp, start=fp.start))
            except (NotConverged, ArithmeticError, RuntimeError):
                polished.append(fp)
        fps = polished
    records = [_fixed_point_record(K, rule, fp) for fp in fps]
    status = 0 if fps else 1
    return status, {"kernel": K.describe(), "rule": rule.describe(), "n_starts": job.n_starts,
                    "distinct_fixed_points": len(fps), "fixed_points": records}


def _run_period2(job):
    K = build_kernel(job)
    rule = build_rule(job, K)
    cfg = job.solver
    rng = np.random.default_rng(job.seed)
    solutions, failures = [], []
    for i in range(job.n_starts):
        f0 = GridFunction(rule, np.exp(rng.uniform(-0.5, 0.5, rule.n)))
        g0 = GridFunction(rule, np.exp(rng.uniform(-0.5, 0.5, rule.n)))
        try:
            sol = solve_period_two(K, cfg, f0, g0)
        except (NotConverged, ArithmeticError) as exc:
            failures.append({"start": i, "type": type(exc).__name__, "message": str(exc)})
            continue
        solutions.append({**K.describe(), **dataclasses.replace(sol, start=i).as_dict()})
    counts: dict[str, int] = {}
    for s in solutions:
        counts[s["classification"]] = counts.get(s["classification"], 0) + 1
    status = 0 if solutions else 1
    return status, {"kernel": K.describe(), "rule": rule.describe(), "solutions": solutions,
                    "classification_counts": counts, "failures": failures}


def _run_verify(job):
    K = build_kernel(job)
    rule = build_rule(job, K)
    reports = [verify_fixed_point(K, analytic_f1(rule), "f1").as_dict()]
    result: dict[str, Any] = {"kernel": K.describe(), "rule": rule.describe()}
    if K.family == "tau":
        rep = verify_fixed_point(K, analytic_f2(job.tau, rule), "f2")
        reports.append(rep.as_dict())
        if job.variant is TauVariant.PRINTED:
            image = apply_A(K, analytic_f2(job.tau, rule), check_positive=False).values
            closed = printed_image_of_f2(rule.nodes, job.tau)
            result["printed_closed_form_defect"] = float(np.max(np.abs(image - closed)))
    else:
        result["degenerate_operator"] = check_degenerate_operator(K, rule, 20, job.seed)
    result["reports"] = reports
    return 0, result


def _run_scan(job):
    K = build_kernel(job)
    return 0, {"kernel": K.describe(), "scan": positivity_scan(K, job.resolution).as_dict()}


def _run_separability(job):
    K = build_kernel(job)
    rep = separability_test(K, job.grid, job.sep_tol)
    result = {"kernel": K.describe(), "separability": rep.as_dict()}
    if rep.separable:
        rule = build_rule(job, K)
        f = GridFunction.constant(rule)
        t1, t2 = reduce_to_pair_kernel(K, rep)
        defect = np.max(np.abs(apply_pair_A(t1, t2, f).values - apply_A(K, f).values))
        result["pair_operator_defect"] = float(defect)
    return 0, result


def _run_oracle(job):
    params = job.couplings
    K = make_ising_kernel(params)
    tree = build_tree(job.depth)
    m = job.oracle_grid
    result: dict[str, Any] = {"kernel": K.describe(), "h_source": job.h_source}
    if job.h_source == "solver":
        rule = trapezoid_rule(m)
        fp = solve_translation_invariant(K, job.solver, GridFunction.constant(rule))
        h = BoundaryField.translation_invariant(tree, np.log(fp.f.values))
        result["solver_residual"] = fp.residual
    else:
        h = BoundaryField.zero(tree, m)
    rep = compatibility_residual(tree, params, ising_interactions(), h, m, job.oracle_method)
    result.update(rep.as_dict())
    return 0, result


def _run_sweep(job):
    rows = []
    for tau in job.taus:
        scan = positivity_scan(make_tau_kernel(tau, job.variant), job.resolution)
        rows.append({"tau": str(tau), "variant": job.variant.value, "min_value": scan.min_value,
                     "argmin_t": scan.argmin[0], "argmin_u": scan.argmin[1],
                     "argmin_v": scan.argmin[2], "positive": scan.positive})
    return 0, {"rows": rows}


_RUNNERS = {
    "solve": _run_solve,
    "solve-period2": _run_period2,
    "verify-analytic": _run_verify,
    "scan-positivity": _run_scan,
    "check-separability": _run_separability,
    "oracle-check": _run_oracle,
    "sweep": _run_sweep,
}


def _envelope(job: JobSpec | None, status: str, result, errors) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": job.command if job else None,
        "seed": job.seed if job else None,
        "config": job.echo() if job else None,
        "status": status,
        "result": result,
        "errors": errors,
    }


def run_job(job: JobSpec) -> tuple[int, dict]:
    """Execute a job and return (exit code, report payload without timestamp)."""
    try:
        code, result = _RUNNERS[job.command](job)
    except NotConverged as exc:
        return 1, _envelope(job, "not_converged", None,
                            [{"type": "NotConverged", "message": str(exc),
                              "residual_history_tail": exc.history[-10:]}])
    except ArithmeticError as exc:
        return 1, _envelope(job, "numerical_failure", None,
                            [{"type": type(exc).__name__, "message": str(exc)}])
    except ValueError as exc:
        return 2, _envelope(job, "config_error", None,
                            [{"type": type(exc).__name__, "message": str(exc)}])
    status = "ok" if code == 0 else "not_converged"
    errors = [] if code == 0 else [{"type": "NotConverged",
                                    "message": "no start converged"}]
    return code, _envelope(job, status, _clean(result), errors)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


def _csv_text(report: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# tool_version={report['tool_version']} seed={report['seed']}\n")
    buf.write(f"# config={json.dumps(report['config'], sort_keys=True)}\n")
    rows = (report["result"] or {}).get("rows", [])
    fields = ["tau", "variant", "min_value", "argmin_t", "argmin_u", "argmin_v", "positive"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def output_path(job: JobSpec | None, override: str | None = None) -> Path:
    ext = "csv" if job is not None and job.format == "csv" else "json"
    name = override or (job.output if job else None) or \
        f"{job.command if job else 'error'}.{ext}"
    path = Path(name)
    if not path.is_absolute():
        path = Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / path
    return path


def execute(job: JobSpec, path: str | os.PathLike | None = None) -> tuple[int, Path, dict]:
    """Run ``job``, write its report, return (exit code, path, payload)."""
    code, report = run_job(job)
    out = output_path(job, None if path is None else str(path))
    out.parent.mkdir(parents=True, exist_ok=True)
    stamped = {**report, "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    if job.format == "csv" and code == 0:
        out.write_text(_csv_text(report))
    else:
        out.write_text(dumps(stamped) + "\n")
    return code, out, report


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cayleygibbs", description=__doc__.split("\n")[0])
    ap.add_argument("config", help="job file in key = value form, or - for stdin")
    ap.add_argument("-o", "--output", help="report path (overrides the config's output key)")
    args = ap.parse_args(argv)
    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text()
        job = parse_config(text)
    except (OSError, ConfigError) as exc:
        rec = exc.record() if isinstance(exc, ConfigError) else {
            "type": type(exc).__name__, "message": str(exc)}
        report = {**_envelope(None, "config_error", None, [rec]),
                  "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
        print(dumps(report), file=sys.stderr)
        return 2
    code, out, report = execute(job, args.output)
    print(json.dumps({"status": report["status"], "exit_code": code, "report": str(out)}))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
