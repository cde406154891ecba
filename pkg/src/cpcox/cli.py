"""Command line interface: CSV ingestion, `fit`, and `simulate`.

Reports are emitted as JSON (deterministic: sorted keys, lossless float
repr, no wall-clock fields) or as plain text tables. Exit codes: 0 ok,
1 usage/config error, 2 data error, 3 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import inference
from .errors import (
    AllStartsFailedError,
    ConfigError,
    CpcoxError,
    DataFormatError,
    DegenerateFitError,
    InvalidStartError,
    NoEventsError,
    SingularInformationError,
)
from .model import Dataset, KernelSpec
from .optimizer import FitOptions, multistart_fit
from .simulation import SimConfig, run_study

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_FIT = 3


@dataclass(frozen=True)
class ColumnMapping:
    """Column roles for CSV ingestion. z_cols and u_cols may overlap (the
    same covariate can carry both the common and the subgroup effect);
    intercept_in_x prepends a constant-1 column to X so a plane intercept
    is estimated as the first psi component."""

    time_col: str
    status_col: str
    z_cols: tuple
    u_cols: tuple
    v_col: str
    x_cols: tuple = ()
    intercept_in_x: bool = False
    standardize_v: bool = False

    @classmethod
    def from_file(cls, path) -> "ColumnMapping":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise DataFormatError(f"cannot read mapping file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"mapping file {path} is not valid JSON: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown mapping key(s): {sorted(unknown)}",
                              key=sorted(unknown)[0])
        for k in ("z_cols", "u_cols", "x_cols"):
            if k in raw:
                raw[k] = tuple(raw[k])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"incomplete mapping: {exc}") from exc


def load_csv(path, mapping: ColumnMapping) -> Dataset:
    """Read an RFC-4180-style CSV with a header row into a Dataset."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataFormatError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    index = {name: i for i, name in enumerate(header)}
    needed = ([mapping.time_col, mapping.status_col, mapping.v_col]
              + list(mapping.z_cols) + list(mapping.u_cols) + list(mapping.x_cols))
    for name in needed:
        if name not in index:
            raise DataFormatError(f"column {name!r} not found in {path}", column=name)
    if len(rows) == 1:
        raise DataFormatError(f"{path} has a header but no data rows")

    def cell(row, row_no, name):
        i = index[name]
        if i >= len(row) or row[i].strip() == "":
            raise DataFormatError(
                f"missing value for column {name!r} in row {row_no}",
                row=row_no, column=name)
        try:
            return float(row[i])
        except ValueError as exc:
            raise DataFormatError(
                f"non-numeric value {row[i]!r} for column {name!r} in row {row_no}",
                row=row_no, column=name) from exc

    time, status, zs, us, vs, xs = [], [], [], [], [], []
    for row_no, row in enumerate(rows[1:], start=2):
        time.append(cell(row, row_no, mapping.time_col))
        st = cell(row, row_no, mapping.status_col)
        if st not in (0.0, 1.0):
            raise DataFormatError(
                f"status must be 0 or 1, got {st!r} in row {row_no}",
                row=row_no, column=mapping.status_col)
        status.append(int(st))
        zs.append([cell(row, row_no, c) for c in mapping.z_cols])
        us.append([cell(row, row_no, c) for c in mapping.u_cols])
        vs.append(cell(row, row_no, mapping.v_col))
        xs.append([cell(row, row_no, c) for c in mapping.x_cols])

    n = len(time)
    v = np.asarray(vs, dtype=float)
    if mapping.standardize_v:
        sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
        if sd <= 0:
            raise DataFormatError(
                f"cannot standardize constant column {mapping.v_col!r}",
                column=mapping.v_col)
        v = (v - v.mean()) / sd
    x = np.asarray(xs, dtype=float).reshape(n, len(mapping.x_cols))
    if mapping.intercept_in_x:
        x = np.column_stack([np.ones(n), x])
    return Dataset(
        time=time, status=status,
        z=np.asarray(zs, dtype=float).reshape(n, len(mapping.z_cols)),
        u=np.asarray(us, dtype=float).reshape(n, len(mapping.u_cols)),
        v=v, x=x)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _parse_starts(spec_str, q):
    if spec_str is None:
        return {}
    if spec_str.startswith("grid:"):
        return {"grid_points_per_dim": int(spec_str.split(":", 1)[1])}
    if spec_str.startswith("random:"):
        return {"n_random_starts": int(spec_str.split(":", 1)[1])}
    starts = []
    for part in spec_str.split(";"):
        vec = [float(tok) for tok in part.split(",")]
        if len(vec) != q:
            raise ConfigError(
                f"start {part!r} has {len(vec)} components, expected {q}")
        starts.append(tuple(vec))
    return {"psi_starts": tuple(starts)}


def _json_bytes(report) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _emit(report, text_renderer, out, fmt):
    payload = _json_bytes(report) if fmt == "json" else text_renderer(report)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _g12(x) -> str:
    return "%.12g" % x


def _render_fit_text(report) -> str:
    pay = report["payload"]
    lines = ["change-plane Cox fit", "=" * 44,
             f"{'parameter':<12}{'estimate':>16}{'std.err':>16}"]
    th = pay["theta_hat"]
    se = pay["se"]
    for i, b in enumerate(th["beta"]):
        lines.append(f"{'beta_' + str(i + 1):<12}{_g12(b):>16}{_g12(se['beta'][i]):>16}")
    for i, g in enumerate(th["gamma"]):
        lines.append(f"{'gamma_' + str(i + 1):<12}{_g12(g):>16}{_g12(se['gamma'][i]):>16}")
    for i, p in enumerate(th["psi"]):
        lines.append(f"{'psi_' + str(i + 1):<12}{_g12(p):>16}{'':>16}")
    lines += ["",
              f"loglik      {_g12(pay['loglik'])}",
              f"bandwidth   {_g12(pay['bandwidth'])}",
              f"converged   {pay['converged']}",
              f"subgroup    {pay['subgroup']['n_in']} in / {pay['subgroup']['n_out']} out of {pay['subgroup']['n_in'] + pay['subgroup']['n_out']}",
              "note        no standard error is reported for psi (rate known, law unknown)"]
    for ci_name in ("beta", "gamma"):
        for i, ci in enumerate(pay["ci"][ci_name]):
            lines.append(f"ci {ci_name}_{i + 1}   [{_g12(ci['lower'])}, {_g12(ci['upper'])}] at level {_g12(pay['level'])}")
    for w in report["warnings"]:
        lines.append(f"warning     {w}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    try:
        mapping = ColumnMapping.from_file(args.map)
        ds = load_csv(args.data, mapping)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (DataFormatError, NoEventsError, CpcoxError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA

    q = ds.dims[2]
    try:
        opt_kwargs = _parse_starts(args.starts, q)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    if args.bandwidth != "auto":
        opt_kwargs["bandwidth"] = float(args.bandwidth)
    opts = FitOptions(**opt_kwargs)

    report = {
        "command": "fit",
        "input_digest": _sha256(args.data),
        "seed": args.seed,
        "warnings": [],
        "timing": None,
        "payload": None,
        "error": None,
    }
    try:
        kernel = KernelSpec(bandwidth=opts.resolve_bandwidth(ds.n))
        res = multistart_fit(ds, kernel, opts)
        cov = inference.covariance_xi(ds, res.theta_hat, kernel)
    except (InvalidStartError, DegenerateFitError, AllStartsFailedError,
            SingularInformationError) as exc:
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        _emit(report, lambda r: f"fit failed: {exc}\n", args.out, args.format)
        return EXIT_FIT

    cis = inference.confidence_interval(res.theta_hat.xi, cov, ds.n, level=args.level)
    p1 = ds.dims[0]
    se = [c.std_error for c in cis]
    member = inference.predict_subgroup(ds, res.theta_hat.psi)
    gam = res.theta_hat.gamma
    if len(gam) and all(abs(g) < 2.0 * s for g, s in zip(gam, se[p1:])):
        report["warnings"].append(
            "all subgroup-effect (gamma) estimates are within 2 standard errors "
            "of zero; the classification plane is weakly identified")
    psi = res.theta_hat.psi
    rule = "1{V + " + " + ".join(
        f"({_g12(p)})*X{i + 1}" for i, p in enumerate(psi)) + " >= 0}" if len(psi) \
        else "1{V >= 0}"
    report["payload"] = {
        "theta_hat": {"beta": list(map(float, res.theta_hat.beta)),
                      "gamma": list(map(float, gam)),
                      "psi": list(map(float, psi))},
        "se": {"beta": se[:p1], "gamma": se[p1:]},
        "ci": {"beta": [{"lower": c.lower, "upper": c.upper} for c in cis[:p1]],
               "gamma": [{"lower": c.lower, "upper": c.upper} for c in cis[p1:]]},
        "level": args.level,
        "loglik": float(res.loglik),
        "bandwidth": float(res.bandwidth_used),
        "converged": bool(res.converged),
        "n_starts": int(res.n_starts),
        "subgroup": {"n_in": int(member.sum()), "n_out": int(ds.n - member.sum())},
        "subgroup_rule": rule,
        "n": int(ds.n),
        "dims": list(ds.dims),
    }
    _emit(report, _render_fit_text, args.out, args.format)
    return EXIT_OK


# SimConfig fields settable from a config file, with their parsers
_SIM_SCALARS = {
    "beta": float, "psi1": float, "psi2": float,
    "baseline_lambda": float, "censor_time": float, "z_p": float,
    "v_mean": float, "v_var": float, "x_low": float, "x_high": float,
    "seed": int, "reps": int, "level": float,
    "fix_psi_at_truth": lambda s: s.lower() in ("1", "true", "yes"),
}
_FIT_KEYS = {
    "bandwidth": lambda s: s if s == "auto" else float(s),
    "grid_points_per_dim": int,
    "outer_tol": float, "outer_max_iter": int,
    "newton_max_iter": int, "newton_tol": float,
    "ascent_max_iter": int, "ascent_tol": float,
}


def parse_sim_config(path):
    """Flat key=value config with # comments. n and gamma accept comma
    lists and expand to one study per (n, gamma) pair."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"line {line_no}: expected key=value, got {line!r}")
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    ns = [int(tok) for tok in values.pop("n", "200").split(",")]
    gammas = [float(tok) for tok in values.pop("gamma", "1.0").split(",")]
    kwargs, fit_kwargs = {}, {}
    for key, val in values.items():
        if key in _SIM_SCALARS:
            kwargs[key] = _SIM_SCALARS[key](val)
        elif key in _FIT_KEYS:
            fit_kwargs[key] = _FIT_KEYS[key](val)
        else:
            raise ConfigError(f"unknown config key: {key!r}", key=key)
    configs = []
    for n in ns:
        for gamma in gammas:
            configs.append(SimConfig(n=n, gamma=gamma,
                                     fit=FitOptions(**fit_kwargs), **kwargs))
    return configs


def _render_sim_text(report) -> str:
    studies = report["payload"]["studies"]
    lines = ["simulation study: coverage and mean classification error",
             "=" * 60,
             f"{'n':>6}{'gamma':>8}{'cov beta':>12}{'cov gamma':>12}{'MCE':>12}{'conv':>8}"]
    for st in studies:
        agg = st["aggregates"]
        lines.append(
            f"{agg['n']:>6}{_g12(agg['gamma_true']):>8}"
            f"{_g12(agg['coverage_beta']):>12}{_g12(agg['coverage_gamma']):>12}"
            f"{_g12(agg['mean_mce']):>12}{_g12(agg['convergence_rate']):>8}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    try:
        configs = parse_sim_config(args.config)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("CPCOX_THREADS", "1"))
    studies = [run_study(cfg, threads=threads) for cfg in configs]
    report = {
        "command": "simulate",
        "input_digest": _sha256(args.config),
        "warnings": [],
        "timing": None,
        "error": None,
        "payload": {"studies": [s.to_dict() for s in studies]},
    }
    _emit(report, _render_sim_text, args.out, args.format)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpcox",
                     description="Change-plane Cox model: smoothed partial "
                                 "likelihood estimation and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the model to a CSV file")
    fit.add_argument("--data", required=True, help="CSV data file")
    fit.add_argument("--map", required=True, help="JSON column-mapping file")
    fit.add_argument("--bandwidth", default="auto",
                     help="smoothing bandwidth, or 'auto' for (log n)^2/n")
    fit.add_argument("--starts", default=None,
                     help="'grid:K', 'random:N', or 'a,b;c,d' explicit starts")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--level", type=float, default=0.95)
    fit.add_argument("--out", default=None, help="report path (default stdout)")
    fit.add_argument("--format", choices=("json", "text"), default="json")

    sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--config", required=True, help="key=value config file")
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", choices=("json", "text"), default="json")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command == "fit":
        return cmd_fit(args)
    return cmd_simulate(args)


if __name__ == "__main__":
    sys.exit(main())
