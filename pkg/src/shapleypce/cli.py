"""Command-line front end.

Three subcommands: ``analyze`` (static models), ``ode`` (Galerkin-expanded ODE
models) and ``compare`` (index convergence over several PC degrees).  Every
command computes all of its outputs before writing any file, so a failure
never leaves a partial result set behind.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .basis import PceBasis, all_subsets
from .galerkin_ode import (
    expand,
    integrate,
    mc_baseline,
    peak_heatmap,
    sensitivity_series,
)
from .models import BenchmarkSpec, builtin, load_spec
from .sensitivity import (
    SensitivityReport,
    borgonovo_all,
    mc_sobol_pick_freeze,
    rank_variables,
    subset_label,
)
from .surrogate import fit_projection, fit_regression

log = logging.getLogger("shapleypce")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
METHODS = ("pce-projection", "pce-regression", "mc-sobol", "borgonovo")


class ConfigError(ValueError):
    pass


# --- helpers -----------------------------------------------------------------

def _num(v) -> str:
    return "" if v is None or (isinstance(v, float) and not math.isfinite(v)) else repr(float(v))


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_params(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"parameter file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parameter file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("parameter file must hold a JSON object of name: value pairs")
    return doc


def _resolve_model(args, params: dict | None = None) -> BenchmarkSpec:
    params = params or {}
    if args.model_file:
        try:
            return load_spec(args.model_file, params)
        except FileNotFoundError:
            raise ConfigError(f"model file {args.model_file} not found") from None
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"malformed model file {args.model_file}: {exc!r}") from None
    if not args.model:
        raise ConfigError("give --model NAME or --model-file PATH")
    try:
        return builtin(args.model, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {args.model}: {exc}") from None


def _write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text)
        log.info("wrote %s", out_dir / name)


def _rank_text(values, names) -> str:
    return " > ".join(rank_variables(values).labels(names))


# --- analyze -----------------------------------------------------------------

def _fit(spec: BenchmarkSpec, method: str, degree: int, args):
    basis = PceBasis(spec.dists, degree)
    if method == "pce-projection":
        return fit_projection(spec.model, basis, args.quad_points)
    n = args.samples or 3 * len(basis)
    rng = np.random.default_rng(args.seed)
    x = basis.to_physical(basis.sample_standard(rng, n))
    return fit_regression(x, spec.model(x), basis)


def cmd_analyze(args) -> dict[str, str]:
    spec = _resolve_model(args)
    if spec.kind != "static":
        raise ConfigError(f"{spec.name} is an ODE model; use the 'ode' command")
    methods = args.method or ["pce-projection"]
    degree = args.degree if args.degree is not None else spec.defaults.get("degree", 4)
    if degree < 1 and any(m.startswith("pce") for m in methods):
        raise ConfigError("PCE methods need --degree >= 1")
    names = list(spec.names)
    files: dict[str, str] = {}
    doc: dict = {"model": spec.name, "methods": methods}

    delta = None
    if "borgonovo" in methods:
        n = args.samples or 300_000
        delta = borgonovo_all(spec.model, spec.dists, n, args.seed)
        doc["borgonovo"] = {"samples": n, "seed": args.seed,
                            "delta": dict(zip(names, map(float, delta))),
                            "ranking": rank_variables(delta).labels(names)}
        print(f"borgonovo delta (n={n}): " + ", ".join(f"{a}={b:.4f}" for a, b in zip(names, delta)))

    pce = [m for m in methods if m.startswith("pce")]
    for method in pce:
        s = _fit(spec, method, degree, args)
        report = SensitivityReport.from_surrogate(s, names, borgonovo=delta, reference=spec.references)
        prefix = "" if len(pce) == 1 else method + "_"
        if args.format == "json":
            files[f"{prefix}report.json"] = report.to_json() + "\n"
            files[f"{prefix}surrogate.json"] = s.to_json() + "\n"
        else:
            files[f"{prefix}sobol.csv"] = report.sobol_csv()
            files[f"{prefix}worths.csv"] = report.worths_csv()
            files[f"{prefix}variables.csv"] = report.variables_csv()
            files[f"{prefix}rankings.csv"] = _table(
                ["metric", "ranking"], [[k, " > ".join(r.labels(names))] for k, r in report.rankings().items()])
        print(f"{method} P={degree}: mean={s.mean():.6g} variance={s.variance():.6g}")
        for row in report.variable_rows():
            print(f"  {row['variable']}: S={row['sobol']:.4f} ST={row['total_sobol']:.4f} Sh={row['shapley']:.4f}")
        for k, r in report.rankings().items():
            print(f"  ranking by {k}: {' > '.join(r.labels(names))}")

    if "borgonovo" in methods and not pce:
        ref = spec.references.get("borgonovo")
        rows = [[nm, _num(delta[i])] + ([_num(ref.get(i))] if ref else []) for i, nm in enumerate(names)]
        if args.format == "json":
            files["borgonovo.json"] = json.dumps(doc["borgonovo"], indent=2) + "\n"
        else:
            files["borgonovo.csv"] = _table(["variable", "borgonovo"] + (["reference_borgonovo"] if ref else []), rows)

    if "mc-sobol" in methods:
        n = args.samples or 100_000
        res = mc_sobol_pick_freeze(spec.model, spec.dists, n, args.seed)
        rows = [[nm, _num(res.first[i]), _num(res.first_se[i]), _num(res.total[i]), _num(res.total_se[i])]
                for i, nm in enumerate(names)]
        if args.format == "json":
            files["mc_sobol.json"] = json.dumps({
                "samples": n, "seed": args.seed, "variance": res.variance,
                "variables": [dict(zip(["variable", "sobol", "sobol_se", "total_sobol", "total_sobol_se"],
                                       [r[0]] + [float(v) for v in r[1:]])) for r in rows],
            }, indent=2) + "\n"
        else:
            files["mc_sobol.csv"] = _table(["variable", "sobol", "sobol_se", "total_sobol", "total_sobol_se"], rows)
        print(f"mc-sobol (n={n}): " + ", ".join(
            f"{nm}: S={res.first[i]:.4f}±{res.first_se[i]:.4f} ST={res.total[i]:.4f}±{res.total_se[i]:.4f}"
            for i, nm in enumerate(names)))
    return files


# --- ode ---------------------------------------------------------------------

def cmd_ode(args) -> dict[str, str]:
    spec = _resolve_model(args, _load_params(args.param_file))
    if spec.kind != "ode":
        raise ConfigError(f"{spec.name} is a static model; use the 'analyze' command")
    d = spec.defaults
    degree = args.degree if args.degree is not None else d.get("degree", 4)
    t_end = args.t_end if args.t_end is not None else d.get("t_end")
    dt = args.dt if args.dt is not None else d.get("dt")
    if t_end is None or dt is None:
        raise ConfigError("--t-end and --dt are required for this model")
    if not (t_end > 0 and dt > 0):
        raise ConfigError("--t-end and --dt must be positive")
    model = spec.model
    output = args.output or d.get("output") or model.states[0]
    if output not in model.states:
        raise ConfigError(f"unknown state {output!r}; have {list(model.states)}")

    traj = integrate(expand(model, PceBasis(spec.dists, degree)), t_end, dt)
    series = sensitivity_series(traj, output, args.stride)
    ks = np.arange(0, len(traj.times), args.stride)
    files: dict[str, str] = {}

    mc = None
    if args.mc_baseline:
        mc = mc_baseline(model, args.mc_baseline, t_end, dt, args.seed)
    header = ["t", "state", "mean", "variance"] + (["mc_mean", "mc_variance"] if mc is not None else [])
    rows = []
    for k in ks:
        for s_i, s in enumerate(model.states):
            c = traj.coeffs[k, s_i]
            row = [_num(traj.times[k]), s, _num(c[0]), _num(np.sum(c[1:] ** 2 * traj.basis.norms[1:]))]
            if mc is not None:
                row += [_num(mc.mean[k, s_i]), _num(mc.variance[k, s_i])]
            rows.append(row)
    moments = _table(header, rows)

    if args.format == "json":
        files["trajectory.json"] = traj.to_json() + "\n"
    else:
        files["coefficients.csv"] = traj.to_csv()
    files["moments.csv"] = moments
    files["sensitivity.csv"] = series.to_csv()
    files["bands.csv"] = series.band_csv()
    files["ranks.csv"] = series.rank_csv()

    print(f"{spec.name}: P={degree}, {len(traj.basis)} coefficients per state, {len(traj.times)} time points")
    mean = traj.mean_series(output)
    k_pk = int(np.argmax(mean))
    print(f"  {output}: max mean {mean[k_pk]:.6g} at t={traj.times[k_pk]:.4g}")
    if mc is not None:
        i = model.states.index(output)
        err_m = np.max(np.abs(mc.mean[:, i] - mean))
        err_v = np.max(np.abs(mc.variance[:, i] - traj.variance_series(output)))
        print(f"  vs MC (n={args.mc_baseline}, seed={args.seed}): max |mean err|={err_m:.3e}, "
              f"max |variance err|={err_v:.3e}")
    first_valid = int(np.argmax(series.valid)) if series.valid.any() else None
    if first_valid is not None:
        print(f"  ranking at t={series.times[first_valid]:.4g}: "
              f"{_rank_text(series.shapley[first_valid], series.names)}")

    if args.heatmap:
        hm = peak_heatmap(traj, output, args.heatmap_samples, (args.heatmap_bins, args.heatmap_bins), args.seed)
        files["heatmap.csv"] = hm.to_csv()
        t_mode, v_mode = hm.modal_bin()
        print(f"  heat map ({args.heatmap_samples} draws): modal bin t~{t_mode:.3g}, {output}~{v_mode:.3g}; "
              f"{hm.n_boundary} realizations peak at the window boundary")
    return files


# --- compare -----------------------------------------------------------------

def _parse_degrees(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"--degrees expects a comma-separated list of integers, got {text!r}") from None
    if not out or min(out) < 1:
        raise ConfigError("--degrees needs at least one degree, all >= 1")
    return out


def cmd_compare(args) -> dict[str, str]:
    spec = _resolve_model(args)
    if spec.kind != "static":
        raise ConfigError("compare works on static models")
    degrees = _parse_degrees(args.degrees)
    names = list(spec.names)
    reports = []
    for p in degrees:
        s = fit_projection(spec.model, PceBasis(spec.dists, p), args.quad_points)
        reports.append(SensitivityReport.from_surrogate(s, names))
    ref = spec.references
    rows = []

    def add(metric, label, values, ref_value):
        rows.append([metric, label] + [_num(v) for v in values] + ([_num(ref_value)] if ref else []))

    for u in all_subsets(len(names)):
        add("sobol", subset_label(u, names), [r.sobol.by_subset[u] for r in reports],
            ref.get("sobol", {}).get(u))
    for i, nm in enumerate(names):
        add("total_sobol", nm, [r.sobol.total[i] for r in reports], ref.get("total_sobol", {}).get(i))
    for u in all_subsets(len(names)):
        add("worth", subset_label(u, names), [r.worths[u] for r in reports], ref.get("worth", {}).get(u))
    for i, nm in enumerate(names):
        add("shapley", nm, [r.shapley[i] for r in reports], ref.get("shapley", {}).get(i))
    header = ["metric", "subset"] + [f"P={p}" for p in degrees] + (["reference"] if ref else [])

    width = 10
    print(f"{'metric':<12}{'subset':<12}" + "".join(f"{h:>{width}}" for h in header[2:]))
    for row in rows:
        cells = "".join(f"{(float(v) if v else float('nan')):>{width}.4f}" for v in row[2:])
        print(f"{row[0]:<12}{row[1]:<12}{cells}")
    if args.format == "json":
        return {"compare.json": json.dumps({"degrees": degrees, "header": header, "rows": rows}, indent=2) + "\n"}
    return {"compare.csv": _table(header, rows)}


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapleypce", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", help="built-in model name (ishigami, quartic, seir, bergman)")
        sp.add_argument("--model-file", help="JSON model description")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--output-dir", default="out")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    a = sub.add_parser("analyze", help="sensitivity report for a static model")
    common(a)
    a.add_argument("--degree", type=int)
    a.add_argument("--method", action="append", choices=METHODS,
                   help="repeatable; default pce-projection")
    a.add_argument("--samples", type=int, help="sample count for regression / Monte Carlo methods")
    a.add_argument("--quad-points", type=int, help="Gauss points per dimension for projection")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("ode", help="Galerkin expansion of an ODE model")
    common(o)
    o.add_argument("--degree", type=int)
    o.add_argument("--t-end", type=float)
    o.add_argument("--dt", type=float)
    o.add_argument("--output", help="state whose sensitivities are reported")
    o.add_argument("--stride", type=int, default=1, help="report every n-th time step")
    o.add_argument("--param-file", help="JSON object with model constants (required for bergman)")
    o.add_argument("--mc-baseline", type=int, metavar="N", help="also run an N-sample Monte Carlo ensemble")
    o.add_argument("--heatmap", action="store_true", help="peak time x magnitude histogram of the output state")
    o.add_argument("--heatmap-samples", type=int, default=100_000)
    o.add_argument("--heatmap-bins", type=int, default=30)
    o.set_defaults(func=cmd_ode)

    c = sub.add_parser("compare", help="index convergence over PC degrees")
    common(c)
    c.add_argument("--degrees", required=True, help="comma-separated, e.g. 3,5,7,9")
    c.add_argument("--quad-points", type=int)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "stride", 1) < 1:
            raise ConfigError("--stride must be >= 1")
        files = args.func(args)
        _write_outputs(Path(args.output_dir), files)
    except ArithmeticError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
