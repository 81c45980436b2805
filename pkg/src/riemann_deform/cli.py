"""Command-line entry point: ``riemann-deform <command> [options]``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical indeterminacy, 4 surface not admitted.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .ambient import MetricError, MetricField
from .grid import PolarGrid
from .linearize import (LinearizationError, boundary_from_config, assemble_linear_system,
                        to_complex_form)
from .rhsolver import (IndeterminateKernel, PhaseResolutionError, from_linear_system, solve,
                       solvability_residual, subspace_angle)
from .surface import (CHART_KINDS, Chart, NotAdmitted, SurfaceError, area_element, build_immersion,
                      forms_csv, forms_summary, fundamental_forms, verify_conjugate_isothermal)

log = logging.getLogger("riemann_deform")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ADMIT = 0, 1, 2, 3, 4

_TERMS = {"type": "array", "items": {
    "type": "array", "minItems": 3, "maxItems": 3,
    "prefixItems": [{"type": "integer", "minimum": 0}, {"type": "number"}, {"type": "number"}],
    "items": {"type": "number"}}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "metric": {
            "type": "object", "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["euclidean", "constant_curvature", "custom"]},
                "kappa": {"type": "number"},
                "bound": {"type": "number", "exclusiveMinimum": 0},
                "coeffs": {
                    "type": "object",
                    "propertyNames": {"pattern": "^[123][123]$"},
                    "additionalProperties": {"type": "array", "items": {
                        "type": "array", "minItems": 4, "maxItems": 4,
                        "items": {"type": "number"}}},
                },
            },
        },
        "chart": {
            "type": "object", "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(CHART_KINDS)},
                "R": {"type": "number"},
                "rho": {"type": "number"},
                "center": {"type": "array", "items": {"type": "number"},
                           "minItems": 3, "maxItems": 3},
                "hemisphere": {"enum": ["south", "north"]},
                "expressions": {"type": "array", "items": {"type": "string"},
                                "minItems": 3, "maxItems": 3},
            },
        },
        "grid": {"type": "string", "pattern": "^[0-9]+x[0-9]+$"},
        "kind": {"enum": ["Ch", "H", "A", "K"]},
        "boundary": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "l_fourier": {"type": "object", "additionalProperties": False,
                              "properties": {"l1": _TERMS, "l2": _TERMS}},
                "gamma_rate_fourier": _TERMS,
                "gamma_rate_ramp": {"type": "number"},
            },
        },
        "t0": {"type": "number", "minimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "kernel_coeffs": {"type": "array", "items": {"type": "number"}},
        "fix_point": {"oneOf": [{"type": "null"}, {
            "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]},
        "tau_kernel": {"type": "number", "exclusiveMinimum": 0},
        "integrator": {"enum": ["euler", "midpoint"]},
        "include_e": {"type": "boolean"},
        "seed": {"type": "integer"},
    },
}


class ConfigError(ValueError):
    pass


# -- I/O -------------------------------------------------------------------------

def load_config(path) -> tuple[dict, bytes]:
    import jsonschema

    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return cfg, raw


def write_atomic(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def _columns_csv(header, cols) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in np.column_stack(cols):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


# -- commands --------------------------------------------------------------------

def _grid(cfg, args) -> PolarGrid:
    text = args.grid or cfg.get("grid", "32x128")
    try:
        return PolarGrid.parse(text)
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def _setup(cfg, args):
    grid = _grid(cfg, args)
    metric = MetricField.from_config(cfg.get("metric", {"kind": "euclidean"}))
    if "chart" not in cfg:
        raise ConfigError("config needs a 'chart' section")
    chart = Chart.from_config(cfg["chart"])
    return grid, metric, build_immersion(chart, grid)


def cmd_geometry(cfg, args, out: Path):
    grid, metric, im = _setup(cfg, args)
    forms = fundamental_forms(im, metric)
    iso = verify_conjugate_isothermal(forms)
    _, area = area_element(forms, grid)
    report = {
        "grid": str(grid),
        "summary": forms_summary(forms),
        "area": area,
        "orientation": forms.orientation,
        "conjugate_isothermal": {k: iso[k] for k in ("max_b12", "max_b11_minus_b22", "passed")},
        "admitted": True,
    }
    write_atomic(out / "forms.csv", forms_csv(im, forms))
    write_atomic(out / "geometry.json", dump_json(report))
    print(f"area = {area:.12g}")
    print(f"H in [{forms.H.min():.6g}, {forms.H.max():.6g}], K in [{forms.K.min():.6g}, "
          f"{forms.K.max():.6g}]")
    print(f"conjugate isothermal: {'pass' if iso['passed'] else 'FAIL'}")
    return EXIT_OK


def cmd_index(cfg, args, out: Path):
    grid, metric, im = _setup(cfg, args)
    bc = boundary_from_config(im, metric, cfg.get("boundary", {}))
    write_atomic(out / "index.json", dump_json({"index": bc.index, "grid": str(grid)}))
    print(f"n = {bc.index}")
    return EXIT_OK


def _problem(cfg, args):
    from .linearize import DeformationProblem

    grid, metric, im = _setup(cfg, args)
    return DeformationProblem(im, metric, cfg.get("kind", "H"))


def cmd_solve(cfg, args, out: Path):
    problem = _problem(cfg, args)
    grid = problem.grid
    bc = boundary_from_config(problem.base, problem.metric, cfg.get("boundary", {}))
    fix = cfg.get("fix_point")
    fix_node = None if fix is None else grid.nearest(fix)
    lin = assemble_linear_system(problem, bc, fix_node)
    tau = args.tau_kernel if args.tau_kernel is not None else cfg.get("tau_kernel", 1e-7)
    sol = solve(from_linear_system(lin), tau_kernel=tau, seed=args.seed)
    cf = to_complex_form(lin, include_e=cfg.get("include_e", True))
    f = sol.fields()
    write_atomic(out / "solution.csv", _columns_csv(
        ("r", "theta", "a1", "a2", "c"), [grid.r, grid.theta, f["a1"], f["a2"], f["c"]]))
    header, cols = ["r", "theta"], [grid.r, grid.theta]
    for i, kf in enumerate(sol.kernel_fields()):
        for name in ("a1", "a2", "c"):
            header.append(f"k{i}_{name}")
            cols.append(kf[name])
    write_atomic(out / "kernel.csv", _columns_csv(header, cols))
    write_atomic(out / "spectrum.csv", _columns_csv(("i", "relative_singular_value"),
                                                    [np.arange(sol.spectrum.size), sol.spectrum]))
    report = {
        "kind": problem.kind.value,
        "grid": str(grid),
        "index": bc.index,
        "fix_node": fix_node,
        "kernel_dim": sol.kernel_dim,
        "gap_ratio": sol.gap_ratio,
        "tau_kernel": tau,
        "seed": args.seed,
        "residuals": sol.residuals,
        "solvability_residual": solvability_residual(sol),
        "complex_form": {"available": cf.available, "fit_residual": cf.fit_residual,
                         "reason": cf.reason},
    }
    write_atomic(out / "report.json", dump_json(report))
    print(f"n = {bc.index}, kernel_dim = {sol.kernel_dim} (gap {sol.gap_ratio:.3g}), "
          f"residual = {solvability_residual(sol):.3g}")
    return EXIT_OK


def cmd_evolve(cfg, args, out: Path):
    from .evolve import final_state_csv, run, trajectory_csv

    cfg = dict(cfg)
    if args.tau_kernel is not None:
        cfg["tau_kernel"] = args.tau_kernel
    res = run(cfg, _grid(cfg, args), log=log.info)
    res.report["seed"] = args.seed
    write_atomic(out / "trajectory.csv", trajectory_csv(res.state))
    write_atomic(out / "final_state.csv", final_state_csv(res.problem, res.state))
    write_atomic(out / "report.json", dump_json(res.report))
    print(f"t = {res.state.t:.6g}, final drift = {res.report['final_drift']:.3e}")
    return EXIT_OK


def cmd_closed(cfg, args, out: Path):
    from .evolve import ClosedSurface, closed_translation_fields, glue_closed_system

    grid = _grid(cfg, args)
    metric = MetricField.from_config(cfg.get("metric", {"kind": "euclidean"}))
    chart = cfg.get("chart", {"kind": "stereographic_sphere"})
    if chart.get("kind") != "stereographic_sphere":
        raise ConfigError("closed surfaces are built from a stereographic_sphere chart")
    cs = ClosedSurface.sphere(grid, chart.get("R", 1.0), chart.get("center", (0.0, 0.0, 0.0)))
    fix = cfg.get("fix_point")
    fix_node = None if fix is None else grid.nearest(fix)
    sysm = glue_closed_system(cs, metric, cfg.get("kind", "H"), fix_node)
    tau = args.tau_kernel if args.tau_kernel is not None else cfg.get("tau_kernel", 1e-7)
    sol = solve(sysm, tau_kernel=tau, seed=args.seed)
    report = {"kind": sysm.meta["kind"], "grid": str(grid), "fix_node": fix_node,
              "kernel_dim": sol.kernel_dim, "gap_ratio": sol.gap_ratio, "tau_kernel": tau,
              "seed": args.seed, "area": cs.total_area(metric)}
    if metric.is_flat and sol.kernel_dim:
        W = closed_translation_fields(sysm)
        report["translation_angle"] = subspace_angle(sol.kernel, W / np.linalg.norm(W, axis=0))
    write_atomic(out / "spectrum.csv", _columns_csv(("i", "relative_singular_value"),
                                                    [np.arange(sol.spectrum.size), sol.spectrum]))
    write_atomic(out / "report.json", dump_json(report))
    print(f"kernel_dim = {sol.kernel_dim} (gap {sol.gap_ratio:.3g})")
    return EXIT_OK


def cmd_verify(cfg, args, out: Path):
    from .verify import run_suite

    rows = run_suite(seed=args.seed)
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['name']:<{width}}  {r['detail']}")
    write_atomic(out / "verify.json", dump_json({"seed": args.seed, "checks": rows}))
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAIL


COMMANDS = {
    "geometry": (cmd_geometry, "fundamental forms, curvatures and area of the configured chart"),
    "index": (cmd_index, "index n of the configured boundary condition"),
    "solve": (cmd_solve, "assemble and solve the linearized boundary-value problem"),
    "evolve": (cmd_evolve, "integrate the deformation from t=0 to t0"),
    "closed": (cmd_closed, "kernel of the two-chart closed sphere"),
    "verify": (cmd_verify, "run the invariant suite and print a pass/fail table"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riemann-deform", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--config", help="JSON run config (required except for verify)")
        s.add_argument("--out", default=f"out-{name}", help="output directory (default out-<command>)")
        s.add_argument("--grid", help="grid NRxNT, overrides the config")
        s.add_argument("--tau-kernel", type=float, dest="tau_kernel",
                       help="relative singular-value threshold for the kernel (default 1e-7)")
        s.add_argument("--seed", type=int, default=None, help="seed for randomized checks (default 0)")
        s.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    out = Path(args.out)
    func = COMMANDS[args.command][0]
    try:
        if args.command == "verify" and args.config is None:
            cfg, raw = {}, None
        else:
            if args.config is None:
                raise ConfigError(f"{args.command} needs --config")
            cfg, raw = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        if args.grid is not None:
            _grid(cfg, args)
        code = func(cfg, args, out)
        if raw is not None:
            write_atomic(out / "config.json", raw)
        return code
    except (NotAdmitted, IndeterminateKernel, PhaseResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ADMIT if isinstance(exc, NotAdmitted) else EXIT_NUMERIC
    except (ConfigError, MetricError, SurfaceError, LinearizationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
