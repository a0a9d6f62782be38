"""Command-line entry point: TOML run configs in, deterministic CSV out.

Subcommands: check-flow | stream | trajectories | kernel | limit-speed |
min-speed | converge.  Exit codes: 0 success, 1 invalid input/config,
2 numerical failure.  All numeric CSV cells use full round-trip decimal
formatting and contain no timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from ._util import fmt, worker_count
from .domain import (
    Direction,
    FlowSpec,
    PeriodicCell,
    ReactionSpec,
    ScalarField,
    TensorField,
    check_admissibility,
    sample_flow,
)
from .errors import InputError, KppDriftError, NumericalError
from .firstintegrals import advection_constraint_operator, kernel_basis, limit_speed
from .speed import SearchParams, convergence_study, minimal_speed
from .stream import stream_from_velocity
from .trajectories import survey_flow

_SCHEMA = {
    "cell": {"kind", "L1", "L2", "n1", "n2"},
    "flow": {"name", "amplitude", "mode", "mode_x", "mode_y", "ux", "uy", "coefficients"},
    "diffusion": {"a11", "a12", "a22", "name", "base", "amplitude", "mode_x", "mode_y"},
    "zeta": {"value", "name", "base", "amplitude", "mode_x", "mode_y", "rho"},
    "direction": {"e"},
    "admissibility": {"tol"},
    "trajectories": {"n_seeds", "step", "t_max", "tol", "method", "unbounded_span"},
    "kernel": {"tol", "max_dim", "resolution_cut"},
    "search": {"lambda_lo", "lambda_hi", "rel_tol", "n_scan", "max_expand"},
    "min_speed": {"M"},
    "converge": {"M_list", "gap_threshold", "zero_threshold"},
    "limit": {"dump_maximizer", "feas_tol"},
    "stream": {"tol"},
}


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as err:
        raise InputError(f"config parse error in {path}: {err}")
    for section, body in cfg.items():
        if section not in _SCHEMA:
            raise InputError(f"config: unknown section [{section}]")
        if not isinstance(body, dict):
            raise InputError(f"config: [{section}] must be a table")
        unknown = set(body) - _SCHEMA[section]
        if unknown:
            raise InputError(
                f"config: unknown key(s) {sorted(unknown)} in [{section}]"
            )
    return cfg


def _apply_overrides(cfg: dict, overrides) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise InputError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise InputError(f"--set expects section.key=value, got {item!r}")
        section, key = parts
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise InputError(f"--set: unknown config field {dotted!r}")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        cfg.setdefault(section, {})[key] = value
    return cfg


def _build_cell(cfg: dict) -> PeriodicCell:
    body = cfg.get("cell", {})
    return PeriodicCell(
        kind=body.get("kind", "torus"),
        L1=body.get("L1", 1.0),
        L2=body.get("L2", 1.0),
        n1=body.get("n1", 64),
        n2=body.get("n2", 64),
    )


def _build_flow(cfg: dict, cell: PeriodicCell):
    body = cfg.get("flow", {})
    spec = FlowSpec(
        name=body.get("name", "zero"),
        amplitude=body.get("amplitude", 1.0),
        mode=body.get("mode", 1),
        mode_x=body.get("mode_x", 1),
        mode_y=body.get("mode_y", 1),
        ux=body.get("ux", 1.0),
        uy=body.get("uy", 0.0),
        coefficients=tuple(tuple(c) for c in body.get("coefficients", [])),
    )
    return spec, sample_flow(spec, cell)


def _modulated(cell, base, amplitude, mode_x, mode_y):
    X, Y = cell.mesh()
    return base + amplitude * np.cos(2 * np.pi * mode_x * X / cell.L1) * np.cos(
        2 * np.pi * mode_y * Y / cell.L2
    )


def _build_diffusion(cfg: dict, cell: PeriodicCell) -> TensorField:
    body = cfg.get("diffusion", {})
    name = body.get("name", "constant")
    if name == "constant":
        a11 = body.get("a11", 1.0)
        return TensorField.constant(cell, a11, body.get("a12", 0.0), body.get("a22", a11))
    if name == "cosine-iso":
        vals = _modulated(
            cell, body.get("base", 1.0), body.get("amplitude", 0.0),
            body.get("mode_x", 1), body.get("mode_y", 1),
        )
        return TensorField.isotropic(cell, vals)
    raise InputError(f"unknown diffusion field {name!r} (constant | cosine-iso)")


def _build_zeta(cfg: dict, cell: PeriodicCell) -> ReactionSpec:
    body = cfg.get("zeta", {})
    name = body.get("name", "constant")
    rho = body.get("rho", 0.5)
    if name == "constant":
        field = ScalarField.constant(cell, body.get("value", 1.0))
    elif name == "cosine":
        field = ScalarField(
            cell,
            _modulated(
                cell, body.get("base", 1.0), body.get("amplitude", 0.0),
                body.get("mode_x", 1), body.get("mode_y", 1),
            ),
        )
    else:
        raise InputError(f"unknown zeta field {name!r} (constant | cosine)")
    return ReactionSpec(zeta=field, rho=rho)


def _build_direction(cfg: dict, cell: PeriodicCell) -> Direction:
    body = cfg.get("direction", {})
    e = body.get("e", [1.0, 0.0])
    if not (isinstance(e, (list, tuple)) and len(e) == 2):
        raise InputError("direction.e must be a 2-vector")
    return Direction.of(float(e[0]), float(e[1]), kind=cell.kind)


def _search_params(cfg: dict) -> SearchParams:
    body = cfg.get("search", {})
    return SearchParams(
        lambda_lo=body.get("lambda_lo", 0.05),
        lambda_hi=body.get("lambda_hi", 20.0),
        rel_tol=body.get("rel_tol", 1e-4),
        n_scan=body.get("n_scan", 9),
        max_expand=body.get("max_expand", 3),
    )


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])


def _report(command, config_path, outputs, t0, verdicts):
    print(f"command: {command}")
    print(f"config: {config_path}")
    print(f"version: {__version__}")
    print(f"workers: {worker_count()}")
    for out in outputs:
        print(f"output: {out}")
    for v in verdicts:
        print(f"verdict: {v}")
    print(f"wall_time_s: {time.monotonic() - t0:.3f}")


def _cmd_check_flow(cfg, out_dir, config_path, t0):
    cell = _build_cell(cfg)
    _, q = _build_flow(cfg, cell)
    tol = cfg.get("admissibility", {}).get("tol", 1e-8)
    report = check_admissibility(q, cell, tol=tol)
    path = os.path.join(out_dir, "checkflow.csv")
    _write_csv(
        path,
        ["max_divergence", "mean_qx", "mean_qy", "max_boundary_normal", "q_inf", "tol", "passed"],
        [[
            report.max_divergence, report.mean_vx, report.mean_vy,
            report.max_boundary_normal if report.max_boundary_normal is not None else "",
            report.field_inf, report.tol, report.passed,
        ]],
    )
    _report("check-flow", config_path, [path], t0, [str(report).replace("\n", "; ")])
    if not report.passed:
        raise InputError("flow failed admissibility:\n" + str(report))
    return 0


def _cmd_stream(cfg, out_dir, config_path, t0):
    cell = _build_cell(cfg)
    _, q = _build_flow(cfg, cell)
    tol = cfg.get("stream", {}).get("tol", 1e-8)
    sf = stream_from_velocity(q, tol=tol)
    X, Y = cell.mesh()
    rows = zip(X.ravel(), Y.ravel(), sf.phi.values.ravel())
    path = os.path.join(out_dir, "stream.csv")
    _write_csv(path, ["x", "y", "phi"], rows)
    _report("stream", config_path, [path], t0, [f"residual_inf: {sf.residual!r}"])
    return 0


def _cmd_trajectories(cfg, out_dir, config_path, t0):
    cell = _build_cell(cfg)
    _, q = _build_flow(cfg, cell)
    body = cfg.get("trajectories", {})
    survey = survey_flow(
        q,
        n_seeds=body.get("n_seeds", 16),
        step=body.get("step"),
        t_max=body.get("t_max"),
        tol=body.get("tol"),
        method=body.get("method", "spline"),
        unbounded_span=body.get("unbounded_span", 2.5),
    )
    rows = []
    for seed, c in zip(survey.seeds, survey.classifications):
        a = c.period_vector
        rows.append([
            seed[0], seed[1], c.tag,
            a[0] if a is not None else "",
            a[1] if a is not None else "",
            c.return_time if c.return_time is not None else "",
        ])
    path = os.path.join(out_dir, "trajectories.csv")
    _write_csv(path, ["seed_x", "seed_y", "tag", "a_x", "a_y", "return_time"], rows)
    ga = survey.global_period
    verdicts = [
        "global_period: " + (f"({fmt(ga[0])}, {fmt(ga[1])})" if ga is not None else "none"),
        f"parallel_consistent: {survey.parallel_consistent}",
        "counts: " + " ".join(f"{k}={v}" for k, v in sorted(survey.counts.items())),
    ]
    _report("trajectories", config_path, [path], t0, verdicts)
    return 0


def _kernel_for(cfg, cell, q):
    body = cfg.get("kernel", {})
    D = advection_constraint_operator(q)
    return kernel_basis(
        D, cell,
        kernel_tol=body.get("tol", 1e-10),
        max_dim=body.get("max_dim"),
        resolution_cut=body.get("resolution_cut"),
    )


def _cmd_kernel(cfg, out_dir, config_path, t0):
    cell = _build_cell(cfg)
    _, q = _build_flow(cfg, cell)
    kern = _kernel_for(cfg, cell, q)
    path = os.path.join(out_dir, "kernel.csv")
    _write_csv(path, ["index", "sigma"], list(enumerate(kern.singular_values)))
    gap = kern.spectral_gap
    verdicts = [
        f"dim: {kern.dim}",
        f"sigma_max: {kern.sigma_max!r}",
        f"first_rejected: {kern.first_rejected!r}",
        f"spectral_gap: {gap!r}",
    ]
    _report("kernel", config_path, [path], t0, verdicts)
    return 0


def _cmd_limit_speed(cfg, out_dir, config_path, t0):
    cell = _build_cell(cfg)
    _, q = _build_flow(cfg, cell)
    A = _build_diffusion(cfg, cell)
    zeta = _build_zeta(cfg, cell).zeta
    e = _build_direction(cfg, cell)
    kern = _kernel_for(cfg, cell, q)
    res = limit_speed(
        A, q, zeta, e, kern, feas_tol=cfg.get("limit", {}).get("feas_tol", 1e-9)
    )
    path = os.path.join(out_dir, "limitspeed.csv")
    _write_csv(
        path,
        ["e_x", "e_y", "value", "constraint_active", "mu", "kernel_dim"],
        [[e.e[0], e.e[1], res.value, res.constraint_active, res.multiplier, res.kernel_dim]],
    )
    outputs = [path]
    if cfg.get("limit", {}).get("dump_maximizer", False):
        X, Y = cell.mesh()
        mpath = os.path.join(out_dir, "maximizer.csv")
        _write_csv(mpath, ["x", "y", "w"], zip(X.ravel(), Y.ravel(), res.maximizer.values.ravel()))
        outputs.append(mpath)
    _report("limit-speed", config_path, outputs, t0, [f"value: {res.value!r}"])
    return 0


def _cmd_min_speed(cfg, out_dir, config_path, t0):
    cell = _build_cell(cfg)
    _, q = _build_flow(cfg, cell)
    A = _build_diffusion(cfg, cell)
    zeta = _build_zeta(cfg, cell).zeta
    e = _build_direction(cfg, cell)
    M = cfg.get("min_speed", {}).get("M", 1.0)
    res = minimal_speed(A, q, zeta, e, drift=M, search=_search_params(cfg))
    path = os.path.join(out_dir, "minspeed.csv")
    _write_csv(
        path, ["lambda", "k", "ratio"],
        [[p.lam, p.k, p.ratio] for p in res.curve],
    )
    verdicts = [
        f"c_star: {res.c_star!r}",
        f"lambda_star: {res.lambda_star!r}",
        f"upwind_used: {res.upwind_used}",
    ]
    _report("min-speed", config_path, [path], t0, verdicts)
    return 0


def _cmd_converge(cfg, out_dir, config_path, t0):
    cell = _build_cell(cfg)
    _, q = _build_flow(cfg, cell)
    A = _build_diffusion(cfg, cell)
    zeta = _build_zeta(cfg, cell).zeta
    e = _build_direction(cfg, cell)
    body = cfg.get("converge", {})
    M_list = body.get("M_list", [1.0, 4.0, 16.0, 64.0, 256.0])
    kbody = cfg.get("kernel", {})
    rep = convergence_study(
        A, q, zeta, e, M_list,
        search=_search_params(cfg),
        kernel_tol=kbody.get("tol", 1e-10),
        max_dim=kbody.get("max_dim"),
        gap_threshold=body.get("gap_threshold", 0.1),
        zero_threshold=body.get("zero_threshold", 0.05),
    )
    path = os.path.join(out_dir, "converge.csv")
    _write_csv(
        path, ["M", "speed_over_M", "gap"],
        [[r.drift, r.ratio if not r.failed else "", r.gap if not r.failed else ""] for r in rep.rows],
    )
    _report("converge", config_path, [path], t0, [rep.verdict])
    return 0


_COMMANDS = {
    "check-flow": _cmd_check_flow,
    "stream": _cmd_stream,
    "trajectories": _cmd_trajectories,
    "kernel": _cmd_kernel,
    "limit-speed": _cmd_limit_speed,
    "min-speed": _cmd_min_speed,
    "converge": _cmd_converge,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kpp-drift",
        description="Minimal KPP front speeds under periodic drift: "
        "eigenvalue speeds, large-drift limits, streamline topology.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", default=".", help="output directory for CSV files")
    parser.add_argument(
        "--set", action="append", metavar="SECTION.KEY=VALUE",
        help="override a scalar config field (repeatable)",
    )
    args = parser.parse_args(argv)

    t0 = time.monotonic()
    try:
        cfg = _load_config(args.config)
        cfg = _apply_overrides(cfg, args.set)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](cfg, args.out, args.config, t0)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2
    except KppDriftError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
