"""Command-line front end.

``rwmcv [--seed N] [--workers N] [--output-dir DIR] <command> CONFIG.json``

Commands and their outputs (in the output directory):

experiment
    ``report.csv`` with columns
    ``target,d,knob_name,knob_value,T,n_R,n_MC,l,VR,plain_mse,cv_mse,runtime_s,seed``
    and ``report.json`` (rows, resolved config, seed, library version).
    ``--trajectory`` also writes ``trajectory_d<d>.csv`` (run 0 of each d).
poisson
    ``poisson.csv``: ``node,fhat,fhat_prime,generator_residual`` where the
    residual is ``G fhat - (rho(f) - f)``.
generator-check
    ``generator_gap.csv``: ``d,mean_abs_gap,q95_abs_gap,mean_inner_se,n_points,n_inner``.
ad-check
    ``ad_check.csv``: ``d,a_d,n_draws,c_A,rho_A,freq_in_Ad,freq_cond1,freq_cond2,
    freq_cond3,freq_cond4,miss_rate``.

Every command except ``experiment`` also writes ``<name>_meta.json``
with the resolved config, master seed and library version. Exit codes:
0 success, 1 configuration or solver error, 2 some experiment cells failed.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ExperimentConfig, _key_lines
from .exceptions import ConfigError, RWMCVError
from .rng import DRAWS, StreamKey


def _load_json(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return json.loads(text), _key_lines(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None


def _check_keys(data, allowed, lines):
    if not isinstance(data, dict):
        raise ConfigError("line 1: config must be a JSON object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"line {lines.get(key, 1)}: unknown key {key!r}")


def _density(spec, lines):
    from .experiment import scalar_density
    if not isinstance(spec, dict):
        raise ConfigError(f"line {lines.get('density', 1)}: density must be an object")
    preset = spec.get("preset")
    if preset is not None and preset not in ("bimodal", "standard_normal"):
        raise ConfigError(f"line {lines.get('preset', 1)}: unknown preset {preset!r}")
    if preset is None and not {"weights", "means", "std_devs"} <= set(spec):
        raise ConfigError(f"line {lines.get('density', 1)}: density needs a preset or "
                          "weights/means/std_devs")
    try:
        return scalar_density(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"line {lines.get('density', 1)}: {exc}") from None


def _observable(name, value, lines, key):
    """``(f, f', f'')`` for a named scalar function."""
    if name == "identity":
        return (lambda x: np.asarray(x, dtype=float), lambda x: np.ones(np.shape(x)),
                lambda x: np.zeros(np.shape(x)))
    if name == "square":
        return (lambda x: np.asarray(x, dtype=float) ** 2, lambda x: 2.0 * np.asarray(x, dtype=float),
                lambda x: np.full(np.shape(x), 2.0))
    if name == "constant":
        c = float(value)
        return (lambda x: np.full(np.shape(x), c), lambda x: np.zeros(np.shape(x)),
                lambda x: np.zeros(np.shape(x)))
    raise ConfigError(f"line {lines.get(key, 1)}: unknown function {name!r} "
                      "(identity, square, constant)")


def _l_value(data, J, lines):
    from .sampler import optimal_l
    l = data.get("l", "auto")
    if l == "auto":
        return optimal_l(J)
    if isinstance(l, (int, float)) and not isinstance(l, bool) and l > 0:
        return float(l)
    raise ConfigError(f"line {lines.get('l', 1)}: l must be \"auto\" or a positive number")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_meta(out_dir, name, config, seed):
    with open(os.path.join(out_dir, f"{name}_meta.json"), "w") as fh:
        json.dump({"version": __version__, "seed": seed, "config": config}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")


def _out_dir(args, default):
    out = args.output_dir or default or "results"
    os.makedirs(out, exist_ok=True)
    return out


def cmd_experiment(args):
    from .experiment import build_target, csv_header, csv_line, resolve, run_experiment
    from .sampler import RWMConfig, chain_stream, rwm_run, write_trajectory_csv
    cfg = ExperimentConfig.load(args.config)
    data = cfg.to_dict()
    if args.seed is not None:
        data["seed"] = int(args.seed)
    if args.output_dir is not None:
        data["output_dir"] = args.output_dir
    cfg = ExperimentConfig.from_dict(data, cfg._lines)
    out = _out_dir(args, cfg.output_dir)
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    with open(os.path.join(out, "report.csv"), "w", newline="") as partial:
        # rows arrive in grid order, so the partial file is a prefix of the final one
        partial.write(csv_header())

        def on_row(row):
            partial.write(csv_line(row))
            partial.flush()
        report = run_experiment(cfg, workers=workers, on_row=on_row)
    report.write(out)
    if args.trajectory:
        rcfg = resolve(cfg)
        h = rcfg.knob["values"][0] if rcfg.knob["name"] == "h" else None
        for d in rcfg.d_grid:
            chain = rwm_run(build_target(rcfg, d, h), RWMConfig(d, rcfg.l_of(d), rcfg.T, rcfg.seed),
                            stream=chain_stream(rcfg.seed, d, 0, 0))
            write_trajectory_csv(chain, os.path.join(out, f"trajectory_d{d}.csv"))
    for row in report.rows:
        vr = "failed: " + row["error"] if row.get("error") else f"VR={row['VR']:.4g}"
        print(f"d={row['d']} {row['knob_name']}={row['knob_value']}: {vr}")
    return 2 if report.failed else 0


POISSON_KEYS = {"density", "f", "f_value", "l", "solver", "n_nodes", "node_quantiles", "grid_nodes",
                "seed", "output_dir"}


def cmd_poisson(args):
    from .poisson import LimitConstants, evaluation_domain, generator_limit, solve_closed_form, solve_grid
    from .targets import expectation, fisher_J
    data, lines = _load_json(args.config)
    _check_keys(data, POISSON_KEYS, lines)
    density = _density(data.get("density", {"preset": "standard_normal"}), lines)
    f, _, _ = _observable(data.get("f", "identity"), data.get("f_value", 0.0), lines, "f")
    J = fisher_J(density)
    l = _l_value(data, J, lines)
    constants = LimitConstants.from_J(J, l)
    rho_f = float(expectation(density, lambda x: float(f(x))))
    solver = data.get("solver", "closed_form")
    if solver == "closed_form":
        sol = solve_closed_form(density, f, rho_f, constants)
    elif solver == "grid":
        sol = solve_grid(density.log_rho, f, rho_f, None, l, 1, constants,
                         m=int(data.get("grid_nodes", 100)), domain=evaluation_domain(density))
    else:
        raise ConfigError(f"line {lines.get('solver', 1)}: solver must be closed_form or grid")
    qlo, qhi = data.get("node_quantiles", [1e-4, 1 - 1e-4])
    lo, hi = evaluation_domain(density, qlo)[0], evaluation_domain(density, 1 - qhi)[1]
    nodes = np.linspace(lo, hi, int(data.get("n_nodes", 201)))
    fhat = np.asarray(sol(nodes), dtype=float)
    fprime = np.asarray(sol.derivative(nodes), dtype=float) if sol._dfn else np.zeros_like(nodes)
    if sol.is_zero:
        resid = -(rho_f - f(nodes))
    else:
        resid = generator_limit(density, sol, constants, nodes) - (rho_f - f(nodes))
    seed = int(args.seed if args.seed is not None else data.get("seed", 0))
    out = _out_dir(args, data.get("output_dir"))
    _write_csv(os.path.join(out, "poisson.csv"), ["node", "fhat", "fhat_prime", "generator_residual"],
               zip(nodes, fhat, fprime, resid))
    resolved = dict(data, l=l, solver=solver, rho_f=rho_f, h_l=constants.h_l)
    _write_meta(out, "poisson", resolved, seed)
    print(f"poisson: {nodes.size} nodes, max |residual| = {np.max(np.abs(resid)):.3g}")
    return 0


GAP_KEYS = {"density", "g", "g_value", "l", "d_grid", "n_points", "n_inner", "condition_on_Ad",
            "seed", "output_dir"}


def cmd_generator_check(args):
    from .diagnostics import GAP_COLUMNS, compute_ad_constants, generator_gap_study
    from .poisson import LimitConstants
    from .targets import fisher_J
    data, lines = _load_json(args.config)
    _check_keys(data, GAP_KEYS, lines)
    density = _density(data.get("density", {"preset": "standard_normal"}), lines)
    g, gp, gpp = _observable(data.get("g", "identity"), data.get("g_value", 1.0), lines, "g")
    d_grid = data.get("d_grid", [8, 32, 128])
    if not isinstance(d_grid, list) or not d_grid or any(not isinstance(d, int) or d < 1 for d in d_grid):
        raise ConfigError(f"line {lines.get('d_grid', 1)}: d_grid must be a non-empty list of positive integers")
    J = fisher_J(density)
    l = _l_value(data, J, lines)
    constants = LimitConstants.from_J(J, l)
    seed = int(args.seed if args.seed is not None else data.get("seed", 0))
    consts_Ad = compute_ad_constants(density) if data.get("condition_on_Ad", False) else None
    report = generator_gap_study(density, g, constants, d_grid, int(data.get("n_points", 200)),
                                 int(data.get("n_inner", 20_000)), seed, g_prime=gp, g_second=gpp,
                                 consts_Ad=consts_Ad)
    out = _out_dir(args, data.get("output_dir"))
    _write_csv(os.path.join(out, "generator_gap.csv"), GAP_COLUMNS,
               [[r[c] for c in GAP_COLUMNS] for r in report.records])
    _write_meta(out, "generator_gap", dict(data, l=l, d_grid=d_grid), seed)
    for r in report.records:
        print(f"d={r['d']}: mean gap {r['mean_abs_gap']:.4g} (inner SE {r['mean_inner_se']:.2g})")
    return 0


AD_KEYS = {"density", "d_grid", "n_draws", "c_A_grid", "a_d", "seed", "output_dir"}
AD_COLUMNS = ("d", "a_d", "n_draws", "c_A", "rho_A", "freq_in_Ad", "freq_cond1", "freq_cond2",
              "freq_cond3", "freq_cond4", "miss_rate")


def cmd_ad_check(args):
    from .diagnostics import DEFAULT_C_A_GRID, ad_membership, compute_ad_constants, sluggish_default
    from .targets import ProductTarget
    data, lines = _load_json(args.config)
    _check_keys(data, AD_KEYS, lines)
    density = _density(data.get("density", {"preset": "standard_normal"}), lines)
    d_grid = data.get("d_grid", [100])
    if not isinstance(d_grid, list) or not d_grid or any(not isinstance(d, int) or d < 2 for d in d_grid):
        raise ConfigError(f"line {lines.get('d_grid', 1)}: d_grid must list integers >= 2")
    grid = data.get("c_A_grid", list(DEFAULT_C_A_GRID))
    if not isinstance(grid, list) or not grid:
        raise ConfigError(f"line {lines.get('c_A_grid', 1)}: c_A_grid must be a non-empty list")
    consts = compute_ad_constants(density, grid)
    n = int(data.get("n_draws", 100_000))
    seed = int(args.seed if args.seed is not None else data.get("seed", 0))
    rows = []
    for d in d_grid:
        a_d = sluggish_default(d) if data.get("a_d", "sluggish") == "sluggish" else float(data["a_d"])
        target = ProductTarget(density, d)
        inside = np.zeros(4)
        hits = 0
        done = 0
        for b, start in enumerate(range(0, n, 10_000)):
            m = min(10_000, n - start)
            X = target.sample(m, StreamKey(seed, (DRAWS, d)).generator(b))
            res = ad_membership(consts, X, a_d)
            inside += res["cond"].sum(axis=0)
            hits += int(res["in_Ad"].sum())
            done += m
        freq = hits / done
        rows.append([d, a_d, done, consts.c_A, consts.rho_A, freq, *(inside / done), 1.0 - freq])
    out = _out_dir(args, data.get("output_dir"))
    _write_csv(os.path.join(out, "ad_check.csv"), AD_COLUMNS, rows)
    _write_meta(out, "ad_check", dict(data, d_grid=d_grid, constants=consts.as_dict()), seed)
    for r in rows:
        print(f"d={r[0]}: membership {r[5]:.5f}, miss rate {r[10]:.3g}")
    return 0


COMMANDS = {"experiment": cmd_experiment, "poisson": cmd_poisson,
            "generator-check": cmd_generator_check, "ad-check": cmd_ad_check}


def _add_globals(p, suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--seed", type=int, help="master seed (overrides the config)", **kw)
    p.add_argument("--workers", type=int, help="worker processes (default: logical cores)", **kw)
    p.add_argument("--output-dir", help="output directory (overrides the config)", **kw)


def build_parser():
    parser = argparse.ArgumentParser(prog="rwmcv", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"rwmcv {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        _add_globals(p, suppress=True)
        p.add_argument("config", help="JSON config file")
        if name == "experiment":
            p.add_argument("--trajectory", action="store_true",
                           help="also dump run 0 of each d as trajectory_d<d>.csv")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, RWMCVError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
