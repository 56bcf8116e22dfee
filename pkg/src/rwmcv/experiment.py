"""Multi-run variance-reduction experiments.

A grid cell is one dimension ``d`` and one knob value (``n_MC`` or the
mode distance ``h``). Each cell runs ``n_R`` independent chains; on each
chain the plain and corrected averages use the same trajectory. Work is
split into pure tasks, one per ``(d, run)`` for the ``n_MC`` knob (the
chain is shared by every ``n_MC`` value) and one per ``(d, h, run)`` for
the ``h`` knob. Every random draw is addressed by a counter-based stream
path, so a report does not depend on the number of workers.
"""
import csv
import io
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, _backend
from .config import ExperimentConfig
from .estimator import CVSpec, cv_average, cv_stream, first_coordinate, plain_average, variance_reduction
from .poisson import LimitConstants, PoissonSolution, gaussian_cv, solve_closed_form, solve_grid
from .sampler import RWMConfig, chain_stream, optimal_l, rwm_run
from .targets import (GaussianMixture1D, ProductTarget, bimodal_gaussian_mixture, bimodal_mixture,
                      expectation, standard_normal)

COLUMNS = ("target", "d", "knob_name", "knob_value", "T", "n_R", "n_MC", "l", "VR", "plain_mse",
           "cv_mse", "runtime_s", "seed")


def scalar_density(params):
    if params.get("preset") == "bimodal":
        return bimodal_mixture()
    if params.get("preset") == "standard_normal":
        return standard_normal()
    return GaussianMixture1D(params["weights"], params["means"], params["std_devs"])


def target_label(config):
    t = config.target
    p = t.get("params", {})
    if t["family"] == "product_mixture":
        return f"product_{p['preset']}" if "preset" in p else "product_mixture"
    return "mv_gaussian_mixture"


def build_target(config, d, h=None):
    t = config.target
    p = t.get("params", {})
    if t["family"] == "product_mixture":
        return ProductTarget(scalar_density(p), int(d))
    return bimodal_gaussian_mixture(int(d), float(p.get("h", 0.0) if h is None else h),
                                    float(p.get("spike", 25.0)))


def auto_l(config, d):
    """``optimal_l(J)`` for the configured target at dimension ``d``."""
    return optimal_l(build_target(config, d).fisher_J)


def resolve(config):
    return config.resolved(lambda d: auto_l(config, d))


def truth(config, target):
    """``rho_d(f)`` for the first coordinate."""
    if isinstance(target, ProductTarget):
        return float(expectation(target.density, lambda x: x))
    return float(target.mixture_mean()[0])


# Per-process cache of deterministic, run-independent quantities.
_CACHE = {}


def _cached(key, make):
    if key not in _CACHE:
        if len(_CACHE) > 64:
            _CACHE.clear()
        _CACHE[key] = make()
    return _CACHE[key]


def _solution(config, target, chain, d, l, plain, truth_value):
    """The Poisson solution for one run (cached when it does not depend on the chain)."""
    cv = config.cv
    if cv == "gaussian_analytic":
        if config.covariance == "estimated":
            S = np.atleast_2d(np.cov(chain.states, rowvar=False))
            return gaussian_cv(S, l, d)
        key = ("gauss", _target_key(target), l)
        return _cached(key, lambda: gaussian_cv(_true_cov(target), l, d))
    density = target.density
    constants = _cached(("const", json.dumps(config.target, sort_keys=True), l),
                        lambda: LimitConstants.from_J(target.fisher_J, l))
    rho_f = truth_value if config.rho_f == "exact" else plain
    if cv == "closed_form":
        if config.rho_f == "exact":
            key = ("closed", json.dumps(config.target, sort_keys=True), l)
            return _cached(key, lambda: solve_closed_form(density, lambda x: x, rho_f, constants))
        return solve_closed_form(density, lambda x: x, rho_f, constants)
    return solve_grid(density.log_rho, lambda x: x, rho_f, chain.states[:, 0], l, d, constants,
                      m=config.grid_nodes)


def _target_key(target):
    if isinstance(target, ProductTarget):
        return ("product", target.density.name, target.d)
    return ("mv", target.d, tuple(np.asarray(target.means).ravel().tolist()))


def _true_cov(target):
    if isinstance(target, ProductTarget):
        return float(target.density.variance()) * np.eye(target.d)
    return target.mixture_covariance()


_ZERO = PoissonSolution("none", "first", lambda x: np.zeros(np.shape(x)), None, {"zero": True})


def run_task(cfg_dict, d_index, h_index, run):
    """One chain and its corrected averages for every knob value it serves.

    Returns ``[(knob_index, plain, corrected), ...]`` and the elapsed
    seconds, or an error string.
    """
    t0 = time.perf_counter()
    try:
        config = ExperimentConfig.from_dict(cfg_dict)
        d = int(config.d_grid[d_index])
        l = config.l_of(d)
        knob = config.knob
        h = knob["values"][h_index] if knob["name"] == "h" else None
        target = _cached(("target", json.dumps(config.target, sort_keys=True), d, h),
                         lambda: build_target(config, d, h))
        tv = _cached(("truth", json.dumps(config.target, sort_keys=True), d, h),
                     lambda: truth(config, target))
        extra = 0 if h_index is None else h_index
        chain = rwm_run(target, RWMConfig(d, l, config.T, config.seed),
                        stream=chain_stream(config.seed, d, run, extra))
        plain = plain_average(chain, first_coordinate)
        if config.cv == "none":
            solution = _ZERO
        else:
            solution = _solution(config, target, chain, d, l, plain, tv)
        out = []
        if knob["name"] == "n_MC":
            cells = list(enumerate(knob["values"]))
        else:
            cells = [(h_index, config.n_MC_default)]
        for j, n_mc in cells:
            spec = CVSpec(solution, int(n_mc), d, l)
            res = cv_average(chain, target, spec, cv_stream(config.seed, d, run, j))
            out.append((j, res.plain, res.corrected))
        return out, time.perf_counter() - t0, None
    except Exception as exc:  # recorded per cell, the experiment continues
        msg = f"{type(exc).__name__}: {exc}"
        return None, time.perf_counter() - t0, msg + "\n" + traceback.format_exc(limit=3)


def _call(args):
    return run_task(*args)


@dataclass
class VRReport:
    rows: list
    config: dict
    version: str = __version__
    backend: str = field(default_factory=lambda: _backend.NAME)

    @property
    def failed(self):
        return [r for r in self.rows if r.get("error")]

    def csv_text(self):
        return csv_header() + "".join(csv_line(r) for r in self.rows)

    def to_dict(self):
        return {"version": self.version, "seed": self.config["seed"], "columns": list(COLUMNS),
                "rows": self.rows, "config": self.config}

    def write(self, output_dir):
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "report.csv"), "w", newline="") as fh:
            fh.write(self.csv_text())
        with open(os.path.join(output_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")


def _csv(values):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(values)
    return buf.getvalue()


def csv_header():
    return _csv(COLUMNS)


def csv_line(row):
    """One report.csv line; floats use the shortest round-trip repr."""
    return _csv([_fmt(row[c]) for c in COLUMNS])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _tasks(config):
    nd = len(config.d_grid)
    if config.knob["name"] == "n_MC":
        return [(di, None, k) for di in range(nd) for k in range(config.n_R)]
    nh = len(config.knob["values"])
    return [(di, hi, k) for di in range(nd) for hi in range(nh) for k in range(config.n_R)]


def _cell_rows(config, di, hi, results, label):
    """Rows of one ``d`` (all knob values) or one ``(d, h)`` cell."""
    d = int(config.d_grid[di])
    knob = config.knob
    idx = range(len(knob["values"])) if hi is None else [hi]
    errors = [e for _, _, e in results if e]
    elapsed = float(sum(t for _, t, _ in results))
    tv = truth(config, build_target(config, d, knob["values"][hi] if hi is not None else None))
    rows = []
    for j in idx:
        n_mc = knob["values"][j] if knob["name"] == "n_MC" else config.n_MC_default
        row = {"target": label, "d": d, "knob_name": knob["name"], "knob_value": knob["values"][j],
               "T": config.T, "n_R": config.n_R, "n_MC": int(n_mc), "l": config.l_of(d),
               "VR": None, "plain_mse": None, "cv_mse": None,
               "runtime_s": elapsed / len(idx) if config.record_timing else None,
               "seed": config.seed, "error": None}
        if errors:
            row["error"] = errors[0].splitlines()[0]
        else:
            plain = np.array([next(p for jj, p, _ in out if jj == j) for out, _, _ in results])
            corr = np.array([next(c for jj, _, c in out if jj == j) for out, _, _ in results])
            row["plain_mse"] = float(np.mean((plain - tv) ** 2))
            row["cv_mse"] = float(np.mean((corr - tv) ** 2))
            try:
                row["VR"] = variance_reduction(plain, corr, tv)
            except Exception as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def run_experiment(config, workers=1, on_row=None):
    """Run every grid cell of ``config`` and return a :class:`VRReport`.

    ``on_row`` is called with each row as soon as its cell completes.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    config = resolve(config)
    cfg_dict = config.to_dict()
    label = target_label(config)
    tasks = _tasks(config)
    args = [(cfg_dict, di, hi, k) for di, hi, k in tasks]
    workers = max(1, int(workers or 1))
    rows = []
    pending = []

    def consume(results):
        for (di, hi, k), res in zip(tasks, results):
            pending.append(res)
            if k == config.n_R - 1:
                for row in _cell_rows(config, di, hi, pending, label):
                    rows.append(row)
                    if on_row is not None:
                        on_row(row)
                pending.clear()

    if workers == 1:
        consume(map(_call, args))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            consume(pool.map(_call, args, chunksize=max(1, len(args) // (8 * workers))))
    return VRReport(rows, cfg_dict)
