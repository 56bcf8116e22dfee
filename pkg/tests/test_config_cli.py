import csv
import json
import math
import os

import numpy as np
import pytest

from rwmcv import __version__, cli
from rwmcv.config import ExperimentConfig
from rwmcv.exceptions import ConfigError
from rwmcv.experiment import COLUMNS
from rwmcv.poisson import h_of_l
from rwmcv.sampler import optimal_l
from rwmcv.targets import bimodal_mixture, fisher_J

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

TINY = {"target": {"family": "product_mixture", "params": {"preset": "bimodal"}},
        "d_grid": [2, 3], "knob": {"name": "n_MC", "values": [2, 4]},
        "T": 60, "n_R": 3, "cv": "grid"}


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data, indent=2) if not isinstance(data, str) else data)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config -----------------------------------------------------------------

def test_config_defaults_and_roundtrip():
    cfg = ExperimentConfig.from_dict(dict(TINY))
    assert cfg.l == "auto" and cfg.seed == 0 and cfg.n_MC_default == 50
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_resolved_echo_roundtrip():
    cfg = ExperimentConfig.from_dict(dict(TINY))
    res = cfg.resolved(lambda d: 2.0 + d)
    assert res.l == {"2": 4.0, "3": 5.0} and res.rho_f == "estimate"
    again = ExperimentConfig.from_json(res.to_json())
    assert again == res and again.l_of(3) == 5.0


def test_full_scale_warns():
    cfg = ExperimentConfig.from_dict(dict(TINY, full_scale=True))
    with pytest.warns(RuntimeWarning):
        res = cfg.resolved(lambda d: 1.0)
    assert (res.T, res.n_R) == (200_000, 500)


@pytest.mark.parametrize("patch, key", [
    ({"d_grid": []}, "d_grid"),
    ({"d_grid": [0]}, "d_grid"),
    ({"T": 1}, "T"),
    ({"cv": "magic"}, "cv"),
    ({"cv": "gaussian_analytic"}, "cv"),
    ({"knob": {"name": "h", "values": [1.0]}}, "knob"),
    ({"l": -1.0}, "l"),
    ({"l": {"2": 1.0}}, "l"),
    ({"f": "second_coordinate"}, "f"),
    ({"bogus": 1}, "bogus"),
])
def test_config_errors_are_line_anchored(patch, key):
    text = json.dumps(dict(TINY, **patch), indent=2)
    line = next(n for n, s in enumerate(text.splitlines(), 1) if f'"{key}":' in s)
    with pytest.raises(ConfigError, match=f"^line {line}:"):
        ExperimentConfig.from_json(text)


def test_config_invalid_json_and_missing_keys():
    with pytest.raises(ConfigError, match="^line 2:"):
        ExperimentConfig.from_json('{\n  "d_grid": [1,,]\n}')
    with pytest.raises(ConfigError, match="missing required key 'knob'"):
        ExperimentConfig.from_dict({"target": TINY["target"], "d_grid": [2]})


def test_gaussian_analytic_accepted_for_gaussian_targets():
    mv = {"family": "mv_gaussian_mixture", "params": {"h": 2.0}}
    ExperimentConfig.from_dict(dict(TINY, target=mv, cv="gaussian_analytic"))
    prod = {"family": "product_mixture", "params": {"preset": "standard_normal"}}
    ExperimentConfig.from_dict(dict(TINY, target=prod, cv="gaussian_analytic"))


def test_shipped_configs_parse():
    names = [n for n in os.listdir(CONFIGS) if n.endswith(("_reduced.json", "_full.json"))]
    assert names
    for n in names:
        ExperimentConfig.load(os.path.join(CONFIGS, n))


# --- experiment command -----------------------------------------------------

def test_empty_d_grid_exits_1(tmp_path, capsys):
    path = write(tmp_path, "c.json", dict(TINY, d_grid=[]))
    assert cli.main(["--output-dir", str(tmp_path / "o"), "experiment", path]) == 1
    assert "line" in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path):
    assert cli.main(["experiment", str(tmp_path / "nope.json")]) == 1


def test_experiment_outputs_and_reproducibility(tmp_path):
    path = write(tmp_path, "c.json", TINY)
    outs = []
    for k, workers in enumerate((1, 2)):
        out = tmp_path / f"o{k}"
        assert cli.main(["--workers", str(workers), "--output-dir", str(out), "experiment", path]) == 0
        outs.append(out)
    a, b = ((o / "report.csv").read_bytes() for o in outs)
    assert a == b and b"\r" not in a
    rows = read_csv(outs[0] / "report.csv")
    assert len(rows) == len(TINY["d_grid"]) * len(TINY["knob"]["values"])
    assert list(rows[0]) == list(COLUMNS)
    assert all(r["runtime_s"] == "" for r in rows)
    meta = json.loads((outs[0] / "report.json").read_text())
    assert meta["version"] == __version__ and meta["seed"] == 0
    # the echoed config reproduces the resolved config exactly
    echo = ExperimentConfig.from_dict(meta["config"])
    assert echo.to_dict() == meta["config"]
    for d in TINY["d_grid"]:
        assert echo.l_of(d) == pytest.approx(optimal_l(fisher_J(bimodal_mixture())), rel=1e-12)


def test_seed_flag_overrides(tmp_path):
    path = write(tmp_path, "c.json", dict(TINY, d_grid=[2], knob={"name": "n_MC", "values": [2]}))
    cli.main(["--seed", "5", "--output-dir", str(tmp_path / "a"), "experiment", path])
    cli.main(["--output-dir", str(tmp_path / "b"), "experiment", path])
    ra, rb = read_csv(tmp_path / "a" / "report.csv"), read_csv(tmp_path / "b" / "report.csv")
    assert ra[0]["seed"] == "5" and rb[0]["seed"] == "0"
    assert ra[0]["VR"] != rb[0]["VR"]


def test_subcommand_position_of_global_flags(tmp_path):
    path = write(tmp_path, "c.json", dict(TINY, d_grid=[2], knob={"name": "n_MC", "values": [2]}))
    assert cli.main(["experiment", "--output-dir", str(tmp_path / "x"), path]) == 0
    assert (tmp_path / "x" / "report.csv").exists()


def test_trajectory_dump(tmp_path):
    path = write(tmp_path, "c.json", dict(TINY, d_grid=[2], knob={"name": "n_MC", "values": [2]}))
    out = tmp_path / "t"
    assert cli.main(["--output-dir", str(out), "experiment", path, "--trajectory"]) == 0
    rows = list(csv.reader((out / "trajectory_d2.csv").read_text().splitlines()))
    assert rows[0] == ["step", "accepted", "x1", "x2"] and len(rows) == TINY["T"] + 1


def test_partial_failure_exits_2(tmp_path, monkeypatch):
    from rwmcv import experiment
    real = experiment.rwm_run

    def flaky(target, cfg, **kw):
        if cfg.d == 3:
            raise RuntimeError("boom")
        return real(target, cfg, **kw)

    monkeypatch.setattr(experiment, "rwm_run", flaky)
    path = write(tmp_path, "c.json", TINY)
    out = tmp_path / "f"
    assert cli.main(["--workers", "1", "--output-dir", str(out), "experiment", path]) == 2
    rows = read_csv(out / "report.csv")
    assert [r["VR"] == "" for r in rows] == [False, False, True, True]
    meta = json.loads((out / "report.json").read_text())
    assert "boom" in meta["rows"][2]["error"]


# --- poisson command --------------------------------------------------------

def test_poisson_normal_identity(tmp_path):
    path = write(tmp_path, "p.json", {"density": {"preset": "standard_normal"}, "f": "identity",
                                      "l": 2.38})
    out = tmp_path / "p"
    assert cli.main(["--output-dir", str(out), "poisson", path]) == 0
    rows = read_csv(out / "poisson.csv")
    assert list(rows[0]) == ["node", "fhat", "fhat_prime", "generator_residual"]
    x = np.array([float(r["node"]) for r in rows])
    fh = np.array([float(r["fhat"]) for r in rows])
    slope = np.polyfit(x, fh, 1)[0]
    assert slope == pytest.approx(2 / h_of_l(2.38, 1.0), abs=1e-4)
    assert max(abs(float(r["generator_residual"])) for r in rows) < 1e-3
    meta = json.loads((out / "poisson_meta.json").read_text())
    assert meta["version"] == __version__ and meta["config"]["l"] == 2.38


def test_poisson_constant_f_is_zero(tmp_path):
    path = write(tmp_path, "p.json", {"density": {"preset": "bimodal"}, "f": "constant", "f_value": 3.0})
    out = tmp_path / "p"
    assert cli.main(["--output-dir", str(out), "poisson", path]) == 0
    rows = read_csv(out / "poisson.csv")
    assert all(abs(float(r["fhat"])) < 1e-12 for r in rows)
    assert max(abs(float(r["generator_residual"])) for r in rows) < 1e-3


def test_poisson_bimodal_grid_solver(tmp_path):
    path = write(tmp_path, "p.json", {"density": {"preset": "bimodal"}, "solver": "grid",
                                      "grid_nodes": 400})
    assert cli.main(["--output-dir", str(tmp_path / "g"), "poisson", path]) == 0


def test_poisson_config_errors(tmp_path):
    for bad in ({"solver": "magic"}, {"f": "cube"}, {"density": {"preset": "cauchy"}}, {"unknown": 1},
                {"l": 0}):
        path = write(tmp_path, "p.json", bad)
        assert cli.main(["--output-dir", str(tmp_path / "e"), "poisson", path]) == 1


# --- generator-check and ad-check -------------------------------------------

def test_generator_check_single_d(tmp_path):
    path = write(tmp_path, "g.json", {"d_grid": [8], "n_points": 5, "n_inner": 1000})
    out = tmp_path / "g"
    assert cli.main(["--output-dir", str(out), "generator-check", path]) == 0
    rows = read_csv(out / "generator_gap.csv")
    assert len(rows) == 1 and rows[0]["d"] == "8"
    assert float(rows[0]["mean_abs_gap"]) >= 0


def test_generator_check_constant_g(tmp_path):
    path = write(tmp_path, "g.json", {"g": "constant", "g_value": 2.0, "d_grid": [4, 16],
                                      "n_points": 5, "n_inner": 1000})
    out = tmp_path / "g"
    assert cli.main(["--output-dir", str(out), "generator-check", path]) == 0
    for r in read_csv(out / "generator_gap.csv"):
        assert float(r["mean_abs_gap"]) <= 3 * float(r["mean_inner_se"]) + 1e-15


def test_ad_check_columns_and_frequency(tmp_path):
    path = write(tmp_path, "a.json", {"d_grid": [2, 100], "n_draws": 20_000})
    out = tmp_path / "a"
    assert cli.main(["--output-dir", str(out), "ad-check", path]) == 0
    rows = read_csv(out / "ad_check.csv")
    assert list(rows[0]) == list(cli.AD_COLUMNS)
    assert all(rows[0][f"freq_cond{k}"] != "" for k in range(1, 5))
    assert float(rows[1]["miss_rate"]) < 0.05
    assert math.isclose(float(rows[1]["a_d"]), math.sqrt(2 * math.log(100)), rel_tol=1e-15)


@pytest.mark.parametrize("grid", [[1.0], [1.001]])
def test_ad_check_empty_A_exits_1(tmp_path, capsys, grid):
    path = write(tmp_path, "a.json", {"d_grid": [2], "n_draws": 100, "c_A_grid": grid})
    assert cli.main(["--output-dir", str(tmp_path / "a"), "ad-check", path]) == 1
    assert "c_A" in capsys.readouterr().err


def test_ad_check_reproducible(tmp_path):
    path = write(tmp_path, "a.json", {"d_grid": [10], "n_draws": 3000, "seed": 4})
    for k in range(2):
        assert cli.main(["--output-dir", str(tmp_path / f"r{k}"), "ad-check", path]) == 0
    assert (tmp_path / "r0" / "ad_check.csv").read_bytes() == (tmp_path / "r1" / "ad_check.csv").read_bytes()


def test_bad_workers_and_version(capsys):
    assert cli.main(["--workers", "0", "experiment", "x.json"]) == 1
    with pytest.raises(SystemExit):
        cli.main(["--version"])
    assert __version__ in capsys.readouterr().out
