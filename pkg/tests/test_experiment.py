import numpy as np
import pytest

from rwmcv import experiment
from rwmcv.config import ExperimentConfig

BIMODAL = {"family": "product_mixture", "params": {"preset": "bimodal"}}
MV = {"family": "mv_gaussian_mixture", "params": {"spike": 25.0}}


def cfg(**kw):
    base = dict(target=BIMODAL, d_grid=[2], knob={"name": "n_MC", "values": [3]}, T=100, n_R=2)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_smoke_single_cell():
    rep = experiment.run_experiment(cfg())
    assert len(rep.rows) == 1 and not rep.failed
    r = rep.rows[0]
    assert r["VR"] > 0 and r["n_MC"] == 3 and r["target"] == "product_bimodal"
    assert r["plain_mse"] / r["cv_mse"] == pytest.approx(r["VR"], rel=1e-12)


def test_workers_do_not_change_results():
    c = cfg(d_grid=[2, 4], knob={"name": "n_MC", "values": [1, 5]}, n_R=4)
    a = experiment.run_experiment(c, workers=1)
    b = experiment.run_experiment(c, workers=2)
    assert a.csv_text() == b.csv_text()


def test_no_cv_gives_unit_vr():
    rep = experiment.run_experiment(cfg(cv="none", n_R=3))
    assert rep.rows[0]["VR"] == 1.0


def test_closed_form_uses_exact_rho_f():
    c = experiment.resolve(cfg(cv="closed_form"))
    assert c.rho_f == "exact"
    assert experiment.truth(c, experiment.build_target(c, 2)) == pytest.approx(1.2, abs=1e-8)


def test_h_knob_rows_and_truth():
    c = cfg(target=MV, d_grid=[3], knob={"name": "h", "values": [0.0, 4.0]}, cv="gaussian_analytic",
            covariance="estimated", n_MC_default=4)
    rep = experiment.run_experiment(c)
    assert [r["knob_value"] for r in rep.rows] == [0.0, 4.0] and not rep.failed
    rc = experiment.resolve(c)
    tgt = experiment.build_target(rc, 3, 4.0)
    assert experiment.truth(rc, tgt) == pytest.approx(float(np.mean(tgt.means[:, 0])))


def test_l_resolution_and_label():
    c = experiment.resolve(cfg(l=2.38))
    assert c.l == {"2": 2.38}
    assert experiment.target_label(experiment.resolve(cfg(target=MV, cv="none"))).startswith("mv")


def test_record_timing():
    rep = experiment.run_experiment(cfg(record_timing=True))
    assert rep.rows[0]["runtime_s"] > 0


def test_run_task_reports_errors():
    bad = experiment.resolve(cfg()).to_dict()
    bad["d_grid"] = [2]
    out, _, err = experiment.run_task(bad, 5, None, 0)
    assert out is None and "IndexError" in err
