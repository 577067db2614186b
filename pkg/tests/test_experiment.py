import math

import numpy as np
import pytest

from pbef.errors import ConfigurationError
from pbef.estimator import PredictorSpec
from pbef.experiment import (ExperimentConfig, ReplicationResult, StudyReport, coefficient_expansion_check,
                             emit_report, gamma_identification_grid, generator_expansion_check,
                             increment_slope_check, read_replications_csv, run_clt_check, run_estimation_study,
                             run_lln_check, schedule_preset)
from pbef.functions import SmoothFunction
from pbef.model import OrnsteinUhlenbeck

OU_MEAN = {"family": "ou", "params": {"kappa": 1.0, "eta": 1.0, "xi": 1.0}, "free": ["eta"]}
OU_TWO = {"family": "ou", "params": {"kappa": 1.0, "eta": 1.0, "xi": 1.0}, "free": ["eta", "kappa"]}


def test_schedule_preset_regime():
    sched = schedule_preset(0.5, [100, 10_000, 1_000_000])
    cfg = ExperimentConfig(model=OU_MEAN, estimator="simple", schedule=sched, replications=1)
    reg = cfg.regime()
    assert [r["n_delta3"] for r in reg] == sorted((r["n_delta3"] for r in reg), reverse=True)
    assert [r["n_delta"] for r in reg] == sorted(r["n_delta"] for r in reg)
    assert ExperimentConfig(model=OU_MEAN, schedule=[(1000, 1.0)]).regime()[0]["regime_ok"] is False


def test_config_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(model=OU_MEAN, estimator="mle")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(model=OU_MEAN, replications=0)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"model": OU_MEAN, "bogus": 1})
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json(p)


def test_lln_examples():
    cfg = ExperimentConfig(model=OU_MEAN, estimator="simple", schedule=[(10_000, 0.01)], replications=30, seed=1)
    row = run_lln_check(cfg)[0]
    assert row["passed"] and row["target"] == pytest.approx(1.0)
    one = run_lln_check(cfg, SmoothFunction.constant(1.0))[0]
    assert one["deviation"] == 0.0 and one["passed"]
    cfg2 = ExperimentConfig(model={"family": "ou", "params": {"kappa": 1.0, "eta": 0.0, "xi": math.sqrt(2)},
                                   "free": ["eta"]}, estimator="simple", schedule=[(10_000, 0.01)],
                            replications=30, seed=2)
    r2 = run_lln_check(cfg2, SmoothFunction.monomial(2))[0]
    assert r2["target"] == pytest.approx(1.0) and r2["passed"]


def test_clt_examples():
    model = {"family": "ou", "params": {"kappa": 1.0, "eta": 0.0, "xi": 1.0}, "free": ["eta"]}
    cfg = ExperimentConfig(model=model, estimator="simple", schedule=[(20_000, 0.01), (100, 1.0)],
                           replications=300, seed=3, avar={"K": 500, "t_max": 8.0})
    rows = run_clt_check(cfg)
    assert rows[0]["predicted"] == pytest.approx(1.0)
    assert rows[0]["passed"] is True
    assert rows[1]["regime_ok"] is False and rows[1]["passed"] is None
    zero = run_clt_check(ExperimentConfig(model=model, estimator="simple", schedule=[(100, 0.1)], replications=3,
                                          avar={"K": 50, "t_max": 4.0}), SmoothFunction.constant(0.0))[0]
    assert zero["empirical_var"] == 0.0


def test_smoke_study_single_replication():
    cfg = ExperimentConfig(model=OU_TWO, estimator="onelag", schedule=[(2000, 0.05)], replications=1, seed=4)
    rep = run_estimation_study(cfg)
    assert len(rep.replications) == 1
    assert rep.summaries[0].n_ok == 1


def test_study_simple_and_report_round_trip(tmp_path):
    cfg = ExperimentConfig(model=OU_MEAN, estimator="simple", schedule=[(5000, 0.02), (20_000, 0.01)],
                           replications=40, seed=5)
    rep = run_estimation_study(cfg)
    s = rep.summaries[1]
    assert s.convergence_rate == 1.0 and s.fallback_rate == 0.0
    assert 0.8 <= s.coverage_oracle[0] <= 1.0
    ev = np.linalg.eigvalsh(np.array(s.emp_cov))
    assert ev.min() >= 0
    paths = emit_report(rep, tmp_path / "a")
    back = read_replications_csv(paths[0])
    assert back == rep.replications
    summary = (tmp_path / "a" / "summary.csv").read_text().strip().splitlines()
    assert len(summary) == 1 + len(cfg.schedule)
    # determinism
    emit_report(run_estimation_study(cfg), tmp_path / "b")
    assert (tmp_path / "a" / "replications.csv").read_bytes() == (tmp_path / "b" / "replications.csv").read_bytes()
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    js = emit_report(rep, tmp_path / "c", "json")
    assert js[0].name == "report.json"


def test_parallel_matches_serial():
    cfg = ExperimentConfig(model=OU_TWO, estimator="onelag", schedule=[(2000, 0.05)], replications=30, seed=6)
    from pbef.experiment import run_replications
    assert run_replications(cfg, jobs=2) == run_replications(cfg, jobs=1)


def test_empty_report_header_only(tmp_path):
    cfg = ExperimentConfig(model=OU_MEAN, estimator="simple", replications=1)
    rep = StudyReport(cfg, ["eta"], [1.0], [[1.0]], [], [])
    p = emit_report(rep, tmp_path)[0]
    assert p.read_text().count("\n") == 1


def test_replication_equality_ignores_runtime():
    a = ReplicationResult(0, 1, [1.0], True, False, [0.1], runtime=1.0)
    b = ReplicationResult(0, 1, [1.0], True, False, [0.1], runtime=2.0)
    assert a == b


def test_gamma_grid_unique_root():
    m = OrnsteinUhlenbeck(free=("eta", "kappa"), fixed={"xi": 1.0})
    out = gamma_identification_grid(m, [1.0, 2.0], PredictorSpec(SmoothFunction.identity(), 1),
                                    ((0.0, 2.0), (0.5, 4.0)), n=20)
    assert out["root_norm"] < 1e-12
    assert out["min_off_root"] > 10 * out["root_norm"]


def test_generator_expansion_ratio():
    m = OrnsteinUhlenbeck()
    out = generator_expansion_check(m, [1.0, 0.0, 1.0], SmoothFunction.monomial(3), 0.7,
                                    [0.2, 0.1, 0.05, 0.025])
    assert all(abs(r - 8) <= 0.35 * 8 for r in out["ratios"])


def test_coefficient_expansion_ratio():
    m = OrnsteinUhlenbeck()
    rows = coefficient_expansion_check(m, [1.0, 0.0, 1.0], PredictorSpec(SmoothFunction.identity(), 1),
                                       [0.2, 0.1, 0.05])["rows"]
    assert all(abs(r["ratio"] - 4) <= 1 for r in rows)


def test_increment_slopes():
    out = increment_slope_check(OrnsteinUhlenbeck(), [1.0, 0.0, 1.0], [0.1, 0.05, 0.025, 0.0125],
                                n_paths=5000)
    assert out[2]["passed"] and out[4]["passed"]
