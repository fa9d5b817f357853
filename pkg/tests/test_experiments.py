import json

import pytest

from tokcol.experiments import (
    ConfigError,
    ExperimentConfig,
    InstanceSpec,
    default_corpus,
    eval_formula,
    execute,
    expand,
    fit_linear,
    fit_ratio,
    records_from_csv,
    records_to_csv,
    summarize,
    sweep,
    worker_count,
)

SMALL = {
    "name": "t",
    "topology": {"kind": ["ring", "path"], "n": [4, 8]},
    "assignment": {"k": "n", "L": "clog2(n) + 2"},
    "run": {"algorithm": ["det_small", "det_large"], "knowledge": "know_n"},
    "seeds": 2,
}


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({**SMALL, "typo": 1})
    with pytest.raises(ConfigError, match="run"):
        ExperimentConfig.from_dict({**SMALL, "run": {"algoritm": "det_small"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, "topology": []})


def test_config_hash_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = ExperimentConfig.load(str(path))
    assert again == cfg and again.digest() == cfg.digest()
    assert ExperimentConfig.from_dict({**SMALL, "seeds": 3}).digest() != cfg.digest()


def test_formulas():
    assert eval_formula("clog2(n) + 2", 16) == 6
    assert eval_formula("max(4, n // 2)", 6) == 4
    assert eval_formula(7, 100) == 7
    for bad in ("__import__('os')", "n ** 2", "foo + 1"):
        with pytest.raises(ConfigError):
            eval_formula(bad, 4)


def test_expand_is_cartesian():
    jobs = expand(ExperimentConfig.from_dict(SMALL))
    assert len(jobs) == 2 * 2 * 2 * 2
    assert [j.run_id for j in jobs] == list(range(16))
    assert {j.spec.k for j in jobs} == {4, 8}


def test_sweep_independent_of_worker_count():
    cfg = ExperimentConfig.from_dict(SMALL)
    one = sweep(cfg, workers=1)
    two = sweep(cfg, workers=2)
    assert one == two
    assert all(r["status"] == "ok" for r in one)


def test_failed_runs_are_recorded():
    cfg = ExperimentConfig.from_dict({**SMALL, "assignment": {"k": 9, "L": 2}, "seeds": 1})
    recs = sweep(cfg, workers=1)
    assert all(r["status"].startswith("invalid") for r in recs)
    tight = ExperimentConfig.from_dict({**SMALL, "run": {"algorithm": "det_small", "bandwidth_B": 4},
                                        "seeds": 1})
    assert all(r["status"].startswith("bandwidth") for r in sweep(tight, workers=1))


def test_no_decision_status():
    spec = InstanceSpec("ring", 5, 5, 4, seed=1)
    from tokcol.engine import RunConfig
    from tokcol.experiments import Job

    rec = execute(Job(0, spec, RunConfig(knowledge="none", round_limit=30), "h", True))
    assert rec["status"] == "no_decision" and rec["verdict"] == "none"


def test_csv_round_trip():
    recs = sweep(ExperimentConfig.from_dict(SMALL), workers=1)
    back = records_from_csv(records_to_csv(recs))
    assert len(back) == len(recs)
    for a, b in zip(recs, back):
        for key in ("run_id", "n", "k", "L", "D", "rounds", "status", "verdict"):
            assert a[key] == b[key]


def test_worker_env(monkeypatch):
    monkeypatch.setenv("TOKCOL_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("TOKCOL_WORKERS", "x")
    with pytest.raises(ConfigError):
        worker_count()


def test_fits():
    f = fit_linear([1, 2, 3, 4], [3, 5, 7, 9])
    assert f.slope == pytest.approx(2) and f.intercept == pytest.approx(1)
    assert fit_linear([1, 2], [2, 4], intercept=False).slope == pytest.approx(2)
    assert fit_ratio([1, 4], [2, 2]) == pytest.approx(1.0)
    summary = summarize(sweep(ExperimentConfig.from_dict(SMALL), workers=1))
    assert set(summary) == {"det_small", "det_large"} and summary["det_small"]["C"] > 0


def test_default_corpus_is_seeded_and_bounded():
    a = default_corpus(100, 16, seed=1)
    assert a == default_corpus(100, 16, seed=1)
    assert all(s.n <= 32 and s.k <= 64 for s in a)
