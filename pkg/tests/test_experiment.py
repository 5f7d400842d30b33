import os

import numpy as np
import pytest
from pydantic import ValidationError

from daverpg import experiment
from daverpg.data.export import RUN_PREFIX, read_manifest, read_trace_csv
from daverpg.errors import InvalidParameterError
from daverpg.experiment import run_experiment
from daverpg.schemas import NONE, ExperimentConfig
from daverpg_cli.config import resolve_config


def _config(tmp_path, **overrides):
    settings = dict(workers=3, dim=2, seed=7, budget_iters=200, out=str(tmp_path / "out"))
    settings.update(overrides)
    return ExperimentConfig(**settings)


def test_algorithms_share_problem_and_schedule(tmp_path):
    cfg = _config(tmp_path, algorithms="dave-rpg,piag", delay_model="slow-worker", init="-20")
    dave, piag = run_experiment(cfg)
    assert dave.run_id == "dave-rpg-p1"
    assert piag.run_id == "piag"
    assert dave.problem_digest == piag.problem_digest
    assert dave.epoch_boundaries[0] == 0
    assert dave.max_delay == piag.max_delay
    assert piag.piag_gamma > 0
    for manifest in (dave, piag):
        assert manifest.iterations == 200
        assert os.path.isfile(manifest.trace_csv)
        assert os.path.isfile(manifest.report_csv)
        assert os.path.isfile(os.path.join(cfg.out, f"{manifest.run_id}.manifest"))
    assert dave.final_distance_sq < piag.final_distance_sq


def test_repetition_sweep_runs_once_per_count(tmp_path):
    cfg = _config(tmp_path, reps="1,4", delay_model="exponential")
    manifests = run_experiment(cfg)
    assert [m.run_id for m in manifests] == ["dave-rpg-p1", "dave-rpg-p4"]
    assert [m.p for m in manifests] == [1, 4]
    assert {m.seed for m in manifests} == {7}
    rows = read_trace_csv(manifests[1].trace_csv)
    assert {row["p"] for row in rows if int(row["k"]) >= 1} == {"4"}


def test_manifest_reproduces_the_run(tmp_path):
    cfg = _config(tmp_path, algorithms="sync-pg,dave-rpg", reps="2", delay_model="uniform", lambda1=0.2)
    first = {m.run_id: m for m in run_experiment(cfg)}
    for run_id, manifest in first.items():
        path = os.path.join(cfg.out, f"{run_id}.manifest")
        pairs = read_manifest(path)
        assert pairs["init"] == NONE
        assert pairs[f"{RUN_PREFIX}trace_digest"] == manifest.trace_digest
        again = resolve_config(path, {"out": str(tmp_path / "again")})
        (rerun,) = run_experiment(again)
        assert rerun.trace_digest == manifest.trace_digest
        assert rerun.problem_digest == manifest.problem_digest


def test_missing_dataset_is_rejected_before_running(tmp_path):
    with pytest.raises(ValidationError, match="dataset"):
        _config(tmp_path, problem="libsvm", dataset=str(tmp_path / "absent.svm"))
    assert not os.path.exists(tmp_path / "out")


def test_libsvm_problem(tmp_path, rng):
    path = tmp_path / "small.svm"
    lines = []
    for i in range(40):
        label = 1 if rng.uniform() < 0.5 else -1
        lines.append(f"{label} 1:{rng.normal():.6f} {i % 4 + 2}:{rng.normal():.6f}")
    path.write_text("\n".join(lines) + "\n")
    cfg = _config(tmp_path, problem="libsvm", dataset=str(path), lambda1=0.01, lambda2=0.1,
                  reference_tol=1e-8, budget_iters=100, algorithms="dave-rpg,sync-pg")
    dave, sync = run_experiment(cfg)
    assert dave.problem_digest == sync.problem_digest
    assert sync.max_delay is None
    assert sync.epochs == 100
    assert 0.0 <= dave.nonzero_fraction <= 1.0
    assert dave.final_suboptimality >= -1e-8


def test_large_l1_weight_gives_zero_solution(tmp_path):
    cfg = _config(tmp_path, lambda1=100.0, center_spread=1.0)
    (manifest,) = run_experiment(cfg)
    assert manifest.nonzero_fraction == 0.0
    assert manifest.lambda1 == 100.0


def test_threaded_mode(tmp_path):
    cfg = _config(tmp_path, mode="run", budget_iters=60, dim=3)
    (manifest,) = run_experiment(cfg)
    assert manifest.mode == "run"
    assert manifest.iterations == 60
    assert np.isfinite(manifest.final_distance_sq)
    with pytest.raises(ValidationError):
        _config(tmp_path, mode="run", algorithms="piag")


def test_failed_run_still_writes_manifest(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise InvalidParameterError("schedule exploded")

    monkeypatch.setattr(experiment, "simulate", broken)
    cfg = _config(tmp_path)
    with pytest.raises(InvalidParameterError):
        run_experiment(cfg)
    pairs = read_manifest(os.path.join(cfg.out, "dave-rpg-p1.manifest"))
    assert pairs[f"{RUN_PREFIX}partial"] == "True"
    assert pairs[f"{RUN_PREFIX}error"] == "schedule exploded"
