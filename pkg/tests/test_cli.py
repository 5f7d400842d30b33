import json
import os

import pytest
from pydantic import ValidationError

from daverpg.data.export import TRACE_COLUMNS
from daverpg.errors import InvalidParameterError
from daverpg_cli.app import main
from daverpg_cli.config import load_config_file, merge_settings, resolve_config


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_flag_beats_file_beats_default(tmp_path):
    config = _write(tmp_path / "a.conf", "workers = 4\nseed = 3  # comment\n\n")
    cfg = resolve_config(config, {"seed": 9, "dim": None})
    assert cfg.workers == 4
    assert cfg.seed == 9
    assert cfg.dim == 2


def test_algo_flag_maps_to_algorithms():
    merged = merge_settings({"algorithms": "piag"}, {"algo": "dave-rpg,sync-pg"})
    assert merged == {"algorithms": "dave-rpg,sync-pg"}


def test_result_keys_are_skipped(tmp_path):
    config = _write(tmp_path / "m.manifest", "# run manifest x\nworkers = 3\nrun.iterations = 50\n")
    assert load_config_file(config) == {"workers": "3"}


def test_dashed_keys_are_normalized(tmp_path):
    config = _write(tmp_path / "d.conf", "budget-iters = 12\n")
    assert resolve_config(config, {}).budget_iters == 12


@pytest.mark.parametrize("text,fragment", [
    ("workers 4\n", ":1:"),
    ("seed = 1\nseed = 2\n", "duplicate"),
    (" = 3\n", "empty key"),
])
def test_malformed_files_rejected(tmp_path, text, fragment):
    config = _write(tmp_path / "bad.conf", text)
    with pytest.raises(InvalidParameterError, match=fragment):
        load_config_file(config)


def test_unknown_key_rejected(tmp_path):
    config = _write(tmp_path / "u.conf", "wrokers = 4\n")
    with pytest.raises(ValidationError, match="wrokers"):
        resolve_config(config, {})


def test_missing_config_file(tmp_path):
    with pytest.raises(InvalidParameterError):
        load_config_file(str(tmp_path / "nope.conf"))


def test_run_json(tmp_path, capsys):
    out = tmp_path / "runs"
    main(["run", "--workers", "3", "--budget-iters", "50", "--out", str(out), "--json"])
    result = json.loads(capsys.readouterr().out)
    assert result["success"] is True
    (run,) = result["runs"]
    assert run["iterations"] == 50
    assert os.path.isfile(run["trace_csv"])
    assert os.path.isfile(out / "dave-rpg-p1.manifest")


def test_run_human_output(tmp_path, capsys):
    main(["run", "--algo", "dave-rpg,piag", "--workers", "2", "--budget-iters", "30",
          "--out", str(tmp_path)])
    text = capsys.readouterr().out
    assert text.startswith("✓ 2 run(s)")
    assert "dave-rpg-p1: 30 exchanges" in text
    assert "piag: 30 exchanges" in text


def test_run_missing_dataset_fails(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--problem", "libsvm", "--dataset", str(tmp_path / "x.svm"), "--json"])
    assert info.value.code == 1
    result = json.loads(capsys.readouterr().out)
    assert result["success"] is False
    assert "dataset" in result["error"]


def test_run_bad_config_fails(tmp_path, capsys):
    config = _write(tmp_path / "bad.conf", "workers\n")
    with pytest.raises(SystemExit) as info:
        main(["run", "--config", config])
    assert info.value.code == 1
    assert capsys.readouterr().out.startswith("✗")


@pytest.fixture
def trace_csv(tmp_path):
    out = tmp_path / "runs"
    main(["run", "--workers", "4", "--delay-model", "exponential", "--budget-iters", "200",
          "--seed", "5", "--out", str(out)])
    return str(out / "dave-rpg-p1.trace.csv")


def test_epochs_json(trace_csv, capsys):
    capsys.readouterr()
    main(["epochs", trace_csv, "--json"])
    result = json.loads(capsys.readouterr().out)
    assert result["success"] is True
    assert result["scan_agrees"] is True
    assert result["workers"] == 4
    assert result["exchanges"] == 200
    assert result["boundaries"][0] == 0
    assert result["max_gap"] <= result["uniform_gap_bound"]


def test_epochs_human(trace_csv, capsys):
    capsys.readouterr()
    main(["epochs", trace_csv])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("✓")
    assert any("epoch boundaries: 0," in line for line in lines)


def test_epochs_rejects_too_few_workers(trace_csv, capsys):
    capsys.readouterr()
    with pytest.raises(SystemExit):
        main(["epochs", trace_csv, "--workers", "2", "--json"])
    result = json.loads(capsys.readouterr().out)
    assert result["success"] is False
    assert "--workers" in result["error"]


def test_epochs_missing_file(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["epochs", str(tmp_path / "none.csv")])
    assert info.value.code == 1
    assert "cannot read trace" in capsys.readouterr().out


def test_run_non_utf8_dataset_fails_cleanly(tmp_path, capsys):
    dataset = tmp_path / "latin.svm"
    dataset.write_bytes(b"1 1:0.5\n\xff\xfe 2:1\n")
    with pytest.raises(SystemExit) as info:
        main(["run", "--problem", "libsvm", "--dataset", str(dataset), "--workers", "1",
              "--out", str(tmp_path / "runs"), "--json"])
    assert info.value.code == 1
    result = json.loads(capsys.readouterr().out)
    assert result["success"] is False
    assert result["error"] == "line 2: invalid UTF-8"


def _idle_worker_trace(tmp_path, manifest_text=None):
    """Workers 0 and 1 alternate six times; worker 2 never exchanges"""
    path = tmp_path / "idle.trace.csv"
    rows = [",".join(TRACE_COLUMNS), "0,0.0,-1,1,0,0,1.0,1.0,1.0"]
    for k in range(1, 7):
        rows.append(f"{k},{float(k)},{(k - 1) % 2},1,0,1,1.0,1.0,1.0")
    path.write_text("\n".join(rows) + "\n")
    if manifest_text is not None:
        (tmp_path / "idle.manifest").write_text(manifest_text)
    return str(path)


def test_epochs_reads_worker_count_from_manifest(tmp_path, capsys):
    trace = _idle_worker_trace(tmp_path, "# run manifest idle\nworkers = 3\nrun.iterations = 6\n")
    main(["epochs", trace, "--json"])
    result = json.loads(capsys.readouterr().out)
    assert result["workers"] == 3
    assert result["boundaries"] == [0]


def test_epochs_without_manifest_counts_seen_workers(tmp_path, capsys):
    main(["epochs", _idle_worker_trace(tmp_path), "--json"])
    result = json.loads(capsys.readouterr().out)
    assert result["workers"] == 2
    assert result["boundaries"] == [0, 3, 6]


def test_epochs_rejects_manifest_with_too_few_workers(tmp_path, capsys):
    trace = _idle_worker_trace(tmp_path, "workers = 1\n")
    with pytest.raises(SystemExit):
        main(["epochs", trace, "--json"])
    result = json.loads(capsys.readouterr().out)
    assert result["success"] is False
    assert "manifest records 1 workers" in result["error"]
