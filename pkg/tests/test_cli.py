import json
import subprocess
import sys

from dialogrl.cli import expand_matrix, main


def make_data(tmp_path, movies=60, goals_spec="1:8,2:4,4:4", seed=7):
    out = tmp_path / "data"
    rc = main(["gen-data", "--seed", str(seed), "--movies", str(movies),
               "--goals-spec", goals_spec, "--out-dir", str(out)])
    assert rc == 0
    return out / "kb.json", out / "goals.json"


def tiny_train_config(tmp_path, kb_path, goals_path, **overrides):
    cfg = {
        "method": "SC-DDQ",
        "schedule": "EMD",
        "seed": 1,
        "epochs": 4,
        "real_dialogs_per_epoch": 3,
        "planning_rounds": 1,
        "planning_dialogs_per_round": 2,
        "warm_start_dialogs": 5,
        "warm_start_updates": 5,
        "kb_path": str(kb_path),
        "goals_path": str(goals_path),
        "out_dir": str(tmp_path / "runs"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_gen_data_prints_partition(tmp_path, capsys):
    out = tmp_path / "data"
    rc = main(["gen-data", "--seed", "7", "--movies", "200",
               "--goals-spec", "1:61,2:16,3:17,4:34,5:9", "--out-dir", str(out)])
    captured = capsys.readouterr()
    assert rc == 0
    assert "easy=61 middle=33 difficult=43" in captured.out
    assert (out / "kb.json").exists() and (out / "goals.json").exists()


def test_gen_data_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["gen-data", "--seed", "3", "--movies", "50",
                     "--goals-spec", "1:4", "--out-dir", str(out)]) == 0
    assert (a / "kb.json").read_bytes() == (b / "kb.json").read_bytes()
    assert (a / "goals.json").read_bytes() == (b / "goals.json").read_bytes()


def test_gen_data_zero_movies_usage_error(tmp_path):
    rc = main(["gen-data", "--movies", "0", "--out-dir", str(tmp_path)])
    assert rc == 2


def test_train_writes_run_dir(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    config = tiny_train_config(tmp_path, kb_path, goals_path)
    rc = main(["train", "--config", str(config)])
    assert rc == 0
    run_dir = tmp_path / "runs" / "SC-DDQ_EMD_1"
    assert run_dir.is_dir()
    eval_rows = (run_dir / "eval.csv").read_text().strip().splitlines()
    assert len(eval_rows) == 5


def test_train_missing_kb_path_names_field(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    config = tiny_train_config(tmp_path, "", goals_path)
    rc = main(["train", "--config", str(config)])
    captured = capsys.readouterr()
    assert rc == 2
    assert "kb_path" in captured.err


def test_train_rerun_byte_identical(tmp_path):
    kb_path, goals_path = make_data(tmp_path)
    config = tiny_train_config(tmp_path, kb_path, goals_path)
    assert main(["train", "--config", str(config)]) == 0
    first = (tmp_path / "runs" / "SC-DDQ_EMD_1" / "eval.csv").read_bytes()
    assert main(["train", "--config", str(config)]) == 0
    second = (tmp_path / "runs" / "SC-DDQ_EMD_1" / "eval.csv").read_bytes()
    assert first == second


def test_train_invalid_gating_exit_2(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    config = tiny_train_config(tmp_path, kb_path, goals_path, schedule="RANDOM")
    rc = main(["train", "--config", str(config)])
    assert rc == 2


def test_eval_subcommand(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    config = tiny_train_config(tmp_path, kb_path, goals_path)
    assert main(["train", "--config", str(config)]) == 0
    run_dir = tmp_path / "runs" / "SC-DDQ_EMD_1"
    rc = main(["eval", "--run-dir", str(run_dir), "--level", "easy", "--episodes", "10"])
    captured = capsys.readouterr()
    assert rc == 0
    assert "success_rate=" in captured.out


def test_eval_show_renders_dialogs(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    config = tiny_train_config(tmp_path, kb_path, goals_path)
    assert main(["train", "--config", str(config)]) == 0
    run_dir = tmp_path / "runs" / "SC-DDQ_EMD_1"
    rc = main(["eval", "--run-dir", str(run_dir), "--episodes", "1", "--show"])
    captured = capsys.readouterr()
    assert rc == 0
    assert "usr:" in captured.out and "sys:" in captured.out


def matrix_spec(tmp_path, kb_path, goals_path, methods, schedules, seeds):
    spec = {
        "master_seed": 99,
        "methods": methods,
        "schedules": schedules,
        "seeds": seeds,
        "base": {
            "epochs": 4,
            "real_dialogs_per_epoch": 2,
            "planning_rounds": 1,
            "planning_dialogs_per_round": 2,
            "warm_start_dialogs": 4,
            "warm_start_updates": 4,
            "kb_path": str(kb_path),
            "goals_path": str(goals_path),
            "out_dir": str(tmp_path / "mruns"),
        },
    }
    path = tmp_path / "matrix.json"
    path.write_text(json.dumps(spec))
    return path


def test_expand_matrix_paper_grid_shape():
    spec = {
        "methods": ["DQN", "DDQ", "C-DDQ", "S-DDQ", "SC-DDQ"],
        "schedules": ["EMD", "EDD", "EED", "DME", "DEE", "DDM"],
        "seeds": [0],
        "base": {"kb_path": "x", "goals_path": "y"},
    }
    jobs = expand_matrix(spec)
    assert len(jobs) == 3 + 2 * 6  # three unscheduled + two scheduled x six


def test_matrix_runs_and_summarizes(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    spec = matrix_spec(tmp_path, kb_path, goals_path, ["DQN", "S-DDQ"], ["EMD"], [0])
    rc = main(["matrix", "--config", str(spec), "--jobs", "1"])
    captured = capsys.readouterr()
    assert rc == 0
    assert (tmp_path / "mruns" / "DQN_RANDOM_0").is_dir()
    assert (tmp_path / "mruns" / "S-DDQ_EMD_0").is_dir()
    assert "2/2 runs completed" in captured.out


def test_matrix_jobs_parallel_identical(tmp_path):
    kb_path, goals_path = make_data(tmp_path)
    outs = []
    for jobs, sub in (("1", "mruns"), ("2", "mruns2")):
        spec = matrix_spec(tmp_path, kb_path, goals_path, ["DQN", "DDQ"], [], [0])
        obj = json.loads(spec.read_text())
        obj["base"]["out_dir"] = str(tmp_path / sub)
        spec.write_text(json.dumps(obj))
        assert main(["matrix", "--config", str(spec), "--jobs", jobs]) == 0
        outs.append(
            (tmp_path / sub / "DQN_RANDOM_0" / "eval.csv").read_bytes()
            + (tmp_path / sub / "DDQ_RANDOM_0" / "eval.csv").read_bytes()
        )
    assert outs[0] == outs[1]


def test_matrix_empty_exit_zero(tmp_path, capsys):
    spec = tmp_path / "matrix.json"
    spec.write_text(json.dumps({"methods": [], "schedules": [], "seeds": []}))
    rc = main(["matrix", "--config", str(spec), "--jobs", "1"])
    assert rc == 0


def test_matrix_records_failures_and_continues(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    spec = matrix_spec(tmp_path, kb_path, goals_path, ["DQN", "DDQ"], [], [0])
    obj = json.loads(spec.read_text())
    obj["base"]["goals_path"] = str(tmp_path / "missing.json")  # every run fails
    spec.write_text(json.dumps(obj))
    rc = main(["matrix", "--config", str(spec), "--jobs", "1"])
    captured = capsys.readouterr()
    assert rc != 0
    assert "FAIL" in captured.out


def test_report_subcommand(tmp_path, capsys):
    kb_path, goals_path = make_data(tmp_path)
    config = tiny_train_config(tmp_path, kb_path, goals_path)
    assert main(["train", "--config", str(config)]) == 0
    rc = main(["report", "--runs", str(tmp_path / "runs"), "--out", str(tmp_path / "report")])
    assert rc == 0
    assert (tmp_path / "report" / "table4.csv").exists()
    assert (tmp_path / "report" / "correlation.csv").exists()


def test_report_empty_dir_exit_2(tmp_path):
    (tmp_path / "empty").mkdir()
    rc = main(["report", "--runs", str(tmp_path / "empty"), "--out", str(tmp_path / "r")])
    assert rc == 2


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "dialogrl.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout
