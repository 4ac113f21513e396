import hashlib
import json
from pathlib import Path

import pytest

from windwatch import cli, synth
from windwatch import pipeline as pl


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    """A 2-turbine, 90-day run config JSON with a tiny epoch budget."""
    root = tmp_path_factory.mktemp("cli")
    farm = synth.default_farm_config(3, turbine_ids=[1, 2], span_hours=2160)
    cfg = pl.RunConfig(out_root=root / "unused", seed=3, farm=farm)
    payload = cfg.to_dict()
    payload["lstm_train"].update(max_epochs=2, patience=2)
    payload["fnn_train"].update(max_epochs=2, patience=2)
    path = root / "config.json"
    path.write_text(json.dumps(payload))
    return path


def run(args, config, out):
    return cli.main(["--config", str(config), "--out", str(out)] + args)


def tree_hashes(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


@pytest.fixture(scope="module")
def pipeline_out(tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run(["pipeline"], tiny_config, out) == 0
    return out


def test_synth_writes_one_csv_per_turbine(tiny_config, tmp_path):
    assert run(["synth"], tiny_config, tmp_path) == 0
    files = sorted(p.name for p in (tmp_path / "data").glob("turbine_*.csv"))
    assert files == ["turbine_01.csv", "turbine_02.csv"]
    assert (tmp_path / "data" / "farm_config.json").exists()


def test_synth_rerun_is_byte_identical(tiny_config, tmp_path):
    assert run(["synth"], tiny_config, tmp_path) == 0
    first = tree_hashes(tmp_path)
    assert run(["synth"], tiny_config, tmp_path) == 0
    assert tree_hashes(tmp_path) == first


def test_pipeline_produces_expected_artifacts(pipeline_out):
    expected = [
        "processed/splits.json",
        "models/turbine_01_lstm.wwm",
        "models/turbine_02_fnn.wwm",
        "reports/detection_summary.csv",
        "reports/f1_table.csv",
        "reports/crosseval_good.csv",
        "reports/crosseval_bad.csv",
        "reports/plotdata/traces_01.csv",
        "reports/plotdata/powercurve_01.csv",
        "reports/plotdata/error_timeline_01.csv",
        "reports/plotdata/cutoffs_overview.csv",
        "run_manifest.json",
    ]
    for rel in expected:
        assert (pipeline_out / rel).exists(), rel


def test_full_pipeline_rerun_is_byte_identical(tiny_config, pipeline_out, tmp_path):
    assert run(["pipeline"], tiny_config, tmp_path) == 0
    assert tree_hashes(tmp_path) == tree_hashes(pipeline_out)


def test_train_single_turbine_and_kind(tiny_config, pipeline_out, tmp_path):
    # reuse synth+prep outputs by copying the input stages
    import shutil
    shutil.copytree(pipeline_out / "data", tmp_path / "data")
    shutil.copytree(pipeline_out / "processed", tmp_path / "processed")
    assert run(["train", "--turbine", "2", "--kind", "lstm"], tiny_config, tmp_path) == 0
    assert (tmp_path / "models" / "turbine_02_lstm.wwm").exists()
    assert not (tmp_path / "models" / "turbine_02_fnn.wwm").exists()
    assert (tmp_path / "models" / "turbine_02_lstm_history.csv").exists()


def test_retrain_same_seed_is_byte_identical(tiny_config, pipeline_out, tmp_path):
    import shutil
    shutil.copytree(pipeline_out / "data", tmp_path / "data")
    shutil.copytree(pipeline_out / "processed", tmp_path / "processed")
    assert run(["train", "--turbine", "1", "--kind", "fnn"], tiny_config, tmp_path) == 0
    ours = (tmp_path / "models" / "turbine_01_fnn.wwm").read_bytes()
    theirs = (pipeline_out / "models" / "turbine_01_fnn.wwm").read_bytes()
    assert ours == theirs


def test_unknown_turbine_is_validation_error(tiny_config, pipeline_out):
    assert run(["train", "--turbine", "99"], tiny_config, pipeline_out) == 1


def test_detect_before_train_fails_cleanly(tiny_config, tmp_path):
    assert run(["detect"], tiny_config, tmp_path) == 1


def test_detect_range_without_data_is_validation_error(tiny_config, pipeline_out):
    code = run(["detect", "--turbine", "1",
                "--start", "2031-01-01T00:00:00",
                "--end", "2031-01-02T00:00:00"], tiny_config, pipeline_out)
    assert code == 1


def test_detect_mode_flag_and_summary(tiny_config, pipeline_out, capsys):
    assert run(["detect", "--turbine", "1", "--mode", "rmspe"],
               tiny_config, pipeline_out) == 0
    out = capsys.readouterr().out
    assert "rmspe weighted F1" in out


def test_usage_errors_map_to_validation_exit():
    assert cli.main(["no-such-command"]) == 1
    assert cli.main(["--help"]) == 0


def test_commands_do_not_mutate_inputs(tiny_config, pipeline_out):
    before = tree_hashes(pipeline_out / "data")
    assert run(["cross-eval"], tiny_config, pipeline_out) == 0
    assert run(["report"], tiny_config, pipeline_out) == 0
    assert tree_hashes(pipeline_out / "data") == before


def test_config_env_var_is_honoured(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.CONFIG_ENV_VAR, str(tiny_config))
    assert cli.main(["--out", str(tmp_path), "synth"]) == 0
    files = list((tmp_path / "data").glob("turbine_*.csv"))
    assert len(files) == 2


def test_seed_override_changes_outputs(tiny_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["--config", str(tiny_config), "--out", str(a),
                     "--seed", "3", "synth"]) == 0
    assert cli.main(["--config", str(tiny_config), "--out", str(b),
                     "--seed", "4", "synth"]) == 0
    ha = (a / "data" / "turbine_01.csv").read_bytes()
    hb = (b / "data" / "turbine_01.csv").read_bytes()
    assert ha != hb


def test_span_validation_fails_at_config_load(tmp_path):
    bad = {"seed": 1, "farm": {"turbines": [
        {"turbine_id": 1}], "span_hours": 200}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert cli.main(["--config", str(path), "--out", str(tmp_path), "synth"]) == 1
