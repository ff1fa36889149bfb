"""Exit codes, flag parsing, and artifact side effects of the CLI."""

import json

import pytest

from flexcluster.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main

SMALL_TOML = """
[dataset]
zone = "warm_coastal"
n_buildings = 3
n_days = 60
seed = 11
"""


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.toml"
    p.write_text(SMALL_TOML)
    return p


@pytest.fixture(scope="module")
def finished_run(config_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    code = main(["run", "--config", str(config_path), "--out", str(out), "--seed", "0"])
    assert code == EXIT_OK
    return out


class TestParsing:
    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["frobnicate"])

    def test_out_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["run"])

    def test_run_defaults(self):
        args = build_parser().parse_args(["run", "--out", "x"])
        assert args.seed == 0
        assert args.config is None

    def test_sweep_seed_list(self):
        args = build_parser().parse_args(
            ["sweep", "--out", "x", "--seeds", "3", "1", "4"]
        )
        assert args.seeds == [3, 1, 4]
        assert args.workers == 1

    def test_sweep_workers_flag(self):
        args = build_parser().parse_args(["sweep", "--out", "x", "--workers", "3"])
        assert args.workers == 3

    def test_report_takes_only_out(self):
        args = build_parser().parse_args(["report", "--out", "somewhere"])
        assert args.out == "somewhere"


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(
            ["run", "--config", str(tmp_path / "ghost.toml"), "--out", str(tmp_path)]
        )
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_bad_config_key(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text('[dataset]\nzoen = "hot_humid"\n')
        code = main(["gen-data", "--config", str(p), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "unknown key" in capsys.readouterr().err

    def test_report_on_empty_dir(self, tmp_path, capsys):
        code = main(["report", "--out", str(tmp_path)])
        assert code == EXIT_RUNTIME
        assert "error" in capsys.readouterr().err


class TestCommands:
    def test_gen_data(self, config_path, tmp_path, capsys):
        code = main(["gen-data", "--config", str(config_path), "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert "3 buildings" in capsys.readouterr().out
        assert (tmp_path / "dataset" / "meta.json").is_file()
        assert (tmp_path / "manifest.json").is_file()

    def test_train_forecaster(self, config_path, tmp_path, capsys):
        code = main(
            ["train-forecaster", "--config", str(config_path), "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        assert "persistence" in capsys.readouterr().out
        assert (tmp_path / "forecaster.json").is_file()
        assert (tmp_path / "forecast_report.csv").is_file()

    def test_baselines(self, config_path, tmp_path, capsys):
        code = main(["baselines", "--config", str(config_path), "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert "rbc total 1.0000" in capsys.readouterr().out
        assert (tmp_path / "baselines.json").is_file()

    def test_run_writes_artifacts(self, finished_run, capsys):
        payload = json.loads((finished_run / "cost_report.json").read_text())
        assert payload["seed"] == 0
        assert payload["zone"] == "warm_coastal"
        manifest = json.loads((finished_run / "manifest.json").read_text())
        assert manifest["command"] == "run"

    def test_report_renders_finished_run(self, finished_run, capsys):
        code = main(["report", "--out", str(finished_run)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "zone=warm_coastal" in out
        assert "total_cost" in out
        # the consolidated artifacts land next to the run outputs
        assert (finished_run / "report_summary.json").is_file()
        assert (finished_run / "metric_breakdown.csv").is_file()
