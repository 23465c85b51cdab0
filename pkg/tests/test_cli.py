"""Config parsing, CLI subcommands, CSV artifacts, and determinism."""

import numpy as np
import pytest
from click.testing import CliRunner

from penfed.cli import main
from penfed.config import ConfigError, load_config, parse_config, reproduce_fig1_config
from penfed.diagnostics import parse_trace_csv
from penfed.runner import parse_summary_csv, run_experiment

QUAD_CONFIG = """\
# tiny quadratic sweep
graph.kind = path
graph.n = 3
loss.kind = quadratic
loss.d = 2
loss.seed = 7
lambda = 0.5, 2
solver.epsilon = 1e-8
solver.R0 = 5
output.plot = false
"""


class TestConfigParsing:
    def test_round_trip_of_all_keys(self, tmp_path):
        text = QUAD_CONFIG + "solver.delta_rule = fixed:1e-11\nsolver.max_inner_iters = 5000\n"
        config = parse_config(text, base_dir=tmp_path)
        assert config.graph_kind == "path" and config.graph_n == 3
        assert config.lambda_list == [0.5, 2.0]
        assert config.solver_delta_rule == "fixed"
        assert config.solver_delta_fixed == 1e-11
        assert config.solver_max_inner_iters == 5000
        assert config.output_plot is False

    def test_unknown_key_reports_line_number(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("graph.kind = path\nbogus.key = 3\n")

    def test_bad_value_reports_line_number(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("graph.n = not_a_number\n")

    def test_missing_equals_reports_line_number(self):
        with pytest.raises(ConfigError, match="line 3"):
            parse_config("graph.kind = path\ngraph.n = 4\njust words\n")

    def test_empty_lambda_list_rejected(self):
        with pytest.raises(ConfigError, match="lambda"):
            parse_config("lambda =\n")

    def test_custom_edges(self):
        config = parse_config("graph.kind = custom\ngraph.n = 3\ngraph.edges = 0-1, 1-2\nlambda = 1\n")
        topo = config.build_topology()
        assert topo.edges == frozenset({(0, 1), (1, 2)})

    def test_missing_data_file_rejected(self):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config("loss.data_file = nowhere.csv\nlambda = 1\n")

    def test_quadratic_data_file(self, tmp_path):
        data = tmp_path / "quad.csv"
        data.write_text("2,0\n0,2\n1,1\n3,0\n0,3\n-1,0\n")
        text = (
            "graph.kind = path\ngraph.n = 2\nloss.kind = quadratic\nloss.d = 2\n"
            f"loss.data_file = {data.name}\nlambda = 1\n"
        )
        config = parse_config(text, base_dir=tmp_path)
        problem = config.build_problem(config.build_gossip(), 1.0)
        assert np.array_equal(problem.losses[0].A, np.diag([2.0, 2.0]))
        assert np.array_equal(problem.losses[1].b, [-1.0, 0.0])

    def test_quadratic_data_inline(self):
        text = (
            "graph.kind = path\ngraph.n = 2\nloss.kind = quadratic\nloss.d = 2\n"
            "loss.data = 2,0; 0,2; 1,1; 3,0; 0,3; -1,0\nlambda = 1\n"
        )
        config = parse_config(text)
        problem = config.build_problem(config.build_gossip(), 1.0)
        assert np.array_equal(problem.losses[1].A, np.diag([3.0, 3.0]))
        assert np.array_equal(problem.losses[0].b, [1.0, 1.0])

    def test_inline_data_row_count_validated(self):
        text = (
            "graph.kind = path\ngraph.n = 2\nloss.kind = quadratic\nloss.d = 2\n"
            "loss.data = 2,0; 0,2; 1,1\nlambda = 1\n"
        )
        config = parse_config(text)
        with pytest.raises(ConfigError, match="expected 6"):
            config.build_problem(config.build_gossip(), 1.0)


class TestRunExperiment:
    def test_writes_expected_artifacts(self, tmp_path):
        config = parse_config(QUAD_CONFIG)
        config.output_dir = str(tmp_path / "out")
        result = run_experiment(config)
        assert result.exit_code == 0
        assert (tmp_path / "out" / "trace_lambda_0.5.csv").exists()
        assert (tmp_path / "out" / "trace_lambda_2.csv").exists()
        summary = parse_summary_csv((tmp_path / "out" / "summary.csv").read_text())
        assert [row["lambda"] for row in summary] == [0.5, 2.0]
        assert all(row["status"] == "ok" for row in summary)
        assert all(row["final_F_gap"] <= 1e-8 for row in summary)

    def test_lambda_zero_reports_zero_comm_rounds(self, tmp_path):
        config = parse_config(QUAD_CONFIG)
        config.lambda_list = [0.0]
        config.output_dir = str(tmp_path / "out0")
        run_experiment(config)
        summary = parse_summary_csv((tmp_path / "out0" / "summary.csv").read_text())
        assert summary[0]["comm_rounds"] == 0

    def test_traces_reparse_losslessly(self, tmp_path):
        config = parse_config(QUAD_CONFIG)
        config.output_dir = str(tmp_path / "out")
        run_experiment(config)
        text = (tmp_path / "out" / "trace_lambda_2.csv").read_text()
        rows = parse_trace_csv(text)
        from penfed.diagnostics import write_trace_rows

        assert write_trace_rows(rows) == text
        assert all(rows[i]["comm_rounds"] <= rows[i + 1]["comm_rounds"] for i in range(len(rows) - 1))

    def test_same_seed_byte_identical_csvs(self, tmp_path):
        for sub in ("a", "b"):
            config = parse_config(QUAD_CONFIG)
            config.output_dir = str(tmp_path / sub)
            run_experiment(config)
        for name in ("trace_lambda_0.5.csv", "trace_lambda_2.csv", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_plot_written_when_enabled(self, tmp_path):
        config = parse_config(QUAD_CONFIG)
        config.output_dir = str(tmp_path / "out")
        config.output_plot = True
        run_experiment(config)
        svg = (tmp_path / "out" / "convergence.svg").read_text()
        assert svg.lstrip().startswith("<?xml")

    def test_nonconvergence_flagged_with_partial_csvs(self, tmp_path):
        config = parse_config(QUAD_CONFIG)
        config.lambda_list = [50.0]
        config.solver_max_inner_iters = 2  # force the inner solve to stall
        config.output_dir = str(tmp_path / "out")
        result = run_experiment(config)
        assert result.exit_code == 2
        assert (tmp_path / "out" / "trace_lambda_50.csv").exists()
        summary = parse_summary_csv((tmp_path / "out" / "summary.csv").read_text())
        assert summary[0]["status"] == "nonconverged"

    def test_timing_flag_records_wall_time(self, tmp_path):
        config_path = tmp_path / "exp.cfg"
        config_path.write_text(QUAD_CONFIG)
        runner = CliRunner()
        result = runner.invoke(
            main,
            ["sweep-lambda", "--config", str(config_path), "--out", str(tmp_path / "t"), "--timing"],
        )
        assert result.exit_code == 0, result.output
        rows = parse_trace_csv((tmp_path / "t" / "trace_lambda_2.csv").read_text())
        assert rows[-1]["elapsed_seconds"] > 0.0

    def test_seed_override_changes_data(self, tmp_path):
        outputs = []
        for seed in (1, 2):
            config_path = tmp_path / "exp.cfg"
            config_path.write_text(QUAD_CONFIG)
            runner = CliRunner()
            out = tmp_path / f"seed{seed}"
            result = runner.invoke(
                main,
                ["sweep-lambda", "--config", str(config_path), "--out", str(out), "--seed", str(seed)],
            )
            assert result.exit_code == 0, result.output
            outputs.append((out / "summary.csv").read_text())
        assert outputs[0] != outputs[1]


class TestCliCommands:
    def test_sweep_lambda_exit_zero(self, tmp_path):
        config_path = tmp_path / "exp.cfg"
        config_path.write_text(QUAD_CONFIG)
        runner = CliRunner()
        result = runner.invoke(
            main, ["sweep-lambda", "--config", str(config_path), "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "summary.csv").exists()

    def test_solve_requires_single_lambda(self, tmp_path):
        config_path = tmp_path / "exp.cfg"
        config_path.write_text(QUAD_CONFIG)
        runner = CliRunner()
        result = runner.invoke(main, ["solve", "--config", str(config_path)])
        assert result.exit_code == 1
        result = runner.invoke(
            main,
            ["solve", "--config", str(config_path), "--lambda", "1.5", "--out", str(tmp_path / "o")],
        )
        assert result.exit_code == 0, result.output
        assert "lambda=1.5" in result.output

    def test_config_error_exit_code_and_line(self, tmp_path):
        config_path = tmp_path / "bad.cfg"
        config_path.write_text("graph.kind = path\nwat = 1\n")
        runner = CliRunner()
        result = runner.invoke(main, ["sweep-lambda", "--config", str(config_path)])
        assert result.exit_code == 1
        assert "line 2" in result.output

    def test_missing_config_is_error(self):
        runner = CliRunner()
        result = runner.invoke(main, ["sweep-lambda"])
        assert result.exit_code == 1

    def test_spectra_normalized_complete(self):
        runner = CliRunner()
        for n in (2, 17, 64):
            result = runner.invoke(main, ["spectra", "--kind", "complete", "--n", str(n), "--normalize"])
            assert result.exit_code == 0
            printed = dict(
                item.split("=") for item in result.output.split() if "=" in item
            )
            assert abs(float(printed["chi"]) - 1.0) < 1e-12
            assert abs(float(printed["lambda_max"]) - 1.0) < 1e-12

    def test_spectra_single_node_is_config_error(self):
        runner = CliRunner()
        result = runner.invoke(main, ["spectra", "--kind", "path", "--n", "1"])
        assert result.exit_code == 1

    def test_verify_theorem1(self, tmp_path):
        config_path = tmp_path / "exp.cfg"
        config_path.write_text(QUAD_CONFIG)
        runner = CliRunner()
        result = runner.invoke(main, ["verify-theorem1", "--config", str(config_path)])
        assert result.exit_code == 0, result.output
        assert result.output.count(" ok") == 2
        assert "VIOLATED" not in result.output

    def test_verify_theorem1_rejects_logistic(self, tmp_path):
        config_path = tmp_path / "exp.cfg"
        config_path.write_text("loss.kind = logistic_ridge\nlambda = 1\n")
        runner = CliRunner()
        result = runner.invoke(main, ["verify-theorem1", "--config", str(config_path)])
        assert result.exit_code == 1

    def test_scaling_command(self, tmp_path):
        config_path = tmp_path / "exp.cfg"
        config_path.write_text(
            "graph.kind = path\ngraph.n = 6\nloss.kind = quadratic\nloss.d = 2\n"
            "loss.seed = 3\nlambda = 2, 8, 32\nsolver.epsilon = 1e-6\nsolver.R0 = 5\n"
        )
        runner = CliRunner()
        result = runner.invoke(
            main, ["scaling", "--config", str(config_path), "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 0, result.output
        assert "slope" in result.output
        assert (tmp_path / "out" / "scaling.csv").exists()

    def test_preset_runs(self, tmp_path):
        # smoke only: the full preset is exercised by the acceptance suite
        runner = CliRunner()
        result = runner.invoke(
            main,
            [
                "sweep-lambda", "--preset", "reproduce-fig1", "--out", str(tmp_path / "fig1"),
                "--lambda", "0.1", "--no-plot",
            ],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "fig1" / "trace_lambda_0.1.csv").exists()


class TestPresetConfig:
    def test_reproduce_fig1_defaults(self):
        config = reproduce_fig1_config()
        assert config.graph_kind == "path"  # the printed matrix has unit corner entries
        assert config.graph_n == 20 and config.loss_d == 10
        assert config.lambda_list == [0.01, 0.1, 1.0, 10.0]
        assert config.loss_mu_ridge == 1e-2
        config.validate()

    def test_load_config_from_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(QUAD_CONFIG)
        config = load_config(path)
        assert config.graph_n == 3
