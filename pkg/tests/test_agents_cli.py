"""
Tests for the experiment agents, agent discovery and the command line.

    pytest tests/test_agents_cli.py -v
"""

import csv
import json
import os
import sys
from pathlib import Path
from unittest.mock import patch

import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from atomiclift.errors import ConfigurationError
from utils.agent_manager import get_manager

EXPERIMENT_AGENTS = {"synth", "run", "sweep", "noisy", "certify"}

SMALL = {
    "N_values": [16],
    "K_values": [1],
    "L_values": [1],
    "trials": 1,
    "record_timing": False,
    "solver": {"max_iterations": 20000, "raise_on_nonconvergence": False},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(dict(SMALL, description="tiny test workflow")))
    return str(path)


@pytest.fixture
def manager():
    manager = get_manager()
    manager.clear_registry()
    manager.discover_agents()
    yield manager
    manager.clear_registry()


class TestAgentDiscovery:
    """Auto-discovery of experiment agents"""

    def test_discovers_experiment_agents(self, manager):
        assert EXPERIMENT_AGENTS <= set(manager.list_agents())

    def test_base_classes_are_not_registered(self, manager):
        assert "basic" not in manager.list_agents()
        for name in EXPERIMENT_AGENTS:
            assert type(manager.get_agent(name)).__name__ != "ExperimentAgent"

    def test_metadata_structure(self, manager):
        """Each agent exposes name, description and an object parameter schema"""
        for name in EXPERIMENT_AGENTS:
            metadata = manager.get_agent(name).metadata
            assert metadata["name"] == name
            assert metadata["description"]
            assert metadata["parameters"]["type"] == "object"
            for common in ("config", "preset", "seed", "jobs", "out"):
                assert common in metadata["parameters"]["properties"]

    def test_stats(self, manager):
        stats = manager.get_stats()
        assert stats["auto_discovered"] == stats["total_agents"]
        assert stats["agent_names"] == manager.list_agents()

    def test_singleton(self):
        assert get_manager() is get_manager()


class TestAgents:
    """Agents called directly"""

    def test_synth_writes_instance(self, manager, small_config, tmp_path):
        out = tmp_path / "synth"
        summary = manager.get_agent("synth").perform(config=small_config, seed=5, out=str(out),
                                                     plot_data=True)
        data = json.loads((out / "instance.json").read_text())
        assert data["N"] == 16
        assert (out / "plot_data" / "psf.csv").exists()
        assert "N=16" in summary

    def test_run_from_synthesized_instance(self, manager, small_config, tmp_path):
        out = tmp_path / "run"
        manager.get_agent("synth").perform(config=small_config, seed=5, out=str(out))
        manager.get_agent("run").perform(config=small_config, seed=5, out=str(out),
                                         instance=str(out / "instance.json"))
        report = json.loads((out / "run_report.json").read_text())
        assert report["N"] == 16
        assert report["error_defined"]

    def test_non_converging_run_writes_failure(self, manager, tmp_path):
        config = tmp_path / "strict.json"
        config.write_text(json.dumps(dict(SMALL, solver={"max_iterations": 3})))
        out = tmp_path / "failed"
        summary = manager.get_agent("run").perform(config=str(config), seed=1, out=str(out))
        failure = json.loads((out / "run_failure.json").read_text())
        assert failure["error"] == "SolverConvergenceError"
        assert len(failure["history"]) == 3
        assert "Solver failed" in summary

    def test_noisy_needs_a_noise_level(self, manager, small_config, tmp_path):
        with pytest.raises(ConfigurationError):
            manager.get_agent("noisy").perform(config=small_config, out=str(tmp_path))

    def test_noisy_plot_data_has_true_and_recovered_spikes(self, manager, small_config, tmp_path):
        out = tmp_path / "noisy"
        manager.get_agent("noisy").perform(config=small_config, snr_sweep=[20.0, 30.0], out=str(out),
                                           plot_data=True)
        plot_data = out / "plot_data"
        for name in ("true_spikes", "recovered_spikes", "median_delay_error_vs_snr"):
            assert (plot_data / f"{name}.csv").exists()

    def test_solver_trace_from_environment(self, manager, small_config, tmp_path):
        out = tmp_path / "traced"
        with patch.dict(os.environ, {"ATOMICLIFT_SOLVER_TRACE": "1"}):
            manager.get_agent("run").perform(config=small_config, seed=2, out=str(out))
        assert (out / "run_solver_trace.csv").exists()


class TestCommandLine:
    """atomiclift_cli.main"""

    def test_run_writes_report(self, manager, small_config, tmp_path):
        from atomiclift_cli import EXIT_OK, main
        out = tmp_path / "cli_run"
        assert main(["run", "--config", small_config, "--seed", "3", "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "run_report.json").read_text())
        assert report["seed"] == 3

    def test_sweep_csv_has_comment_header(self, manager, small_config, tmp_path):
        from atomiclift_cli import EXIT_OK, main
        out = tmp_path / "cli_sweep"
        assert main(["sweep", "--config", small_config, "--trials", "2", "--out", str(out)]) == EXIT_OK
        with open(out / "sweep.csv") as f:
            lines = f.read().splitlines()
        assert lines[0].startswith("# atomiclift")
        rows = list(csv.reader(lines[1:]))
        assert rows[0][:4] == ["N", "K", "L", "trials"]
        assert rows[1][3] == "2"

    def test_missing_config_exits_2(self, manager, tmp_path):
        from atomiclift_cli import EXIT_USAGE, main
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == EXIT_USAGE

    def test_infeasible_config_exits_2(self, manager, tmp_path):
        from atomiclift_cli import EXIT_USAGE, main
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"N_values": [8], "K_values": [9]}))
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE

    def test_unwritable_output_exits_2(self, manager, small_config, tmp_path):
        from atomiclift_cli import EXIT_USAGE, main
        blocker = tmp_path / "file"
        blocker.write_text("not a directory")
        assert main(["synth", "--config", small_config, "--out", str(blocker / "sub")]) == EXIT_USAGE

    def test_array_flags(self, manager):
        from atomiclift_cli import build_parser
        args = build_parser(manager).parse_args(["noisy", "--snr-sweep", "5", "10", "--trials", "3"])
        assert args.snr_sweep == [5.0, 10.0]
        assert args.trials == 3
        assert args.plot_data is None

    def test_unknown_preset_is_a_usage_error(self, manager):
        from atomiclift_cli import build_parser
        with pytest.raises(SystemExit):
            build_parser(manager).parse_args(["run", "--preset", "fig9"])
