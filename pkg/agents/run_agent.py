import json
import logging

from termcolor import colored

from agents.basic_agent import ExperimentAgent
from atomiclift.errors import ConfigurationError, SolverConvergenceError
from atomiclift.experiments import run_instance, run_report, run_series
from atomiclift.signal_model import ProblemInstance


class RunAgent(ExperimentAgent):
    """
    Full pipeline on one instance: generate, solve, localize, score.

    A solver that fails to converge is not a CLI error: its residuals and
    history are written to run_failure.json and the summary says so.
    """

    mode = "run"

    def __init__(self):
        super().__init__(
            name="run",
            description="Runs the full pipeline on one instance and writes run_report.json.",
            extra_parameters={
                "instance": {
                    "type": "string",
                    "description": "Solve an instance JSON written by 'synth' instead of generating one"
                },
                "dump_dual": {
                    "type": "boolean",
                    "description": "Include the dual polynomial norm profile in the report"
                },
            },
        )

    def run_parameters(self) -> tuple:
        return ("instance",)

    def _read_instance(self, path: str) -> ProblemInstance:
        try:
            with open(path, "r") as f:
                return ProblemInstance.from_json(f.read())
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise ConfigurationError(f"Cannot read instance {path}: {e}") from e

    def run(self, config, store, instance=None, **kwargs) -> str:
        problem = self._read_instance(instance) if instance else None
        try:
            outcome = run_instance(config, instance=problem)
        except SolverConvergenceError as e:
            logging.error(f"Solver did not converge: {e}")
            self.write_json(store, "run_failure.json", {
                "seed": config.master_seed,
                "error": type(e).__name__,
                "message": str(e),
                "residuals": e.residuals,
                "history": [list(row) for row in (e.history or [])],
            })
            return colored(f"Solver failed ({type(e).__name__}): {e}", "red")

        report = run_report(outcome, config)
        path = self.write_json(store, "run_report.json", report)
        if config.plot_data:
            self.write_series(store, run_series(outcome, config))

        if report["normalized_error"] is None:
            status = colored("error undefined (empty spike train)", "yellow")
        elif report["success"]:
            status = colored(f"success, normalized error {report['normalized_error']:.2e}", "green")
        else:
            status = colored(f"failure, normalized error {report['normalized_error']:.2e}", "red")
        lines = [f"Run seed {outcome.seed}: {status}",
                 f"  peaks: {outcome.localization.delays.size}, solver iterations: {outcome.solution.iterations}"]
        if outcome.match is not None:
            lines.append(f"  matched {outcome.match.matched}, missed {len(outcome.match.misses)}, "
                         f"spurious {len(outcome.match.false_alarms)}")
        for warning in outcome.solution.warnings + outcome.localization.warnings:
            lines.append(colored(f"  warning: {warning}", "yellow"))
        lines.append(f"  report: {path}")
        return "\n".join(lines)
