import logging
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from atomiclift import __version__
from atomiclift.config import ExperimentConfig
from utils.environment import solver_trace_enabled
from utils.result_storage import ResultStore


class BasicAgent:
    def __init__(self, name, metadata):
        self.name = name
        self.metadata = metadata

    def perform(self, **kwargs):
        pass


# Parameters shared by every experiment subcommand
COMMON_PARAMETERS = {
    "config": {
        "type": "string",
        "description": "Path to a JSON workflow file (see workflows/)"
    },
    "preset": {
        "type": "string",
        "description": "Named preset applied before the workflow file",
        "enum": ["fig1", "fig2", "fig4"]
    },
    "seed": {
        "type": "integer",
        "description": "Master seed; for 'run' and 'synth' the instance seed itself"
    },
    "jobs": {
        "type": "integer",
        "description": "Worker processes for independent trials"
    },
    "out": {
        "type": "string",
        "description": "Output directory (default: ATOMICLIFT_OUTPUT_DIR or results/)"
    },
    "plot_data": {
        "type": "boolean",
        "description": "Also write plot-ready (x, y) series under plot_data/"
    },
}


class ExperimentAgent(BasicAgent):
    """
    Base for the experiment subcommands.

    Subclasses set `mode`, extend the parameter schema and implement `run(config, store, **kwargs)`.
    perform() raises ConfigurationError for bad settings and OSError when results
    cannot be written; everything else is reported in the returned summary.
    """

    mode = "run"

    def __init__(self, name: str, description: str, extra_parameters: Optional[Dict[str, Any]] = None):
        metadata = {
            "name": name,
            "description": description,
            "parameters": {
                "type": "object",
                "properties": dict(COMMON_PARAMETERS, **(extra_parameters or {})),
                "required": []
            }
        }
        super().__init__(name=name, metadata=metadata)

    def load_config(self, config: Optional[str] = None, preset: Optional[str] = None,
                    seed: Optional[int] = None, jobs: Optional[int] = None, out: Optional[str] = None,
                    plot_data: Optional[bool] = None, **overrides) -> ExperimentConfig:
        values = {
            "mode": self.mode,
            "preset": preset,
            "master_seed": seed,
            "jobs": jobs,
            "output_dir": out,
            "plot_data": plot_data or None,
        }
        values.update(overrides)
        return ExperimentConfig.load(config, values)

    def open_store(self, config: ExperimentConfig) -> ResultStore:
        store = ResultStore(config.resolved_output_dir())
        if solver_trace_enabled():
            config.solver.trace_path = store.path(f"{self.name}_solver_trace.csv")
        return store

    @staticmethod
    def csv_header() -> str:
        return f"atomiclift {__version__} generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}"

    @staticmethod
    def require(written: bool, file_name: str) -> None:
        if not written:
            raise OSError(f"Could not write {file_name}")

    def write_json(self, store: ResultStore, file_name: str, data: Dict[str, Any]) -> str:
        self.require(store.write_json(file_name, data), file_name)
        return store.path(file_name)

    def write_csv(self, store: ResultStore, file_name: str, columns, rows) -> str:
        self.require(store.write_csv(file_name, columns, rows, header=self.csv_header()), file_name)
        return store.path(file_name)

    def write_series(self, store: ResultStore, series: Dict[str, Any], prefix: str = "") -> None:
        for name, (x, y) in series.items():
            file_name = f"{prefix}{name}"
            self.require(store.write_series(file_name, x, y), f"plot_data/{file_name}.csv")

    def perform(self, **kwargs) -> str:
        options = {k: v for k, v in kwargs.items() if k not in self.run_parameters()}
        run_options = {k: v for k, v in kwargs.items() if k in self.run_parameters()}
        config = self.load_config(**options)
        store = self.open_store(config)
        logging.info(f"Running '{self.name}' into {store.base_path}")
        return self.run(config, store, **run_options)

    def run_parameters(self) -> tuple:
        """Agent parameters consumed by run() rather than by the configuration."""
        return ()

    def run(self, config: ExperimentConfig, store: ResultStore, **kwargs) -> str:
        raise NotImplementedError
