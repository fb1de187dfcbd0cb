from agents.basic_agent import ExperimentAgent
from atomiclift.experiments import SWEEP_COLUMNS, TRIAL_COLUMNS, phase_transition_sweep


class SweepAgent(ExperimentAgent):
    mode = "sweep"

    def __init__(self):
        super().__init__(
            name="sweep",
            description="Monte Carlo phase-transition sweep over (N, K, L); writes sweep.csv "
                        "(per cell) and sweep_trials.csv (per trial, with derived seeds).",
            extra_parameters={
                "trials": {
                    "type": "integer",
                    "description": "Trials per grid cell"
                },
                "separation": {
                    "type": "string",
                    "description": "Delay separation policy",
                    "enum": ["enforced", "unconstrained"]
                },
            },
        )

    def run(self, config, store, **kwargs) -> str:
        result = phase_transition_sweep(config)
        path = self.write_csv(store, "sweep.csv", SWEEP_COLUMNS, result.rows())
        self.write_csv(store, "sweep_trials.csv", TRIAL_COLUMNS, result.trial_rows())
        self.write_json(store, "config.json", config.to_json_dict())
        if config.plot_data:
            for n in config.N_values:
                cells = [c for c in result.cells if c.N == n]
                self.write_series(store, {f"success_N{n}": ([c.K * c.L for c in cells],
                                                            [c.success_rate for c in cells])})

        failures = sum(1 for record in result.records if record.failure)
        summary = [f"Sweep: {len(result.cells)} cells x {config.trials} trials -> {path}"]
        for cell in result.cells:
            summary.append(f"  N={cell.N:<4} K={cell.K:<3} L={cell.L:<3} success {cell.success_rate:.2f}")
        if failures:
            summary.append(f"  {failures} trials failed to solve (recorded in sweep_trials.csv)")
        return "\n".join(summary)
