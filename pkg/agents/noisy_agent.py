from agents.basic_agent import ExperimentAgent
from atomiclift.errors import ConfigurationError
from atomiclift.experiments import (NOISY_COLUMNS, NOISY_TRIAL_COLUMNS, noisy_example_series,
                                    noisy_localization_experiment)


class NoisyAgent(ExperimentAgent):
    mode = "noisy"

    def __init__(self):
        super().__init__(
            name="noisy",
            description="Noisy localization experiment at one SNR or over an SNR sweep; writes "
                        "noisy.csv (per SNR point) and noisy_trials.csv.",
            extra_parameters={
                "trials": {
                    "type": "integer",
                    "description": "Trials per SNR point"
                },
                "snr_db": {
                    "type": "number",
                    "description": "Signal-to-noise ratio in dB"
                },
                "snr_sweep": {
                    "type": "array",
                    "items": {"type": "number"},
                    "description": "List of SNR points in dB"
                },
            },
        )

    def run(self, config, store, **kwargs) -> str:
        if config.sigma is None and config.snr_db is None and not config.snr_sweep:
            raise ConfigurationError("The noisy experiment needs sigma, snr_db or snr_sweep")
        result = noisy_localization_experiment(config)
        points = result["points"]
        path = self.write_csv(store, "noisy.csv", NOISY_COLUMNS,
                              [[point[column] for column in NOISY_COLUMNS] for point in points])
        self.write_csv(store, "noisy_trials.csv", NOISY_TRIAL_COLUMNS,
                       [record.row() for record in result["records"]])
        if config.plot_data:
            self.write_series(store, noisy_example_series(config))
        if config.plot_data and config.snr_sweep:
            self.write_series(store, {"median_delay_error_vs_snr": (
                [point["snr_db"] for point in points], [point["median_delay_error"] for point in points])})

        summary = [f"Noisy localization -> {path}"]
        for point in points:
            label = f"{point['snr_db']} dB" if point["snr_db"] is not None else f"sigma={config.sigma}"
            summary.append(f"  {label}: all {point['K']} spikes matched in {point['all_matched']}/"
                           f"{point['trials']} trials, mean spurious {point['mean_false_alarms']:.2f}")
        return "\n".join(summary)
