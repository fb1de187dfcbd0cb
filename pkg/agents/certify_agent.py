from termcolor import colored

from agents.basic_agent import ExperimentAgent
from atomiclift.experiments import CERTIFY_COLUMNS, CERTIFY_TRIAL_COLUMNS, certificate_campaign


class CertifyAgent(ExperimentAgent):
    mode = "certify"

    def __init__(self):
        super().__init__(
            name="certify",
            description="Builds and validates dual certificates over (M, K, L, delta) cells; writes "
                        "certify.csv with pass rates and Gamma deviation statistics.",
            extra_parameters={
                "trials": {
                    "type": "integer",
                    "description": "Random supports per cell"
                },
            },
        )

    def run(self, config, store, **kwargs) -> str:
        result = certificate_campaign(config)
        cells = result["cells"]
        path = self.write_csv(store, "certify.csv", CERTIFY_COLUMNS,
                              [[cell[column] for column in CERTIFY_COLUMNS] for cell in cells])
        self.write_csv(store, "certify_trials.csv", CERTIFY_TRIAL_COLUMNS,
                       [record.row() for record in result["records"]])
        if config.plot_data:
            for k in config.K_values:
                for l_dim in config.L_values:
                    for factor in config.delta_factors:
                        rows = [c for c in cells if c["K"] == k and c["L"] == l_dim and c["delta_factor"] == factor]
                        self.write_series(store, {f"pass_rate_K{k}_L{l_dim}_d{factor:g}": (
                            [c["M"] for c in rows], [c["pass_rate"] for c in rows])})

        summary = [f"Certificate campaign -> {path}"]
        for cell in cells:
            color = "green" if cell["pass_rate"] == 1.0 else ("red" if cell["pass_rate"] == 0.0 else "yellow")
            summary.append(colored(
                f"  M={cell['M']:<4} K={cell['K']:<3} L={cell['L']:<3} delta={cell['delta_factor']:g}/M "
                f"pass {cell['passed']}/{cell['trials']}", color))
        return "\n".join(summary)
