from agents.basic_agent import ExperimentAgent
from atomiclift.experiments import instance_series, synthesize


class SynthAgent(ExperimentAgent):
    mode = "synth"

    def __init__(self):
        super().__init__(
            name="synth",
            description="Synthesizes one problem instance (spikes, subspace, h, noise) and writes it "
                        "as JSON together with its time-domain renderings.",
        )

    def run(self, config, store, **kwargs) -> str:
        instance = synthesize(config)
        path = self.write_json(store, "instance.json", instance.to_dict())
        if config.plot_data:
            self.write_series(store, instance_series(instance))
        return (f"Synthesized N={instance.N} K={instance.spikes.count} L={instance.L} "
                f"(seed {config.master_seed}, eps={instance.epsilon:.4g}) -> {path}")
