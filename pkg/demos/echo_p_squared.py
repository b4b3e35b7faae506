"""MAC echo: SDK phones rebroadcast what they hear, tying EphIds to advertising ids.

A pair of users is de-anonymized to each other only when both phones carry
the SDK, so the mutual fraction tracks p squared.
"""

from pathlib import Path

from proxtrace.config import ScenarioConfig
from proxtrace.metrics import compute_metrics
from proxtrace.sim import run_scenario

CONFIG = Path(__file__).parent / "configs" / "echo_crowd.json"


def main():
    base = ScenarioConfig.load(CONFIG)
    print(" p       p^2     mutual   encounters")
    for p in (0.25, 0.5, 0.7071, 1.0):
        m = compute_metrics(run_scenario(base.replace(**{"population.sdk_p": p})))
        print(f" {p:<7} {p * p:.4f}  {m.echo_mutual_fraction:.4f}   {m.encounters}")


if __name__ == "__main__":
    main()
