"""Geo-binding: EphIds that only verify near the tower they were made for.

Each phone searches for an EphId whose hash with its cell tower id starts with
k zero bits. A relayed EphId then verifies in a different cell only by chance,
about once in 2^k tries.
"""

from pathlib import Path

from proxtrace.config import ScenarioConfig
from proxtrace.metrics import compute_metrics
from proxtrace.sim import run_scenario

CONFIG = Path(__file__).parent / "configs" / "geo_relay.json"


def main():
    base = ScenarioConfig.load(CONFIG)
    print(" k    expected  relayed EphIds accepted in the factory")
    for k in (None, 0, 2, 4, 6):
        m = compute_metrics(run_scenario(base.replace(**{"geo.k": k})))
        expected = 1.0 if not k else 2.0 ** -k
        print(f" {str(k):<5}{expected:<10.4f}{m.geo_bind_relay_success_rate:.4f}")


if __name__ == "__main__":
    main()
