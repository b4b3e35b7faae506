"""Biosurveillance: the SDK scores infection risk for someone who never installed the app.

Agent 1 declined the tracing app but carries an SDK. It sits next to agent 0,
who is later diagnosed. The honest protocol keeps nothing for agent 1, yet the
SDK's raw captures match the published seed just as well.
"""

from pathlib import Path

from proxtrace.adversary import biosurveillance_assess, deanonymize_trajectory
from proxtrace.config import ScenarioConfig
from proxtrace.metrics import exposure_matches
from proxtrace.sim import run_scenario

CONFIG = Path(__file__).parent / "configs" / "biosurveillance.json"


def main():
    cfg = ScenarioConfig.load(CONFIG)
    trace = run_scenario(cfg)
    print(f"agent 1 honest store: {len(trace.store(1))} observations, "
          f"app matches: {len(exposure_matches(trace).get(1, []))}")
    risk = biosurveillance_assess(1, trace.captures(1), trace.published, cfg.policy)
    print(f"agent 1 SDK captures: {len(trace.captures(1))}, risk score {risk.score} at-risk epochs")

    # The same ledger doubles as a location history of the diagnosed person.
    traj = deanonymize_trajectory(trace.ledger().records, trace.published[0], cfg.policy)
    print(f"diagnosed agent linked across {traj.coverage:.0%} of {traj.epochs} epochs; "
          f"first sighting at t={traj.points[0].time:.0f}s near {traj.points[0].geoloc}")


if __name__ == "__main__":
    main()
