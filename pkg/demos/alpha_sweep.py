"""Adoption: a contact is only traced when both people run the app.

Sweeps the adoption rate over a sparse static crowd and compares the detection
rate with alpha squared.
"""

import sys
from pathlib import Path

from proxtrace.config import ScenarioConfig
from proxtrace.sweep import sweep

CONFIG = Path(__file__).parent / "configs" / "alpha_crowd.json"


def main(seeds=3):
    rows = sweep(ScenarioConfig.load(CONFIG), "alpha", [0.1, 0.25, 0.5, 0.75, 1.0], seeds=seeds)
    print(" alpha  alpha^2  detected         encounters/run")
    for r in rows:
        m, se = r.mean["detection_rate"], r.stderr["detection_rate"]
        print(f" {r.value:<6} {r.value ** 2:.4f}   {m:.4f} +- {se:.4f}  {r.mean['encounters']:.0f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
