"""Exfiltration: find planted beacons inside captured SDK uploads.

A test phone broadcasts four beacons with recognisable MACs. Any upload that
carries those MACs, however it is wrapped in gzip and base64, proves the SDK
ships nearby beacon data home.
"""

import json
from pathlib import Path

from proxtrace.beacon import decode_beacon
from proxtrace.exfil import (PLANTED_MACS, decode_layers, detect_planted, encode_layers, make_injected_scan)

FIGURES = Path(__file__).parent.parent / "tests" / "data"


def main():
    print("injected scan:")
    for entry in make_injected_scan():
        print(f"  {entry.mac}  {type(decode_beacon(entry.payload)).__name__:<12} {entry.payload.hex()}")

    upload = decode_layers((FIGURES / "figure1.txt").read_bytes())
    wrapped = encode_layers(upload, ["gzip", "base64", "gzip", "base64"])
    print(f"\nupload wrapped four times: {len(wrapped)} bytes, starts {wrapped[:24]!r}")
    for f in detect_planted(decode_layers(wrapped), PLANTED_MACS):
        print(f"  found {f.marker} at {f.path_text}: {json.dumps(f.record)}")


if __name__ == "__main__":
    main()
