import json
import subprocess
import sys

import pytest

from proxtrace.cli import main
from proxtrace.exfil import PLANTED_MACS

from conftest import DATA, DEMO_CONFIGS

OUTPUTS = ["trace.jsonl", "ledger.jsonl", "published.txt", "report.json"]


def test_run_is_byte_identical(tmp_path, capsys):
    cfg = DEMO_CONFIGS / "relay_hospital_factory.json"
    assert main(["run", str(cfg), "-o", str(tmp_path / "a")]) == 0
    assert main(["run", str(cfg), "-o", str(tmp_path / "b")]) == 0
    for name in OUTPUTS:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["false_exposure_count"] == 4
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and set(OUTPUTS) <= set(manifest["outputs"])
    assert json.loads(capsys.readouterr().out.split("\n}\n")[0] + "}") == report


def test_centralized_run_writes_registry(tmp_path, capsys):
    assert main(["run", str(DEMO_CONFIGS / "central_flood.json"), "-o", str(tmp_path)]) == 0
    reg = json.loads((tmp_path / "registry.json").read_text())
    assert reg
    assert json.loads((tmp_path / "report.json").read_text())["central_false_negatives"] == 3


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"population": {"alpha": 2}}))
    assert main(["run", str(bad), "-o", str(tmp_path / "o")]) == 2
    assert "population.alpha" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json"), "-o", str(tmp_path / "o")]) != 0


def test_sweep_writes_csv(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"duration": 60, "area": [40, 40], "tick": 10, "advertising_interval": 10,
                               "population": {"count": 100}, "mobility": {"model": "static"},
                               "record_positions": False}))
    assert main(["sweep", str(cfg), "--param", "alpha", "--values", "0.5,1", "--seeds", "2",
                 "-o", str(tmp_path / "s")]) == 0
    lines = (tmp_path / "s" / "sweep_alpha.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("param,value,seeds,completed,partial")
    assert "alpha=1.0: detection_rate=1.0000" in capsys.readouterr().out


def test_exfil_decode(tmp_path, capsys):
    assert main(["exfil", "decode", str(DATA / "figure3.txt")]) == 0
    records = json.loads(capsys.readouterr().out)
    assert records[0]["all_beacon_data"][0]["beacons"][0]["major"] == "53479"


def test_exfil_detect(tmp_path, capsys):
    markers = tmp_path / "m.txt"
    markers.write_text("\n".join(PLANTED_MACS) + "\n")
    assert main(["exfil", "detect", str(DATA / "figure1.txt"), "--markers", str(markers)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert sorted(f["marker"] for f in rep["findings"]) == sorted(PLANTED_MACS)
    assert all(f["path"].startswith("obs[0].observed[") for f in rep["findings"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "proxtrace", "--version"], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr and out.stdout.strip() == "0.1.0"


def test_missing_subcommand():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code != 0
