"""Command line entry point: ``run``, ``sweep`` and ``exfil``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import InvalidConfig, ScenarioConfig
from .exfil import DepthExceeded, findings_report, read_records, to_jsonable
from .metrics import MetricsReport, compute_metrics
from .protocol import dump_published
from .sim import SimTrace, run_scenario
from .sweep import PARAMS, parse_values, rows_to_csv, sweep
from .trace_io import write_trace


def _stamp(t: float) -> str:
    return datetime.fromtimestamp(t, timezone.utc).isoformat()


def write_run(trace: SimTrace, report: MetricsReport, out: Path) -> list[str]:
    """Write the per-run artifacts; returns their file names."""
    out.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out / "trace.jsonl")
    (out / "ledger.jsonl").write_text(trace.ledger().to_jsonl())
    (out / "published.txt").write_text(dump_published(trace.published))
    names = ["trace.jsonl", "ledger.jsonl", "published.txt"]
    if trace.registry is not None:
        (out / "registry.json").write_text(trace.registry.to_json())
        names.append("registry.json")
    (out / "report.json").write_text(report.to_json())
    names.append("report.json")
    return names


def cmd_run(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    out = Path(args.output)
    started = time.time()
    trace = run_scenario(cfg)
    report = compute_metrics(trace)
    names = write_run(trace, report, out)
    manifest = {
        "config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__,
        "started": _stamp(started), "finished": _stamp(time.time()), "outputs": names,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(report.to_json(), end="")
    return 0


def cmd_sweep(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    values = parse_values(args.values, args.param)
    rows = sweep(cfg, args.param, values, args.seeds, workers=args.workers)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sweep_{args.param}.csv").write_text(rows_to_csv(rows))
    for r in rows:
        flag = " (partial)" if r.partial else ""
        print(f"{args.param}={r.value}: detection_rate={r.mean['detection_rate']:.4f} "
              f"echo_mutual_fraction={r.mean['echo_mutual_fraction']:.4f} "
              f"geo_bind_relay_success_rate={r.mean['geo_bind_relay_success_rate']:.4f}{flag}")
        for err in r.errors:
            print(f"  error: {err}", file=sys.stderr)
    return 0


def cmd_exfil_decode(args) -> int:
    records = read_records(Path(args.file).read_text())
    json.dump([to_jsonable(r) for r in records], sys.stdout, indent=1)
    print()
    return 0


def cmd_exfil_detect(args) -> int:
    records = read_records(Path(args.file).read_text())
    markers = [m.strip() for m in Path(args.markers).read_text().splitlines() if m.strip()]
    json.dump(findings_report(records, markers), sys.stdout, indent=1)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxtrace", description="Proximity tracing attack simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write its artifacts")
    run.add_argument("config")
    run.add_argument("-o", "--output", required=True)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="sweep one parameter across seeds")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, choices=sorted(PARAMS))
    sw.add_argument("--values", required=True, help="comma separated")
    sw.add_argument("--seeds", type=int, default=5)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("-o", "--output", required=True)
    sw.set_defaults(func=cmd_sweep)

    ex = sub.add_parser("exfil", help="decode captured uploads and look for planted markers")
    exsub = ex.add_subparsers(dest="exfil_command", required=True)
    dec = exsub.add_parser("decode")
    dec.add_argument("file")
    dec.set_defaults(func=cmd_exfil_decode)
    det = exsub.add_parser("detect")
    det.add_argument("file")
    det.add_argument("--markers", required=True)
    det.set_defaults(func=cmd_exfil_detect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, DepthExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
