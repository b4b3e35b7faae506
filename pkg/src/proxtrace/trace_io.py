"""Line-delimited JSON export of a trace, and the reverse.

Every line is one record tagged by ``"type"``. The file carries the full
ground truth (seeds, frame provenance) so metrics can be recomputed
offline; positions are not exported.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .adversary import EchoLink, LinkPath
from .config import ScenarioConfig
from .protocol import CentralRegistry, PublishedSeed, TrapdoorSeed
from .sim import DeviceProfile, Encounter, Frame, Receptions, SimEvent, SimTrace

TRACE_VERSION = 1


def _line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"


def iter_trace_lines(trace: SimTrace):
    yield _line({"type": "header", "version": TRACE_VERSION, "config": trace.config.to_dict()})
    for d in trace.devices:
        yield _line({
            "type": "device", "id": d.id, "app": d.has_tracing_app, "sdk": d.has_attack_sdk,
            "ad_id": d.persistent_ad_id.hex(), "mac_key": d.mac_key.hex(),
            "seed": None if d.seed is None else d.seed.secret.hex(), "verinym": d.verinym,
            "schedule": [[e.hex(), list(iv)] for e, iv in d.schedule],
        })
    for e in trace.events:
        yield _line({"type": "event", "t_ms": e.time_ms, "kind": e.kind, "agent": e.agent, "data": e.data})
    for f in trace.frames:
        yield _line({"type": "frame", "id": f.id, "sender": f.sender, "owner": f.owner, "mac": f.mac,
                     "payload": f.payload.hex(), "ephid": f.ephid.hex(), "epoch": f.epoch, "relayed": f.relayed})
    r = trace.receptions
    cols = [getattr(r, c).tolist() for c in Receptions.COLUMNS]
    for row in zip(*cols):
        yield _line({"type": "rx", **dict(zip(Receptions.COLUMNS, row))})
    for e in trace.encounters:
        yield _line({"type": "encounter", "a": e.a, "b": e.b, "start": e.start, "end": e.end,
                     "min_distance": e.min_distance})
    for p in trace.published:
        yield _line({"type": "publication", "seed": p.seed.secret.hex(), "owner": p.seed.owner_device,
                     "first_epoch": p.first_epoch, "last_epoch": p.last_epoch,
                     "published_at": p.published_at, "policy": p.policy})
    for agent, t in trace.diagnoses:
        yield _line({"type": "diagnosis", "agent": agent, "time": t})
    for reporter, owner, t in trace.notifications:
        yield _line({"type": "notification", "reporter": reporter, "owner": owner, "time": t})
    for a, b, link in trace.echo_links:
        yield _line({"type": "echo", "a": a, "b": b, "victim_ad_id": link.victim_ad_id,
                     "victim_device": link.victim_device, "mac": link.mac, "ephid": link.ephid.hex(),
                     "path": link.path.value, "time": link.time})
    if trace.registry is not None:
        yield _line({"type": "registry", "snapshot": json.loads(trace.registry.to_json()),
                     "discarded": sorted(e.hex() for e in trace.registry.discarded)})


def write_trace(trace: SimTrace, path) -> None:
    with open(path, "w") as fh:
        fh.writelines(iter_trace_lines(trace))


def read_trace(path) -> SimTrace:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("type") != "header" or header.get("version") != TRACE_VERSION:
        raise ValueError(f"{path}: not a version {TRACE_VERSION} trace file")
    trace = SimTrace(ScenarioConfig.from_dict(header["config"]))
    rx = {c: [] for c in Receptions.COLUMNS}
    for line in lines[1:]:
        rec = json.loads(line)
        kind = rec.pop("type")
        if kind == "device":
            dev = DeviceProfile(rec["id"], rec["app"], rec["sdk"], bytes.fromhex(rec["ad_id"]),
                                bytes.fromhex(rec["mac_key"]),
                                None if rec["seed"] is None else TrapdoorSeed(bytes.fromhex(rec["seed"]), rec["id"]),
                                rec["verinym"], [(bytes.fromhex(e), tuple(iv)) for e, iv in rec["schedule"]])
            trace.devices.append(dev)
        elif kind == "event":
            trace.events.append(SimEvent(rec["t_ms"], rec["kind"], rec["agent"], rec["data"]))
        elif kind == "frame":
            trace.frames.append(Frame(rec["id"], rec["sender"], rec["owner"], rec["mac"],
                                      bytes.fromhex(rec["payload"]), bytes.fromhex(rec["ephid"]),
                                      rec["epoch"], rec["relayed"]))
        elif kind == "rx":
            for c in Receptions.COLUMNS:
                rx[c].append(rec[c])
        elif kind == "encounter":
            trace.encounters.append(Encounter(**rec))
        elif kind == "publication":
            trace.published.append(PublishedSeed(TrapdoorSeed(bytes.fromhex(rec["seed"]), rec["owner"]),
                                                 rec["first_epoch"], rec["last_epoch"], rec["published_at"],
                                                 rec["policy"]))
        elif kind == "diagnosis":
            trace.diagnoses.append((rec["agent"], rec["time"]))
        elif kind == "notification":
            trace.notifications.append((rec["reporter"], rec["owner"], rec["time"]))
        elif kind == "echo":
            link = EchoLink(rec["victim_ad_id"], rec["victim_device"], rec["mac"], bytes.fromhex(rec["ephid"]),
                            LinkPath(rec["path"]), rec["time"])
            trace.echo_links.append((rec["a"], rec["b"], link))
        elif kind == "registry":
            trace.registry = CentralRegistry.from_json(json.dumps(rec["snapshot"]))
            trace.registry.discarded = {bytes.fromhex(e) for e in rec["discarded"]}
        else:
            raise ValueError(f"{path}: unknown record type {kind!r}")
    trace.receptions = Receptions(**{c: np.asarray(v) for c, v in rx.items()})
    return trace
