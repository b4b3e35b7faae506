"""Attack and utility metrics computed from a finished trace."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .adversary import biosurveillance_assess, deanonymize_trajectory
from .protocol import ExposureIndex, ExposureMatch, Family, window_epochs
from .sim import SimTrace


@dataclass
class MetricsReport:
    detection_rate: float = 0.0
    false_exposure_count: int = 0
    deanon_coverage: float = 0.0
    biosurv_hit_count: int = 0
    echo_mutual_fraction: float = 0.0
    central_false_negatives: int = 0
    geo_bind_relay_success_rate: float = 0.0
    encounters: int = 0
    app_encounters: int = 0
    detected_encounters: int = 0
    exposed_pairs: int = 0
    relay_receptions: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def max_counter(trace: SimTrace) -> int:
    k = trace.config.geo.k
    return 1 if k is None else 2 ** (k + 8)


def exposure_index(trace: SimTrace) -> Optional[ExposureIndex]:
    if not trace.published:
        return None
    epochs = window_epochs(0.0, trace.config.duration, trace.config.policy)
    return ExposureIndex(trace.published, epochs, trace.config.policy, max_counter(trace))


def exposure_matches(trace: SimTrace) -> dict[int, list[tuple[int, ExposureMatch]]]:
    """Honest-app matches per observer as ``(reception row, match)`` pairs."""
    index = exposure_index(trace)
    out: dict[int, list] = {}
    if index is None:
        return out
    threshold = trace.config.protocol.rssi_threshold
    for dev in trace.devices:
        if not dev.has_tracing_app:
            continue
        hits = []
        for row in trace.honest_rows(dev.id):
            obs = trace.observation(int(row))
            m = index.match([obs], threshold)
            if m:
                hits.append((int(row), m[0]))
        if hits:
            out[dev.id] = hits
    return out


def _direct_heard(trace: SimTrace) -> set[tuple[int, int]]:
    r = trace.receptions
    if not len(r):
        return set()
    relayed = np.array([f.relayed for f in trace.frames], dtype=bool)
    owners = np.array([f.owner for f in trace.frames], dtype=np.int64)
    rows = np.flatnonzero(r.accepted & ~relayed[r.frame])
    return set(zip(r.receiver[rows].tolist(), owners[r.frame[rows]].tolist()))


def detected_mask(trace: SimTrace) -> np.ndarray:
    """Per encounter: did both phones record each other during it?"""
    encs = trace.encounters
    r = trace.receptions
    if not encs or not len(r):
        return np.zeros(len(encs), dtype=bool)
    n = max(len(trace.devices), 1)
    relayed = np.array([f.relayed for f in trace.frames], dtype=bool)
    owners = np.array([f.owner for f in trace.frames], dtype=np.int64)
    keep = r.accepted & ~relayed[r.frame] & (r.rssi >= trace.config.protocol.rssi_threshold)
    span = int(trace.config.duration * 1000) + 1
    key = (r.receiver[keep] * n + owners[r.frame[keep]]) * span + r.time_ms[keep]
    key.sort()
    a = np.array([e.a for e in encs], dtype=np.int64)
    b = np.array([e.b for e in encs], dtype=np.int64)
    s = np.array([round(e.start * 1000) for e in encs], dtype=np.int64)
    t = np.array([round(e.end * 1000) for e in encs], dtype=np.int64)

    def heard(rx, tx):
        lo = np.searchsorted(key, (rx * n + tx) * span + s, "left")
        hi = np.searchsorted(key, (rx * n + tx) * span + t, "left")
        return hi > lo

    return heard(a, b) & heard(b, a)


def compute_metrics(trace: SimTrace) -> MetricsReport:
    cfg = trace.config
    policy = cfg.policy
    rep = MetricsReport()
    devs = trace.devices
    encs = trace.encounters
    rep.encounters = len(encs)
    if not devs:
        return rep
    app = np.array([d.has_tracing_app for d in devs], dtype=bool)
    both = np.array([app[e.a] and app[e.b] for e in encs], dtype=bool)
    detected = detected_mask(trace)
    rep.app_encounters = int(both.sum())
    rep.detected_encounters = int((detected & both).sum())
    rep.detection_rate = rep.detected_encounters / rep.encounters if rep.encounters else 0.0

    direct = _direct_heard(trace)
    owner_of_seed = {p.seed.id: p.seed.owner_device for p in trace.published}
    exposed, false_pairs = set(), set()
    for observer, hits in exposure_matches(trace).items():
        for _row, m in hits:
            pair = (observer, owner_of_seed[m.matched_seed])
            exposed.add(pair)
            if pair not in direct:
                false_pairs.add(pair)
    if trace.registry is not None:
        phones = trace.agent_of_phone()
        for c in trace.registry.contacts:
            pair = (phones[c.reporter], phones[c.owner])
            exposed.add(pair)
            if pair not in direct:
                false_pairs.add(pair)
    rep.exposed_pairs = len(exposed)
    rep.false_exposure_count = len(false_pairs)

    ledger = None
    if trace.published:
        ledger = trace.ledger()
        covs = [deanonymize_trajectory(ledger, p, policy, until=cfg.duration).coverage for p in trace.published]
        rep.deanon_coverage = float(np.mean(covs))
        index = exposure_index(trace)
        hits = 0
        for d in devs:
            if d.has_attack_sdk:
                risk = biosurveillance_assess(d.id, trace.captures(d.id), trace.published, policy,
                                              index=index)
                hits += risk.score > 0
        rep.biosurv_hit_count = int(hits)

    if cfg.attack.echo and rep.app_encounters:
        linked: dict[tuple[int, int], set[int]] = {}
        for a, b, link in trace.echo_links:
            linked.setdefault((a, b), set()).add(link.victim_device)
        mutual = sum(1 for e in encs if app[e.a] and app[e.b] and linked.get((e.a, e.b), set()) >= {e.a, e.b})
        rep.echo_mutual_fraction = mutual / rep.app_encounters

    if Family(cfg.protocol.family) is Family.CENTRALIZED and trace.diagnoses:
        rep.central_false_negatives = central_false_negatives(trace)

    rep.relay_receptions, rep.geo_bind_relay_success_rate = relay_acceptance(trace)
    return rep


def central_false_negatives(trace: SimTrace) -> int:
    """Genuine encounters a diagnosed user reported but whose owner was never notified."""
    r = trace.receptions
    notified = {(rep, own) for rep, own, _ in trace.notifications}
    diagnosed = {a: t for a, t in trace.diagnoses if trace.devices[a].has_tracing_app}
    relayed = np.array([f.relayed for f in trace.frames], dtype=bool)
    owners = np.array([f.owner for f in trace.frames], dtype=np.int64)
    missed = 0
    for e in trace.encounters:
        for rep, own in ((e.a, e.b), (e.b, e.a)):
            if rep not in diagnosed or not trace.devices[own].has_tracing_app:
                continue
            rows = trace.honest_rows(rep)
            t_ms = r.time_ms[rows]
            fr = r.frame[rows]
            reported = ((owners[fr] == own) & ~relayed[fr] & (t_ms >= e.start * 1000)
                        & (t_ms < e.end * 1000) & (t_ms <= diagnosed[rep] * 1000))
            if reported.any() and (rep, own) not in notified:
                missed += 1
    return missed


def relay_acceptance(trace: SimTrace) -> tuple[int, float]:
    """Relayed frames heard by app phones: count and share passing the receiver's checks.

    Acceptance is judged once per distinct (EphId, receiving tower).
    """
    r = trace.receptions
    if not len(r) or not any(f.relayed for f in trace.frames):
        return 0, 0.0
    relayed = np.array([f.relayed for f in trace.frames], dtype=bool)
    app = np.array([d.has_tracing_app for d in trace.devices], dtype=bool)
    rows = np.flatnonzero(relayed[r.frame] & app[r.receiver])
    if not len(rows):
        return 0, 0.0
    size = trace.config.geo.tower_size
    ncols = max(1, int(np.ceil(trace.config.area[0] / size)))
    towers = (r.x[rows] // size).astype(np.int64) + (r.y[rows] // size).astype(np.int64) * ncols
    verdict: dict[tuple[bytes, int], bool] = {}
    for row, tower in zip(rows, towers):
        key = (trace.frames[int(r.frame[row])].ephid, int(tower))
        verdict[key] = verdict.get(key, False) or bool(r.accepted[row])
    return len(rows), sum(verdict.values()) / len(verdict)
