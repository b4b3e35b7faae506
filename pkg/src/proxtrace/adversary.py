"""The attack SDK and the attacker's server.

Devices carrying the SDK upload every frame they hear, geotagged with
their own position. The server uses that ledger to relay EphIds between
regions, to turn published seeds into location histories, and to compute
infection risk for devices that never joined the tracing system.
"""

from __future__ import annotations

import bisect
import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .beacon import Ens, Unknown, decode_beacon, encode_beacon, iter_ad_structures, ad_structure
from .config import Rect, in_rect
from .protocol import (Family, Observation, PublishedSeed, RotationPolicy, SeedLike,
                       ExposureIndex, derive_ephid, epoch_of, epochs_for_store, window_epochs)

# Alternate 16-bit service UUID used for echoed frames, so that tracing
# apps filtering on 0xFD6F never see them.
ECHO_UUID = 0xFCE0


class AttackError(Exception):
    pass


class SdkUnavailable(AttackError):
    pass


class NoDeputyInTarget(AttackError):
    pass


class WrongProtocolFamily(AttackError):
    pass


@dataclass(frozen=True)
class CaptureRecord:
    observer: int
    observer_ad_id: str
    mac: str
    kind: str
    ephid: Optional[bytes]
    rssi: float
    time: float
    geoloc: tuple[float, float]

    def to_json(self) -> dict:
        return {
            "observer": self.observer, "observer_ad_id": self.observer_ad_id, "mac": self.mac,
            "kind": self.kind, "ephid": None if self.ephid is None else self.ephid.hex(),
            "rssi": self.rssi, "time": self.time, "geoloc": list(self.geoloc),
        }

    @classmethod
    def from_json(cls, d: dict) -> "CaptureRecord":
        return cls(d["observer"], d["observer_ad_id"], d["mac"], d["kind"],
                   None if d["ephid"] is None else bytes.fromhex(d["ephid"]),
                   d["rssi"], d["time"], tuple(d["geoloc"]))


class Ledger:
    """Append-only, time-ordered log of uploaded captures."""

    def __init__(self, records: Iterable[CaptureRecord] = ()):
        self.records: list[CaptureRecord] = []
        self._times: list[float] = []
        for r in records:
            self.append(r)

    def append(self, record: CaptureRecord) -> None:
        if self._times and record.time < self._times[-1]:
            raise ValueError("ledger records must arrive in time order")
        self.records.append(record)
        self._times.append(record.time)

    def extend(self, records: Iterable[CaptureRecord]) -> None:
        for r in records:
            self.append(r)

    def between(self, t0: float, t1: float) -> list[CaptureRecord]:
        lo = bisect.bisect_left(self._times, t0)
        hi = bisect.bisect_right(self._times, t1)
        return self.records[lo:hi]

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "Ledger":
        return cls(CaptureRecord.from_json(json.loads(line)) for line in text.splitlines() if line.strip())


def kind_name(kind) -> str:
    return type(kind).__name__


def sdk_capture(device, frames: Iterable[tuple[str, bytes, float]], time: float,
                position: tuple[float, float], ledger: Ledger) -> list[CaptureRecord]:
    """Record every heard frame ``(mac, payload, rssi)``; no filtering at all."""
    if not device.has_attack_sdk:
        raise SdkUnavailable(f"device {device.id} does not carry the attack SDK")
    out = []
    for mac, payload, rssi in frames:
        kind = decode_beacon(payload)
        ephid = kind.ephid if isinstance(kind, Ens) else None
        out.append(CaptureRecord(device.id, device.persistent_ad_id.hex(), mac, kind_name(kind),
                                 ephid, rssi, time, (float(position[0]), float(position[1]))))
    ledger.extend(out)
    return out


# -- relay -----------------------------------------------------------------------

@dataclass(frozen=True)
class RelayCommand:
    target_device: int
    ephids: tuple[bytes, ...]
    deadline: float
    capture_time: float
    region: int = 0


def _fresh_captures(captures: Iterable[CaptureRecord], now: float, latency: float,
                    acceptance_window: float, region: Optional[Rect],
                    exclude: frozenset) -> list[CaptureRecord]:
    latest: dict[bytes, CaptureRecord] = {}
    for c in captures:
        if c.ephid is None or c.time > now or c.ephid in exclude:
            continue
        if region is not None and not in_rect(c.geoloc[0], c.geoloc[1], region):
            continue
        if c.time + acceptance_window <= now + latency:
            continue
        prev = latest.get(c.ephid)
        if prev is None or c.time > prev.time:
            latest[c.ephid] = c
    return sorted(latest.values(), key=lambda c: (c.time, c.ephid))


def _deputies_in(region: Rect, deputies: Mapping[int, tuple[float, float]]) -> list[int]:
    return sorted(d for d, (x, y) in deputies.items() if in_rect(x, y, region))


def plan_relay(ledger: Iterable[CaptureRecord], source_region: Rect, target_region: Rect, now: float,
               deputies: Mapping[int, tuple[float, float]], latency: float = 5.0,
               acceptance_window: float = 7200.0, exclude: Iterable[bytes] = (),
               region_index: int = 0) -> list[RelayCommand]:
    """Pick fresh ENS captures from the source region and hand them to deputies.

    ``deputies`` maps SDK device id to its current position; only those
    inside ``target_region`` are used, round-robin in id order.
    """
    picked = _fresh_captures(ledger, now, latency, acceptance_window, source_region, frozenset(exclude))
    if not picked:
        return []
    local = _deputies_in(target_region, deputies)
    if not local:
        raise NoDeputyInTarget(f"no SDK device inside {target_region}")
    return [RelayCommand(local[i % len(local)], (c.ephid,), c.time + acceptance_window, c.time, region_index)
            for i, c in enumerate(picked)]


def execute_relay(device, command: RelayCommand, time: float) -> Optional[list[bytes]]:
    """Payloads the deputy advertises, or None once the deadline has passed."""
    if not device.has_attack_sdk:
        raise SdkUnavailable(f"device {device.id} does not carry the attack SDK")
    if time >= command.deadline:
        return None
    return [encode_beacon(Ens(e)) for e in command.ephids]


def centralized_attack(mode: str, ledger: Iterable[CaptureRecord], family, *, now: float,
                       deputies: Mapping[int, tuple[float, float]], target_regions: Sequence[Rect],
                       source_region: Optional[Rect] = None, latency: float = 5.0,
                       acceptance_window: float = 900.0, exclude: Iterable[bytes] = ()) -> list[RelayCommand]:
    """Relay plans against a centralised authority.

    ``framing`` replays a victim's EphIds (captured in ``source_region``)
    next to chosen targets. ``flood`` replays every captured EphId into
    every target region so the authority sees each one reported from
    several places.
    """
    if Family(family) is not Family.CENTRALIZED:
        raise WrongProtocolFamily(f"{mode} needs a centralized system, got {Family(family).value}")
    captures = list(ledger)
    commands: list[RelayCommand] = []
    if mode == "framing":
        if source_region is None:
            raise ValueError("framing needs a source region")
        for i, region in enumerate(target_regions):
            commands += plan_relay(captures, source_region, region, now, deputies, latency,
                                   acceptance_window, exclude, i)
    elif mode == "flood":
        picked = _fresh_captures(captures, now, latency, acceptance_window, None, frozenset(exclude))
        for i, region in enumerate(target_regions):
            if not picked:
                break
            local = _deputies_in(region, deputies)
            if not local:
                raise NoDeputyInTarget(f"no SDK device inside {region}")
            commands += [RelayCommand(local[j % len(local)], (c.ephid,), c.time + acceptance_window, c.time, i)
                         for j, c in enumerate(picked)]
    else:
        raise ValueError(f"unknown centralized attack mode {mode!r}")
    return commands


# -- de-anonymisation -------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryPoint:
    time: float
    geoloc: tuple[float, float]
    ephid: bytes
    device: int


@dataclass
class LinkedTrajectory:
    victim_seed: str
    points: list[TrajectoryPoint] = field(default_factory=list)
    coverage: float = 0.0
    epochs: int = 0


def deanonymize_trajectory(ledger: Iterable[CaptureRecord], published: SeedLike,
                           policy: RotationPolicy, until: Optional[float] = None) -> LinkedTrajectory:
    """Join a published seed's EphIds against the geotagged captures."""
    if isinstance(published, PublishedSeed):
        seed, first, last = published.seed, published.first_epoch, published.last_epoch
    else:
        seed, first = published, 0
        if until is None:
            raise ValueError("a bare seed needs an 'until' time")
        last = epoch_of(until, policy)
    if until is not None:
        last = min(last, window_epochs(0.0, until, policy)[-1])
    epochs = range(first, last + 1)
    table = {derive_ephid(seed, e): e for e in epochs}
    points, seen = [], set()
    for c in ledger:
        e = table.get(c.ephid) if c.ephid is not None else None
        if e is None:
            continue
        points.append(TrajectoryPoint(c.time, c.geoloc, c.ephid, c.observer))
        seen.add(e)
    points.sort(key=lambda p: (p.time, p.device))
    coverage = len(seen) / len(epochs) if len(epochs) else 0.0
    return LinkedTrajectory(seed.id, points, coverage, len(epochs))


# -- biosurveillance --------------------------------------------------------------

@dataclass
class RiskReport:
    subject: int
    matches: list = field(default_factory=list)
    score: int = 0


def captures_as_observations(captures: Iterable[CaptureRecord]) -> list[Observation]:
    return [Observation(c.ephid, c.mac, c.rssi, c.time, c.observer) for c in captures if c.ephid is not None]


def biosurveillance_assess(subject: int, captures: Iterable[CaptureRecord], published: Sequence[SeedLike],
                           policy: RotationPolicy, max_counter: int = 1,
                           index: Optional[ExposureIndex] = None) -> RiskReport:
    """Risk score from raw SDK captures: distinct at-risk epochs, no rssi cut."""
    obs = [o for o in captures_as_observations(captures) if o.observer == subject]
    if not obs or not published:
        return RiskReport(subject)
    if index is None:
        index = ExposureIndex(published, epochs_for_store(obs, policy), policy, max_counter)
    matches = index.match(obs, rssi_threshold=float("-inf"))
    return RiskReport(subject, matches, len({(m.matched_seed, m.epoch) for m in matches}))


# -- MAC echo -----------------------------------------------------------------------

class LinkPath(str, enum.Enum):
    ECHO_ROUND_TRIP = "EchoRoundTrip"
    DIRECT_BROADCAST = "DirectBroadcast"


@dataclass(frozen=True)
class EchoLink:
    victim_ad_id: str
    victim_device: int
    mac: str
    ephid: bytes
    path: LinkPath
    time: float


def encode_echo(mac: str, ephid: bytes) -> bytes:
    uuid = ECHO_UUID.to_bytes(2, "little")
    return ad_structure(0x16, uuid + bytes.fromhex(mac.replace(":", "")) + ephid)


def decode_echo(payload: bytes) -> Optional[tuple[str, bytes]]:
    if not isinstance(decode_beacon(payload), Unknown):
        return None
    try:
        for ad_type, value in iter_ad_structures(payload):
            if ad_type == 0x16 and len(value) == 24 and int.from_bytes(value[:2], "little") == ECHO_UUID:
                mac = ":".join(f"{b:02X}" for b in value[2:8])
                return mac, value[8:24]
    except ValueError:
        return None
    return None


def echo_roundtrip(a, b, frame_a: Optional[tuple[str, bytes]], frame_b: Optional[tuple[str, bytes]],
                   time: float, path: LinkPath = LinkPath.ECHO_ROUND_TRIP) -> list[EchoLink]:
    """Links learned when devices ``a`` and ``b`` meet.

    ``frame_x`` is the ``(mac, ephid)`` device x currently advertises, or
    None if it runs no tracing app. With the round-trip path the peer
    repeats the frame under ECHO_UUID and the sender's SDK recognises its
    own MAC; with the direct path the sender advertises its advertising id
    and the peer's SDK pairs it with the sender's MAC.
    """
    links = []
    for me, peer, frame in ((a, b, frame_a), (b, a, frame_b)):
        if frame is None or not (me.has_attack_sdk and peer.has_attack_sdk):
            continue
        mac, ephid = frame
        if path is LinkPath.ECHO_ROUND_TRIP:
            heard = decode_echo(encode_echo(mac, ephid))
            if heard is None or heard[0] != mac:
                continue
        links.append(EchoLink(me.persistent_ad_id.hex(), me.id, mac, ephid, LinkPath(path), time))
    return links


# -- nymity bookkeeping -------------------------------------------------------------

class Nymity(enum.IntEnum):
    UNLINKABLE = 0
    LINKABLE = 1
    PSEUDONYMOUS = 2
    VERINYMOUS = 3


def attacker_nymity(device_ids: Iterable[int], published_owners: Iterable[int],
                    trajectories: Mapping[int, LinkedTrajectory],
                    echo_links: Iterable[EchoLink]) -> dict[int, Nymity]:
    """Where each device sits on the nymity slider from the attacker's view.

    A published seed makes EphIds linkable, a geotagged history ties the
    linked sequence to places, and an echo link ties an EphId to the
    advertising id, which is a verinym.
    """
    published_owners = set(published_owners)
    echoed = {l.victim_device for l in echo_links}
    out = {}
    for d in device_ids:
        if d in echoed:
            out[d] = Nymity.VERINYMOUS
        elif d in published_owners:
            t = trajectories.get(d)
            out[d] = Nymity.PSEUDONYMOUS if t is not None and t.points else Nymity.LINKABLE
        else:
            out[d] = Nymity.UNLINKABLE
    return out
