"""EphId derivation, rotation, exposure matching and the central registry.

Decentralised devices derive each epoch's EphId from a private 32-byte seed
with HMAC-SHA256; publishing the seed makes the whole sequence linkable.
Centralised devices receive a schedule of random EphIds from an authority
that keeps the EphId -> phone number mapping.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

EPHID_LEN = 16
SEED_LEN = 32


class Family(str, enum.Enum):
    DECENTRALIZED = "decentralized"
    CENTRALIZED = "centralized"


class ProtocolError(Exception):
    pass


class AlreadyRegistered(ProtocolError):
    pass


class UnknownReporter(ProtocolError):
    pass


class Exhausted(ProtocolError):
    pass


@dataclass(frozen=True)
class TrapdoorSeed:
    secret: bytes
    owner_device: Optional[int] = None

    def __post_init__(self):
        if len(self.secret) != SEED_LEN:
            raise ValueError(f"seed secret must be {SEED_LEN} bytes")

    @property
    def id(self) -> str:
        return hashlib.sha256(b"seed-id" + self.secret).hexdigest()[:16]

    def __repr__(self):
        return f"TrapdoorSeed(id={self.id}, owner_device={self.owner_device})"


@dataclass(frozen=True)
class RotationPolicy:
    rotation_period: float
    acceptance_window: float
    family: Family = Family.DECENTRALIZED
    name: str = "custom"

    def __post_init__(self):
        if self.rotation_period <= 0:
            raise ValueError("rotation_period must be positive")
        if self.acceptance_window < self.rotation_period:
            raise ValueError("acceptance_window must be >= rotation_period")
        object.__setattr__(self, "family", Family(self.family))


# SwissCovid rotates every 10 minutes; GAEN accepts an EphId for two hours.
GAEN = RotationPolicy(600, 7200, Family.DECENTRALIZED, "gaen")
# Alberta TraceTogether switches EphIds every 15 minutes.
ABTRACE = RotationPolicy(900, 900, Family.CENTRALIZED, "abtrace")
POLICIES = {p.name: p for p in (GAEN, ABTRACE)}


@dataclass(frozen=True)
class Observation:
    ephid: bytes
    mac: str
    rssi: float
    time: float
    observer: int


@dataclass(frozen=True)
class PublishedSeed:
    """A seed released by a health authority with the epochs it covers."""
    seed: TrapdoorSeed
    first_epoch: int
    last_epoch: int
    published_at: float = 0.0
    policy: str = "gaen"


@dataclass(frozen=True)
class ExposureMatch:
    observation: Observation
    matched_seed: str
    epoch: int
    epoch_delta: float


def derive_ephid(seed: TrapdoorSeed, epoch: int, counter: int = 0) -> bytes:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    msg = b"EPHID" + epoch.to_bytes(8, "big") + counter.to_bytes(4, "big")
    return hmac.new(seed.secret, msg, hashlib.sha256).digest()[:EPHID_LEN]


def epoch_of(time: float, policy: RotationPolicy) -> int:
    if time < 0:
        raise ValueError("time must be non-negative")
    return int(math.floor(time / policy.rotation_period))


def nominal_interval(epoch: int, policy: RotationPolicy) -> tuple[float, float]:
    return epoch * policy.rotation_period, (epoch + 1) * policy.rotation_period


def window_delta(time: float, epoch: int, policy: RotationPolicy) -> float:
    """Signed seconds between ``time`` and the epoch's nominal interval (0 inside)."""
    start, end = nominal_interval(epoch, policy)
    if time < start:
        return time - start
    if time >= end:
        return time - end
    return 0.0


def within_window(time: float, epoch: int, policy: RotationPolicy) -> bool:
    return abs(window_delta(time, epoch, policy)) <= policy.acceptance_window


def window_epochs(t0: float, t1: float, policy: RotationPolicy) -> range:
    """Epochs intersecting ``[t0, t1)``; a zero-length span is the instant ``t0``."""
    if t1 < t0:
        raise ValueError("t0 must not exceed t1")
    first = epoch_of(t0, policy)
    last = max(first, math.ceil(t1 / policy.rotation_period) - 1)
    return range(first, last + 1)


def regenerate_window(seed: TrapdoorSeed, t0: float, t1: float,
                      policy: RotationPolicy) -> list[tuple[bytes, int]]:
    return [(derive_ephid(seed, e), e) for e in window_epochs(t0, t1, policy)]


SeedLike = Union[TrapdoorSeed, PublishedSeed]


class ExposureIndex:
    """Reverse table EphId -> (seed id, epoch) over a range of epochs.

    ``max_counter`` > 1 covers geo-bound EphIds, which are drawn from a
    counter-extended candidate list per epoch.
    """

    def __init__(self, published: Iterable[SeedLike], epochs: range,
                 policy: RotationPolicy, max_counter: int = 1):
        self.policy = policy
        self.table: dict[bytes, tuple[str, int]] = {}
        for item in published:
            if isinstance(item, PublishedSeed):
                seed = item.seed
                span = range(max(epochs.start, item.first_epoch), min(epochs.stop, item.last_epoch + 1))
            else:
                seed, span = item, epochs
            for e in span:
                for c in range(max_counter):
                    self.table.setdefault(derive_ephid(seed, e, c), (seed.id, e))

    def match(self, store: Iterable[Observation], rssi_threshold: float = -70.0) -> list[ExposureMatch]:
        out = []
        for obs in store:
            hit = self.table.get(obs.ephid)
            if hit is None or obs.rssi < rssi_threshold:
                continue
            seed_id, e = hit
            delta = window_delta(obs.time, e, self.policy)
            if abs(delta) <= self.policy.acceptance_window:
                out.append(ExposureMatch(obs, seed_id, e, delta))
        return out


def epochs_for_store(store: Sequence[Observation], policy: RotationPolicy) -> range:
    if not store:
        return range(0)
    lo = min(o.time for o in store) - policy.acceptance_window
    hi = max(o.time for o in store) + policy.acceptance_window
    return range(epoch_of(max(lo, 0.0), policy), epoch_of(hi, policy) + 1)


def match_exposures(store: Sequence[Observation], published: Sequence[SeedLike],
                    policy: RotationPolicy, rssi_threshold: float = -70.0,
                    max_counter: int = 1) -> list[ExposureMatch]:
    store = list(store)
    index = ExposureIndex(published, epochs_for_store(store, policy), policy, max_counter)
    return index.match(store, rssi_threshold)


# -- published seed exchange ---------------------------------------------------

def dump_published(published: Iterable[PublishedSeed]) -> str:
    lines = []
    for p in published:
        owner = "-" if p.seed.owner_device is None else str(p.seed.owner_device)
        lines.append(f"{p.seed.secret.hex()} {p.first_epoch}-{p.last_epoch} {p.policy} {p.published_at!r} {owner}\n")
    return "".join(lines)


def load_published(text: str) -> list[PublishedSeed]:
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        secret, span, policy, *rest = line.split()
        first, last = span.split("-")
        published_at = float(rest[0]) if rest else 0.0
        owner = int(rest[1]) if len(rest) > 1 and rest[1] != "-" else None
        out.append(PublishedSeed(TrapdoorSeed(bytes.fromhex(secret), owner), int(first), int(last),
                                 published_at, policy))
    return out


# -- centralised registry ------------------------------------------------------

@dataclass
class Registration:
    device_id: Optional[int]
    access_code: str
    schedule: list[tuple[bytes, tuple[float, float]]] = field(default_factory=list)


@dataclass(frozen=True)
class ContactRecord:
    reporter: str
    owner: str
    ephid: bytes
    time: float


class CentralRegistry:
    """Authority state. Mutating calls are expected from a single writer."""

    VERSION = 1

    def __init__(self, seed: int = 0, policy: RotationPolicy = ABTRACE):
        self.policy = policy
        self._rng = random.Random(seed)
        self.users: dict[str, Registration] = {}
        self.owner_of: dict[bytes, str] = {}
        self.interval_of: dict[bytes, tuple[float, float]] = {}
        self.contacts: list[ContactRecord] = []
        self.drop_count = 0
        self.discarded: set[bytes] = set()

    def random_ephid(self) -> bytes:
        while True:
            candidate = self._rng.randbytes(EPHID_LEN)
            if candidate not in self.owner_of:
                return candidate

    def to_json(self) -> str:
        doc = {
            "version": self.VERSION,
            "policy": {"rotation_period": self.policy.rotation_period,
                       "acceptance_window": self.policy.acceptance_window,
                       "name": self.policy.name},
            "users": {
                phone: {
                    "device_id": reg.device_id,
                    "access_code": reg.access_code,
                    "schedule": [[e.hex(), list(iv)] for e, iv in reg.schedule],
                }
                for phone, reg in sorted(self.users.items())
            },
            "drop_count": self.drop_count,
            "contacts": [[c.reporter, c.owner, c.ephid.hex(), c.time] for c in self.contacts],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CentralRegistry":
        doc = json.loads(text)
        if doc.get("version") != cls.VERSION:
            raise ValueError(f"unsupported registry snapshot version {doc.get('version')}")
        p = doc["policy"]
        reg = cls(policy=RotationPolicy(p["rotation_period"], p["acceptance_window"],
                                        Family.CENTRALIZED, p["name"]))
        for phone, u in doc["users"].items():
            schedule = [(bytes.fromhex(e), tuple(iv)) for e, iv in u["schedule"]]
            reg.users[phone] = Registration(u["device_id"], u["access_code"], schedule)
            for e, iv in schedule:
                reg.owner_of[e] = phone
                reg.interval_of[e] = iv
        reg.drop_count = doc["drop_count"]
        reg.contacts = [ContactRecord(r, o, bytes.fromhex(e), t) for r, o, e, t in doc["contacts"]]
        return reg


def central_issue(registry: CentralRegistry, phone: str, horizon: float,
                  policy: RotationPolicy = ABTRACE, now: float = 0.0,
                  device_id: Optional[int] = None) -> list[tuple[bytes, tuple[float, float]]]:
    if Family(policy.family) is not Family.CENTRALIZED:
        raise ProtocolError("central_issue needs a centralized policy")
    if phone in registry.users:
        raise AlreadyRegistered(phone)
    code = f"{registry._rng.randrange(10**6):06d}"
    n = math.ceil(horizon / policy.rotation_period) if horizon > 0 else 0
    schedule = []
    for i in range(n):
        start = now + i * policy.rotation_period
        ephid = registry.random_ephid()
        registry.owner_of[ephid] = phone
        registry.interval_of[ephid] = (start, start + policy.rotation_period)
        schedule.append((ephid, (start, start + policy.rotation_period)))
    registry.users[phone] = Registration(device_id, code, schedule)
    return schedule


def _resolve(registry: CentralRegistry, reporter: str, observations: Iterable[Observation],
             skip: frozenset = frozenset()) -> list[str]:
    window = registry.policy.acceptance_window
    notify = []
    for obs in observations:
        owner = registry.owner_of.get(obs.ephid)
        if owner is None or obs.ephid in skip:
            registry.drop_count += 1
            continue
        start, end = registry.interval_of[obs.ephid]
        if not start - window <= obs.time <= end + window:
            registry.drop_count += 1
            continue
        if owner == reporter:
            continue
        registry.contacts.append(ContactRecord(reporter, owner, obs.ephid, obs.time))
        if owner not in notify:
            notify.append(owner)
    return notify


def central_process_report(registry: CentralRegistry, reporter: str,
                           observations: Iterable[Observation]) -> list[str]:
    """De-anonymise a diagnosed user's upload; returns phone numbers to notify."""
    if reporter not in registry.users:
        raise UnknownReporter(reporter)
    return _resolve(registry, reporter, observations)


def central_process_batch(registry: CentralRegistry,
                          reports: Sequence[tuple[str, Sequence[Observation], Sequence[int]]],
                          discard_multi_region: bool = True) -> dict[str, list[str]]:
    """Process several uploads at once with an optional relay filter.

    Each report is ``(reporter, observations, regions)`` where ``regions[i]``
    is the coarse region (as reconstructed by manual tracing) of
    observation ``i``. With the filter on, an EphId reported from more than
    one region is treated as relayed and ignored.
    """
    seen: dict[bytes, set[int]] = {}
    for reporter, observations, regions in reports:
        if reporter not in registry.users:
            raise UnknownReporter(reporter)
        for obs, region in zip(observations, regions):
            seen.setdefault(obs.ephid, set()).add(region)
    skip = frozenset(e for e, r in seen.items() if len(r) > 1) if discard_multi_region else frozenset()
    registry.discarded |= skip
    return {reporter: _resolve(registry, reporter, observations, skip)
            for reporter, observations, _ in reports}


# -- geo-binding -----------------------------------------------------------------

@dataclass(frozen=True)
class GeoBinding:
    k: int
    tower_id: int

    def __post_init__(self):
        if not 0 <= self.k <= 32:
            raise ValueError("k must lie in [0, 32]")


def leading_zero_bits(digest: bytes) -> int:
    bits = 0
    for byte in digest:
        if byte == 0:
            bits += 8
            continue
        return bits + 8 - byte.bit_length()
    return bits


def geo_hash(ephid: bytes, tower_id: int) -> bytes:
    return hashlib.sha256(ephid + tower_id.to_bytes(8, "big")).digest()


def geo_verify(ephid: bytes, binding: GeoBinding) -> bool:
    return binding.k == 0 or leading_zero_bits(geo_hash(ephid, binding.tower_id)) >= binding.k


def geo_select_ephid(seed: TrapdoorSeed, epoch: int, binding: GeoBinding,
                     max_trials: Optional[int] = None) -> tuple[bytes, int]:
    """Walk the counter-extended candidates until one verifies at the tower.

    Gives up after ``max_trials`` (default 2**(k+8)).
    """
    limit = 2 ** (binding.k + 8) if max_trials is None else max_trials
    for trial in range(limit):
        candidate = derive_ephid(seed, epoch, trial)
        if geo_verify(candidate, binding):
            return candidate, trial + 1
    raise Exhausted(f"no EphId for tower {binding.tower_id} at k={binding.k}")
