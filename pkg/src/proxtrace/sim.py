"""Deterministic discrete-event world.

Time is kept in integer milliseconds. Events sharing a timestamp run in
kind order (Move, Broadcast, RelayBroadcast, Echo, SdkUpload, Diagnose)
and then by agent id; periodic Move/Broadcast events act on all agents
at once in id order, which is the same thing.

Receptions are stored column-wise because a run easily produces millions
of them; ``SimTrace.store`` and ``SimTrace.ledger`` materialise the
per-device views.
"""

from __future__ import annotations

import hashlib
import heapq
import hmac
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import adversary
from .adversary import CaptureRecord, EchoLink, Ledger, LinkPath, RelayCommand
from .beacon import Ens, encode_beacon
from .config import ScenarioConfig, validate
from .protocol import (CentralRegistry, Family, GeoBinding, Observation, PublishedSeed, TrapdoorSeed,
                       central_issue, central_process_batch, central_process_report, derive_ephid,
                       geo_select_ephid, geo_verify)

KIND_RANK = {"Move": 0, "Broadcast": 1, "RelayBroadcast": 2, "Echo": 3, "SdkUpload": 4, "Diagnose": 5}


@dataclass
class DeviceProfile:
    id: int
    has_tracing_app: bool
    has_attack_sdk: bool
    persistent_ad_id: bytes
    mac_key: bytes
    seed: Optional[TrapdoorSeed] = None
    verinym: Optional[str] = None
    schedule: list = field(default_factory=list)

    def mac_for_epoch(self, epoch: int) -> str:
        raw = bytearray(hmac.new(self.mac_key, b"MAC" + epoch.to_bytes(8, "big"), hashlib.sha256).digest()[:6])
        raw[0] |= 0xC0  # random static address
        return ":".join(f"{b:02X}" for b in raw)


@dataclass(frozen=True)
class SimEvent:
    time_ms: int
    kind: str
    agent: int
    data: dict = field(default_factory=dict)

    @property
    def time(self) -> float:
        return self.time_ms / 1000


@dataclass(frozen=True)
class Frame:
    id: int
    sender: int
    owner: int
    mac: str
    payload: bytes
    ephid: bytes
    epoch: int
    relayed: bool = False


@dataclass(frozen=True)
class Encounter:
    a: int
    b: int
    start: float
    end: float
    min_distance: float

    @property
    def duration(self) -> float:
        return self.end - self.start


class Receptions:
    """Column store: one row per frame heard by an app or SDK device."""

    COLUMNS = ("time_ms", "receiver", "frame", "rssi", "x", "y", "accepted", "sdk")
    DTYPES = (np.int64, np.int64, np.int64, np.float64, np.float64, np.float64, bool, bool)

    def __init__(self, **cols):
        for name, dt in zip(self.COLUMNS, self.DTYPES):
            setattr(self, name, np.asarray(cols.get(name, []), dtype=dt))

    def __len__(self):
        return len(self.time_ms)

    @classmethod
    def concat(cls, chunks: list[dict]) -> "Receptions":
        if not chunks:
            return cls()
        return cls(**{c: np.concatenate([ch[c] for ch in chunks]) for c in cls.COLUMNS})


@dataclass
class SimTrace:
    config: ScenarioConfig
    devices: list[DeviceProfile] = field(default_factory=list)
    events: list[SimEvent] = field(default_factory=list)
    frames: list[Frame] = field(default_factory=list)
    receptions: Receptions = field(default_factory=Receptions)
    encounters: list[Encounter] = field(default_factory=list)
    published: list[PublishedSeed] = field(default_factory=list)
    diagnoses: list[tuple[int, float]] = field(default_factory=list)
    notifications: list[tuple[int, int, float]] = field(default_factory=list)
    echo_links: list[tuple[int, int, EchoLink]] = field(default_factory=list)
    registry: Optional[CentralRegistry] = None
    positions: Optional[np.ndarray] = None
    position_times: Optional[np.ndarray] = None

    _by_receiver: Optional[dict] = field(default=None, repr=False, compare=False)

    def _rows_by_receiver(self) -> dict[int, np.ndarray]:
        if self._by_receiver is None:
            order = np.argsort(self.receptions.receiver, kind="stable")
            recv = self.receptions.receiver[order]
            cuts = np.flatnonzero(np.diff(recv)) + 1
            self._by_receiver = {int(g[0]): idx for g, idx in
                                 zip(np.split(recv, cuts), np.split(order, cuts)) if len(g)}
        return self._by_receiver

    def honest_rows(self, agent: int) -> np.ndarray:
        rows = self._rows_by_receiver().get(agent, np.empty(0, dtype=np.int64))
        if not self.devices[agent].has_tracing_app:
            return rows[:0]
        return rows[self.receptions.accepted[rows]]

    def observation(self, row: int) -> Observation:
        r = self.receptions
        f = self.frames[int(r.frame[row])]
        return Observation(f.ephid, f.mac, float(r.rssi[row]), int(r.time_ms[row]) / 1000, int(r.receiver[row]))

    def store(self, agent: int, until: Optional[float] = None) -> list[Observation]:
        """The honest app's observation store on ``agent``."""
        obs = [self.observation(int(i)) for i in self.honest_rows(agent)]
        if until is not None:
            obs = [o for o in obs if o.time <= until]
        return obs

    def capture(self, row: int) -> CaptureRecord:
        r = self.receptions
        f = self.frames[int(r.frame[row])]
        dev = self.devices[int(r.receiver[row])]
        return CaptureRecord(dev.id, dev.persistent_ad_id.hex(), f.mac, "Ens", f.ephid, float(r.rssi[row]),
                             int(r.time_ms[row]) / 1000, (float(r.x[row]), float(r.y[row])))

    def ledger(self) -> Ledger:
        return Ledger(self.capture(int(i)) for i in np.flatnonzero(self.receptions.sdk))

    def captures(self, agent: int) -> list[CaptureRecord]:
        rows = self._rows_by_receiver().get(agent, np.empty(0, dtype=np.int64))
        return [self.capture(int(i)) for i in rows[self.receptions.sdk[rows]]]

    def broadcast_log(self, agent: int) -> list[Frame]:
        return [f for f in self.frames if f.sender == agent and not f.relayed]

    def agent_of_phone(self) -> dict[str, int]:
        return {d.verinym: d.id for d in self.devices if d.verinym is not None}


def rssi_sample(distance: float, tx_power: float, rng: Optional[np.random.Generator] = None,
                path_loss_exponent: float = 2.0, sigma: float = 0.0,
                sensitivity: Optional[float] = None) -> Optional[float]:
    """One received signal strength draw; None when below the sensitivity floor."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    rssi = tx_power - 10 * path_loss_exponent * math.log10(distance)
    if sigma > 0:
        if rng is None:
            raise ValueError("a noisy sample needs an rng")
        rssi += rng.normal(0.0, sigma)
    if sensitivity is not None and rssi < sensitivity:
        return None
    return rssi


def _ms(seconds: float) -> int:
    return int(round(seconds * 1000))


class _World:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.policy = cfg.policy
        self.family = Family(cfg.protocol.family)
        self.n = cfg.population.count
        self.dur = _ms(cfg.duration)
        self.tick = _ms(cfg.tick)
        self.adv = _ms(cfg.advertising_interval)
        self.period = _ms(cfg.protocol.rotation_period)
        self.trace = SimTrace(cfg)
        ss = np.random.SeedSequence(cfg.seed)
        (self.rng_dev, self.rng_mob, self.rng_radio, self.rng_reg) = [np.random.default_rng(s) for s in ss.spawn(4)]
        self._queue: list = []
        self._seq = itertools.count()
        self._chunks: list[dict] = []
        self._positions: list[np.ndarray] = []
        self._position_times: list[int] = []
        self._runs: dict[tuple[int, int], list] = {}
        self._cur_epoch = np.full(self.n, -1, dtype=np.int64)
        self._cur_frame = np.full(self.n, -1, dtype=np.int64)
        self._geo_cache: dict[tuple[int, int], bool] = {}
        self._ephid_owner: dict[bytes, int] = {}
        self._relayed: set = set()
        self._uploaded = 0
        self._ledger = Ledger()
        self._pending_reports: list = []
        r = cfg.radio
        reach = r.tx_power - (r.sensitivity - 5 * r.sigma)
        self.max_range = min(10 ** (reach / (10 * r.path_loss_exponent)), math.hypot(*cfg.area) + 1.0)
        self._setup_devices()
        self._setup_mobility()

    # -- setup ---------------------------------------------------------------

    def _setup_devices(self):
        cfg, n = self.cfg, self.n
        app = self.rng_dev.random(n) < cfg.population.alpha
        sdk = self.rng_dev.random(n) < cfg.population.sdk_p
        for spec in cfg.agents:
            if spec.app is not None:
                app[spec.id] = spec.app
            if spec.sdk is not None:
                sdk[spec.id] = spec.sdk
        self.app, self.sdk = app, sdk
        self.listen = app | sdk
        registry = None
        if self.family is Family.CENTRALIZED:
            registry = CentralRegistry(int(self.rng_reg.integers(2**63)), self.policy)
        for i in range(n):
            ad_id = self.rng_dev.bytes(16)
            mac_key = self.rng_dev.bytes(16)
            secret = self.rng_dev.bytes(32)
            dev = DeviceProfile(i, bool(app[i]), bool(sdk[i]), ad_id, mac_key)
            if app[i]:
                if self.family is Family.DECENTRALIZED:
                    dev.seed = TrapdoorSeed(secret, i)
                else:
                    dev.verinym = f"+1555{i:07d}"
                    dev.schedule = central_issue(registry, dev.verinym, cfg.duration, self.policy, 0.0, i)
            self.trace.devices.append(dev)
        self.trace.registry = registry

    def _setup_mobility(self):
        cfg, n = self.cfg, self.n
        w, h = cfg.area
        self.pos = np.column_stack([self.rng_mob.uniform(0, w, n), self.rng_mob.uniform(0, h, n)]) if n else np.zeros((0, 2))
        self.paths: dict[int, np.ndarray] = {}
        self.fixed = np.full(n, cfg.mobility.model == "static")
        for spec in cfg.agents:
            if spec.path is not None:
                self.paths[spec.id] = np.asarray(spec.path, dtype=float)
                self.fixed[spec.id] = True
                self.pos[spec.id] = self._path_at(spec.id, 0)
            elif spec.position is not None:
                self.pos[spec.id] = spec.position
                self.fixed[spec.id] = True
        self.pos = np.clip(self.pos, 0, [w, h])
        self.target = self.pos.copy()
        self.speed = np.zeros(n)
        self.pause_until = np.zeros(n, dtype=np.int64)

    def _path_at(self, agent: int, t_ms: int) -> np.ndarray:
        kf = self.paths[agent]
        t = t_ms / 1000
        return np.array([np.interp(t, kf[:, 0], kf[:, 1]), np.interp(t, kf[:, 0], kf[:, 2])])

    # -- helpers -------------------------------------------------------------

    def push(self, t_ms: int, kind: str, agent: int = -1, data=None):
        heapq.heappush(self._queue, (t_ms, KIND_RANK[kind], agent, next(self._seq), kind, data))

    def log(self, t_ms: int, kind: str, agent: int, **data):
        self.trace.events.append(SimEvent(t_ms, kind, agent, data))

    def cell(self, x, y, size: float):
        ncols = max(1, math.ceil(self.cfg.area[0] / size))
        return (np.floor_divide(x, size).astype(np.int64)
                + np.floor_divide(y, size).astype(np.int64) * ncols)

    def epoch(self, t_ms: int) -> int:
        return t_ms // self.period

    # -- main loop -----------------------------------------------------------

    def run(self) -> SimTrace:
        if self.n == 0:
            return self.trace
        self.push(0, "Move")
        self.push(0, "Broadcast")
        if self.cfg.attack.mode != "none":
            self.push(_ms(self.cfg.attack.upload_interval), "SdkUpload")
        for inf in self.cfg.infections:
            self.push(_ms(inf.time), "Diagnose", inf.agent)
        handlers = {
            "Move": self._move, "Broadcast": self._broadcast, "RelayBroadcast": self._relay,
            "Echo": self._echo, "SdkUpload": self._upload, "Diagnose": self._diagnose,
        }
        while self._queue:
            t, _, agent, _, kind, data = heapq.heappop(self._queue)
            if t > self.dur or (t == self.dur and kind != "Diagnose"):
                continue
            handlers[kind](t, agent, data)
        self._finish()
        return self.trace

    def _finish(self):
        for key in sorted(self._runs):
            self._close_run(key)
        self.trace.encounters.sort(key=lambda e: (e.start, e.a, e.b))
        if self._pending_reports:
            batch = central_process_batch(self.trace.registry, [r[1:] for r in self._pending_reports],
                                          discard_multi_region=True)
            phones = self.trace.agent_of_phone()
            for t, reporter, _, _ in self._pending_reports:
                for owner in batch[reporter]:
                    self.trace.notifications.append((phones[reporter], phones[owner], t / 1000))
        self.trace.receptions = Receptions.concat(self._chunks)
        if self.cfg.record_positions:
            self.trace.positions = np.stack(self._positions) if self._positions else np.zeros((0, self.n, 2))
            self.trace.position_times = np.asarray(self._position_times, dtype=np.int64) / 1000

    # -- movement and encounters ---------------------------------------------

    def _move(self, t: int, _agent, _data):
        if t > 0:
            self._advance(t)
        if self.cfg.record_positions:
            self._positions.append(self.pos.copy())
            self._position_times.append(t)
        self._track_encounters(t)
        if t + self.tick < self.dur:
            self.push(t + self.tick, "Move")

    def _advance(self, t: int):
        dt = self.tick / 1000
        w, h = self.cfg.area
        for i, _ in self.paths.items():
            self.pos[i] = self._path_at(i, t)
        walking = ~self.fixed
        if not walking.any():
            return
        idle = walking & (self.speed == 0) & (self.pause_until <= t)
        lo, hi = self.cfg.mobility.speed
        for i in np.flatnonzero(idle):
            self.target[i] = (self.rng_mob.uniform(0, w), self.rng_mob.uniform(0, h))
            self.speed[i] = self.rng_mob.uniform(lo, hi)
            self.log(t, "Move", int(i), waypoint=[float(self.target[i, 0]), float(self.target[i, 1])],
                     speed=float(self.speed[i]))
        moving = walking & (self.speed > 0)
        delta = self.target[moving] - self.pos[moving]
        dist = np.hypot(delta[:, 0], delta[:, 1])
        step = self.speed[moving] * dt
        arrive = step >= dist
        frac = np.where(arrive, 1.0, step / np.where(dist > 0, dist, 1.0))
        self.pos[moving] += delta * frac[:, None]
        arrived = np.flatnonzero(moving)[arrive]
        plo, phi = self.cfg.mobility.pause
        for i in arrived:
            self.speed[i] = 0.0
            self.pause_until[i] = t + _ms(self.rng_mob.uniform(plo, phi))
        np.clip(self.pos, 0, [w, h], out=self.pos)

    def _track_encounters(self, t: int):
        radius = self.cfg.encounter.radius
        pairs = cKDTree(self.pos).query_pairs(radius, output_type="ndarray") if self.n > 1 else np.zeros((0, 2), int)
        if len(pairs):
            pairs = np.sort(pairs, axis=1)
            d = np.hypot(*(self.pos[pairs[:, 0]] - self.pos[pairs[:, 1]]).T)
        present = set()
        dwell = _ms(self.cfg.encounter.min_dwell)
        for k in range(len(pairs)):
            key = (int(pairs[k, 0]), int(pairs[k, 1]))
            present.add(key)
            run = self._runs.get(key)
            if run is None:
                run = self._runs[key] = [t, t, float(d[k]), False]
            else:
                run[1] = t
                run[2] = min(run[2], float(d[k]))
            if not run[3] and t + self.tick - run[0] >= dwell:
                run[3] = True
                if self.cfg.attack.echo:
                    self.push(t, "Echo", key[0], key[1])
        for key in [k for k in self._runs if k not in present]:
            self._close_run(key)

    def _close_run(self, key):
        start, last, dmin, _ = self._runs.pop(key)
        end = min(last + self.tick, self.dur)
        if end - start >= _ms(self.cfg.encounter.min_dwell):
            self.trace.encounters.append(Encounter(key[0], key[1], start / 1000, end / 1000, dmin))

    # -- radio ---------------------------------------------------------------

    def _current_frame(self, i: int, t: int) -> int:
        e = self.epoch(t)
        if self._cur_epoch[i] == e:
            return int(self._cur_frame[i])
        dev = self.trace.devices[i]
        self._cur_epoch[i] = e
        if self.family is Family.DECENTRALIZED:
            if self.cfg.geo.k is not None:
                tower = int(self.cell(self.pos[i, 0], self.pos[i, 1], self.cfg.geo.tower_size))
                ephid, trials = geo_select_ephid(dev.seed, e, GeoBinding(self.cfg.geo.k, tower))
            else:
                ephid = derive_ephid(dev.seed, e)
        else:
            if e >= len(dev.schedule):
                self._cur_frame[i] = -1
                return -1
            ephid = dev.schedule[e][0]
        metadata = bytes([0x40, int(self.cfg.radio.tx_power) & 0xFF, 0, 0])
        frame = Frame(len(self.trace.frames), i, i, dev.mac_for_epoch(e), encode_beacon(Ens(ephid, metadata)),
                      ephid, e)
        self.trace.frames.append(frame)
        self._ephid_owner[ephid] = i
        self._cur_frame[i] = frame.id
        self.log(t, "Broadcast", i, frame=frame.id, epoch=e, ephid=ephid.hex(), mac=frame.mac)
        return frame.id

    def _broadcast(self, t: int, _agent, _data):
        senders = np.flatnonzero(self.app)
        frames = np.array([self._current_frame(int(i), t) for i in senders], dtype=np.int64)
        keep = frames >= 0
        self._receive(t, senders[keep], frames[keep])
        if t + self.adv < self.dur:
            self.push(t + self.adv, "Broadcast")

    def _receive(self, t: int, senders: np.ndarray, frames: np.ndarray):
        """Deliver one advertisement from each sender to every listener in range."""
        if len(senders) == 0 or not self.listen.any():
            return
        listeners = np.flatnonzero(self.listen)
        tree = cKDTree(self.pos[listeners])
        hits = tree.query_ball_point(self.pos[senders], self.max_range)
        s_idx = np.repeat(np.arange(len(senders)), [len(h) for h in hits])
        if len(s_idx) == 0:
            return
        recv = listeners[np.concatenate([np.asarray(h, dtype=np.int64) for h in hits])]
        snd = senders[s_idx]
        mask = recv != snd
        recv, snd, fr = recv[mask], snd[mask], frames[s_idx][mask]
        order = np.lexsort((snd, recv))
        recv, snd, fr = recv[order], snd[order], fr[order]
        r = self.cfg.radio
        d = np.maximum(np.hypot(*(self.pos[recv] - self.pos[snd]).T), r.min_distance)
        rssi = r.tx_power - 10 * r.path_loss_exponent * np.log10(d)
        if r.sigma > 0:
            rssi = rssi + self.rng_radio.normal(0.0, r.sigma, len(rssi))
        ok = rssi >= r.sensitivity
        recv, fr, rssi = recv[ok], fr[ok], rssi[ok]
        if len(recv) == 0:
            return
        accepted = self.app[recv].copy()
        if self.cfg.geo.k is not None and self.cfg.geo.k > 0:
            towers = self.cell(self.pos[recv, 0], self.pos[recv, 1], self.cfg.geo.tower_size)
            for j in np.flatnonzero(accepted):
                key = (int(fr[j]), int(towers[j]))
                ok_geo = self._geo_cache.get(key)
                if ok_geo is None:
                    ok_geo = geo_verify(self.trace.frames[key[0]].ephid, GeoBinding(self.cfg.geo.k, key[1]))
                    self._geo_cache[key] = ok_geo
                accepted[j] = ok_geo
        chunk = {
            "time_ms": np.full(len(recv), t, dtype=np.int64), "receiver": recv, "frame": fr, "rssi": rssi,
            "x": self.pos[recv, 0].copy(), "y": self.pos[recv, 1].copy(),
            "accepted": accepted, "sdk": self.sdk[recv].copy(),
        }
        self._chunks.append(chunk)
        if self.cfg.attack.mode != "none" and chunk["sdk"].any():
            for j in np.flatnonzero(chunk["sdk"]):
                f = self.trace.frames[int(fr[j])]
                dev = self.trace.devices[int(recv[j])]
                self._ledger.append(CaptureRecord(dev.id, dev.persistent_ad_id.hex(), f.mac, "Ens", f.ephid,
                                                  float(rssi[j]), t / 1000,
                                                  (float(chunk["x"][j]), float(chunk["y"][j]))))

    # -- attacker --------------------------------------------------------------

    def _deputies(self) -> dict[int, tuple[float, float]]:
        return {int(i): (float(self.pos[i, 0]), float(self.pos[i, 1])) for i in np.flatnonzero(self.sdk)}

    def _upload(self, t: int, _agent, _data):
        atk = self.cfg.attack
        now = t / 1000
        window = self.policy.acceptance_window
        new = len(self._ledger) - self._uploaded
        self._uploaded = len(self._ledger)
        recent = self._ledger.between(now - window, now)
        deputies = self._deputies()
        commands: list[RelayCommand] = []
        try:
            if atk.mode == "relay":
                for k, region in enumerate(atk.target_regions):
                    done = {e for (e, reg) in self._relayed if reg == k}
                    commands += adversary.plan_relay(recent, atk.source_region, region, now, deputies,
                                                     atk.dispatch_latency, window, done, k)
            else:
                done = {e for (e, _) in self._relayed}
                mode = "framing" if atk.mode == "framing" else "flood"
                commands = adversary.centralized_attack(
                    mode, recent, self.family, now=now, deputies=deputies, target_regions=atk.target_regions,
                    source_region=atk.source_region, latency=atk.dispatch_latency,
                    acceptance_window=window, exclude=done)
        except adversary.NoDeputyInTarget as exc:
            self.log(t, "SdkUpload", -1, captures=new, commands=0, error=str(exc))
        else:
            for c in commands:
                self._relayed.add((c.ephids[0], c.region))
                self.push(t + _ms(atk.dispatch_latency + atk.relay_delay), "RelayBroadcast", c.target_device, c)
            self.log(t, "SdkUpload", -1, captures=new, commands=len(commands))
        if t + _ms(atk.upload_interval) < self.dur:
            self.push(t + _ms(atk.upload_interval), "SdkUpload")

    def _relay(self, t: int, agent: int, command: RelayCommand):
        dev = self.trace.devices[agent]
        payloads = adversary.execute_relay(dev, command, t / 1000)
        if payloads is None:
            self.log(t, "RelayBroadcast", agent, status="expired", ephid=command.ephids[0].hex(),
                     deadline=command.deadline)
            return
        mac = dev.mac_for_epoch(self.epoch(t))
        fids = []
        for ephid, payload in zip(command.ephids, payloads):
            frame = Frame(len(self.trace.frames), agent, self._ephid_owner.get(ephid, -1), mac, payload, ephid,
                          self.epoch(t), relayed=True)
            self.trace.frames.append(frame)
            fids.append(frame.id)
        self.log(t, "RelayBroadcast", agent, status="sent", ephid=command.ephids[0].hex(), frames=fids,
                 deadline=command.deadline)
        self._receive(t, np.full(len(fids), agent, dtype=np.int64), np.asarray(fids, dtype=np.int64))

    def _echo(self, t: int, a: int, b: int):
        da, db = self.trace.devices[a], self.trace.devices[b]

        def frame_of(i):
            fid = self._cur_frame[i] if self.app[i] else -1
            if fid < 0:
                return None
            f = self.trace.frames[int(fid)]
            return f.mac, f.ephid

        links = adversary.echo_roundtrip(da, db, frame_of(a), frame_of(b), t / 1000, LinkPath.ECHO_ROUND_TRIP)
        for link in links:
            self.trace.echo_links.append((a, b, link))
        self.log(t, "Echo", a, peer=b, links=len(links))

    # -- health authority --------------------------------------------------------

    def _diagnose(self, t: int, agent: int, _data):
        dev = self.trace.devices[agent]
        self.trace.diagnoses.append((agent, t / 1000))
        if not dev.has_tracing_app:
            self.log(t, "Diagnose", agent, action="none")
            return
        if self.family is Family.DECENTRALIZED:
            first = self.epoch(max(0, t - _ms(self.cfg.protocol.infectious_window)))
            last = self.epoch(min(t, self.dur - 1))
            self.trace.published.append(PublishedSeed(dev.seed, first, last, t / 1000, self.policy.name))
            self.log(t, "Diagnose", agent, action="publish", seed=dev.seed.id, first_epoch=first, last_epoch=last)
            return
        cols = {c: np.concatenate([ch[c] for ch in self._chunks]) if self._chunks else np.empty(0)
                for c in ("receiver", "accepted", "time_ms", "frame", "rssi", "x", "y")}
        rows = np.flatnonzero((cols["receiver"] == agent) & cols["accepted"].astype(bool) & (cols["time_ms"] <= t))
        store = []
        for i in rows:
            f = self.trace.frames[int(cols["frame"][i])]
            store.append(Observation(f.ephid, f.mac, float(cols["rssi"][i]), int(cols["time_ms"][i]) / 1000, agent))
        if self.cfg.authority.relay_filter == "multi_region":
            regions = self.cell(cols["x"][rows], cols["y"][rows], self.cfg.authority.region_size)
            self._pending_reports.append((t, dev.verinym, store, [int(r) for r in regions]))
            self.log(t, "Diagnose", agent, action="upload", observations=len(store), deferred=True)
            return
        notify = central_process_report(self.trace.registry, dev.verinym, store)
        phones = self.trace.agent_of_phone()
        for owner in notify:
            self.trace.notifications.append((agent, phones[owner], t / 1000))
        self.log(t, "Diagnose", agent, action="upload", observations=len(store), notified=len(notify))


def run_scenario(config: ScenarioConfig) -> SimTrace:
    validate(config)
    return _World(config).run()


def ground_truth_encounters(trace: SimTrace) -> list[Encounter]:
    """Geometric encounters, whatever the devices have installed."""
    return sorted(trace.encounters, key=lambda e: (e.start, e.a, e.b))
