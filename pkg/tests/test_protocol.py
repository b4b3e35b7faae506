import hashlib
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from proxtrace.protocol import (ABTRACE, GAEN, AlreadyRegistered, CentralRegistry, Exhausted, ExposureIndex,
                                GeoBinding, Observation, PublishedSeed, RotationPolicy, TrapdoorSeed,
                                UnknownReporter, central_issue, central_process_batch, central_process_report,
                                derive_ephid, dump_published, epoch_of, geo_select_ephid, geo_verify,
                                leading_zero_bits, load_published, match_exposures, regenerate_window,
                                window_delta, window_epochs)

SEED = TrapdoorSeed(bytes(range(32)), owner_device=3)

# Computed with a hand-rolled HMAC (ipad/opad over sha256), not the hmac module.
FROZEN_EPHIDS = {
    (0, 0): "c96024e49b6d1195fa62f7eba408f5bb",
    (1, 0): "a43b938d2484b8b64d5935e057b10c86",
    (5, 3): "f42e1e5f9e26ab2c6d0e021de932ae3e",
}
# First counter whose sha256(ephid || tower 7) starts with four zero bits.
FROZEN_GEO = (11, "5566b483839dc5c4e201110c61e383bc")


def seed_from(rng, owner=None):
    return TrapdoorSeed(rng.randbytes(32), owner)


@pytest.mark.parametrize("key", sorted(FROZEN_EPHIDS))
def test_ephid_vectors(key):
    assert derive_ephid(SEED, *key).hex() == FROZEN_EPHIDS[key]


def test_ephid_deterministic_and_distinct():
    assert derive_ephid(SEED, 42) == derive_ephid(SEED, 42)
    ids = {derive_ephid(SEED, e) for e in range(10_001)}
    assert len(ids) == 10_001
    other = TrapdoorSeed(bytes(32))
    assert derive_ephid(other, 7) != derive_ephid(SEED, 7)


def test_ephids_share_no_bytes_beyond_chance():
    # byte-position agreement between consecutive EphIds should be ~1/256
    ids = np.frombuffer(b"".join(derive_ephid(SEED, e) for e in range(4000)), dtype=np.uint8).reshape(-1, 16)
    agree = (ids[1:] == ids[:-1]).mean()
    assert abs(agree - 1 / 256) < 0.002


@pytest.mark.parametrize("t, period, epoch", [(0, 600, 0), (599, 600, 0), (600, 600, 1), (3600, 900, 4)])
def test_epoch_of(t, period, epoch):
    assert epoch_of(t, RotationPolicy(period, period)) == epoch


def test_window_epochs_counts():
    assert list(window_epochs(0, 0, GAEN)) == [0]
    assert len(window_epochs(0, 86400, GAEN)) == 144
    assert len(window_epochs(0, 86400, ABTRACE)) == 96


def test_regenerate_window_matches_broadcasts():
    log = {derive_ephid(SEED, epoch_of(t, GAEN)) for t in range(0, 7200, 37)}
    assert {e for e, _ in regenerate_window(SEED, 0, 7200, GAEN)} == log


def test_window_boundary_two_hours():
    e = 10
    end = (e + 1) * GAEN.rotation_period
    ephid = derive_ephid(SEED, e)
    pub = [PublishedSeed(SEED, 0, 100)]
    ok = Observation(ephid, "m", -50, end + 119 * 60, 0)
    late = Observation(ephid, "m", -50, end + 121 * 60, 0)
    assert len(match_exposures([ok], pub, GAEN)) == 1
    assert match_exposures([late], pub, GAEN) == []


def test_window_is_symmetric():
    start = 10 * GAEN.rotation_period
    assert window_delta(start - 7200, 10, GAEN) == -7200
    assert window_delta(start + 300, 10, GAEN) == 0
    ephid = derive_ephid(SEED, 10)
    early = [Observation(ephid, "m", -50, start - 7200, 0), Observation(ephid, "m", -50, start - 7201, 0)]
    assert [m.observation for m in match_exposures(early, [SEED], GAEN)] == early[:1]


def test_empty_store():
    assert match_exposures([], [SEED], GAEN) == []


def test_rssi_threshold_applies():
    obs = Observation(derive_ephid(SEED, 0), "m", -71, 10, 0)
    assert match_exposures([obs], [SEED], GAEN) == []
    assert len(match_exposures([obs], [SEED], GAEN, rssi_threshold=-75)) == 1


def brute_force(store, seeds, policy, threshold):
    """Try every (observation, seed, epoch) triple."""
    out = set()
    horizon = int(max((o.time for o in store), default=0) / policy.rotation_period) + 20
    for i, obs in enumerate(store):
        for s in seeds:
            for e in range(horizon):
                if derive_ephid(s, e) != obs.ephid or obs.rssi < threshold:
                    continue
                lo = e * policy.rotation_period - policy.acceptance_window
                hi = (e + 1) * policy.rotation_period + policy.acceptance_window
                if lo <= obs.time <= hi:
                    out.add((i, s.id, e))
    return out


def random_instance(rng, n_obs, n_seeds, policy):
    seeds = [seed_from(rng, k) for k in range(n_seeds)]
    strangers = [seed_from(rng) for _ in range(2)]
    store = []
    for _ in range(n_obs):
        e = rng.randrange(30)
        owner = rng.choice(seeds + strangers)
        # observe anywhere from 3 h before to 3 h after the epoch
        t = max(0.0, e * policy.rotation_period + rng.uniform(-3, 3) * 3600)
        store.append(Observation(derive_ephid(owner, e), "m", rng.uniform(-90, -40), t, 0))
    return store, seeds


def match_set(matches, store):
    pos = {id(o): i for i, o in enumerate(store)}
    return {(pos[id(m.observation)], m.matched_seed, m.epoch) for m in matches}


def test_matching_equals_brute_force_small():
    rng = random.Random(5)
    store, seeds = random_instance(rng, 20, 3, GAEN)
    assert match_set(match_exposures(store, seeds, GAEN), store) == brute_force(store, seeds, GAEN, -70)


@given(st.integers(0, 2**32 - 1), st.integers(0, 50), st.integers(1, 5))
@settings(max_examples=25, deadline=None)
def test_matching_equals_brute_force_property(seed, n_obs, n_seeds):
    rng = random.Random(seed)
    store, seeds = random_instance(rng, n_obs, n_seeds, GAEN)
    assert match_set(match_exposures(store, seeds, GAEN), store) == brute_force(store, seeds, GAEN, -70)


def test_published_seed_span_limits_matches():
    obs = Observation(derive_ephid(SEED, 50), "m", -50, 50 * 600, 0)
    assert match_exposures([obs], [PublishedSeed(SEED, 0, 49)], GAEN) == []
    assert len(match_exposures([obs], [PublishedSeed(SEED, 0, 50)], GAEN)) == 1


def test_published_text_roundtrip():
    pubs = [PublishedSeed(SEED, 0, 143, 86400.0, "gaen"), PublishedSeed(TrapdoorSeed(bytes(32)), 5, 6)]
    assert load_published(dump_published(pubs)) == pubs


# -- centralised -------------------------------------------------------------------

def test_central_issue_schedule():
    reg = CentralRegistry(1)
    sched = central_issue(reg, "+15550001", 3600)
    assert len(sched) == 4
    assert [iv for _, iv in sched] == [(0, 900), (900, 1800), (1800, 2700), (2700, 3600)]
    other = central_issue(reg, "+15550002", 3600)
    assert not {e for e, _ in sched} & {e for e, _ in other}
    assert central_issue(reg, "+15550003", 0) == [] and "+15550003" in reg.users
    with pytest.raises(AlreadyRegistered):
        central_issue(reg, "+15550001", 10)


def test_central_report_lookup_and_drops():
    reg = CentralRegistry(2)
    central_issue(reg, "A", 3600)
    b = central_issue(reg, "B", 3600)
    ephid, (start, _) = b[1]
    assert central_process_report(reg, "A", [Observation(ephid, "m", -60, start + 10, 0)]) == ["B"]
    assert reg.drop_count == 0
    assert central_process_report(reg, "A", [Observation(bytes(16), "m", -60, 10, 0)]) == []
    assert reg.drop_count == 1
    with pytest.raises(UnknownReporter):
        central_process_report(reg, "Z", [])


def test_central_union_over_reporters():
    reg = CentralRegistry(3)
    scheds = {p: central_issue(reg, p, 3600) for p in "ABCDE"}

    def obs(owner, k):
        e, (s, _) = scheds[owner][k]
        return Observation(e, "m", -60, s + 1, 0)

    reports = {"A": [obs("B", 0), obs("C", 1)], "D": [obs("B", 0), obs("B", 2)], "E": [obs("C", 1)]}
    notified = set()
    for reporter, store in reports.items():
        out = central_process_report(reg, reporter, store)
        assert len(out) == len(set(out))
        notified |= set(out)
    assert notified == {"B", "C"}


def test_central_maps_back_to_owner_only():
    reg = CentralRegistry(4)
    scheds = {p: central_issue(reg, p, 7200) for p in ("A", "B", "C")}
    for ephid, (s, _) in scheds["B"]:
        assert central_process_report(reg, "A", [Observation(ephid, "m", -60, s, 0)]) == ["B"]


def test_batch_discards_multi_region():
    reg = CentralRegistry(5)
    for p in "ABCO":
        central_issue(reg, p, 3600)
    ephid, (s, _) = reg.users["O"].schedule[0]
    o = Observation(ephid, "m", -60, s + 5, 0)
    out = central_process_batch(reg, [("A", [o], [0]), ("B", [o], [1]), ("C", [o], [2])])
    assert out == {"A": [], "B": [], "C": []} and ephid in reg.discarded
    out = central_process_batch(reg, [("A", [o], [0]), ("B", [o], [0])], discard_multi_region=False)
    assert out == {"A": ["O"], "B": ["O"]}


def test_registry_json_roundtrip():
    reg = CentralRegistry(6)
    central_issue(reg, "A", 1800)
    central_issue(reg, "B", 1800)
    e, (s, _) = reg.users["B"].schedule[0]
    central_process_report(reg, "A", [Observation(e, "m", -60, s, 0)])
    again = CentralRegistry.from_json(reg.to_json())
    assert again.to_json() == reg.to_json()
    assert again.owner_of == reg.owner_of


# -- geo-binding ---------------------------------------------------------------------

def geo_oracle(ephid, tower, k):
    d = hashlib.sha256(ephid + tower.to_bytes(8, "big")).digest()
    return int.from_bytes(d, "big") >> (256 - k) == 0 if k else True


def test_geo_frozen_vector():
    ephid, trials = geo_select_ephid(SEED, 0, GeoBinding(4, 7))
    assert (trials, ephid.hex()) == FROZEN_GEO


def test_leading_zero_bits():
    assert leading_zero_bits(b"\x00\x00\x10") == 19
    assert leading_zero_bits(b"\x80") == 0
    assert leading_zero_bits(bytes(4)) == 32


def test_geo_k0_is_unbound_baseline():
    for e in range(50):
        ephid, trials = geo_select_ephid(SEED, e, GeoBinding(0, 123))
        assert trials == 1 and ephid == derive_ephid(SEED, e)
        assert geo_verify(ephid, GeoBinding(0, 999))


def test_geo_selection_verifies_and_agrees_with_oracle():
    rng = random.Random(9)
    trials = []
    for _ in range(1000):
        seed, tower = seed_from(rng), rng.randrange(10**6)
        ephid, n = geo_select_ephid(seed, rng.randrange(1000), GeoBinding(4, tower))
        assert geo_verify(ephid, GeoBinding(4, tower)) and geo_oracle(ephid, tower, 4)
        trials.append(n)
    assert 14 <= np.mean(trials) <= 18


def test_geo_cross_tower_rate():
    rng = random.Random(10)
    hits = 0
    n = 10_000
    for _ in range(n):
        seed, tower = seed_from(rng), rng.randrange(10**6)
        ephid, _ = geo_select_ephid(seed, 0, GeoBinding(4, tower))
        other = rng.randrange(10**6)
        while other == tower:
            other = rng.randrange(10**6)
        hits += geo_verify(ephid, GeoBinding(4, other))
    assert abs(hits / n - 0.0625) <= 0.02


@given(st.binary(min_size=16, max_size=16), st.integers(0, 2**63), st.integers(0, 12))
def test_geo_verify_matches_oracle(ephid, tower, k):
    assert geo_verify(ephid, GeoBinding(k, tower)) == geo_oracle(ephid, tower, k)


def test_geo_exhausted():
    with pytest.raises(Exhausted):
        geo_select_ephid(SEED, 0, GeoBinding(32, 1), max_trials=50)


def test_geo_index_recovers_counter_ephids():
    ephid, trials = geo_select_ephid(SEED, 3, GeoBinding(4, 55))
    index = ExposureIndex([SEED], range(0, 10), GAEN, max_counter=2 ** 12)
    assert index.table[ephid] == (SEED.id, 3)
