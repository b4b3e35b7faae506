import json

import pytest

from proxtrace.config import InvalidConfig, ScenarioConfig
from proxtrace.protocol import Family

from conftest import DEMO_CONFIGS


def test_defaults_roundtrip():
    cfg = ScenarioConfig()
    again = ScenarioConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_hash_changes_with_content():
    cfg = ScenarioConfig()
    assert cfg.replace(seed=1).config_hash() != cfg.config_hash()


def test_replace_dotted():
    cfg = ScenarioConfig().replace(**{"population.alpha": 0.5, "geo.k": 4})
    assert cfg.population.alpha == 0.5 and cfg.geo.k == 4


def test_policy_from_protocol():
    cfg = ScenarioConfig.from_dict({"protocol": {"family": "centralized", "rotation_period": 900,
                                                 "acceptance_window": 900}})
    assert cfg.policy.family is Family.CENTRALIZED and cfg.policy.rotation_period == 900


@pytest.mark.parametrize("doc, path", [
    ({"duration": 0}, "duration"),
    ({"area": [10, -1]}, "area"),
    ({"population": {"alpha": 1.5}}, "population.alpha"),
    ({"population": {"count": 2, "sdk_p": -0.1}}, "population.sdk_p"),
    ({"population": {"count": 2}, "agents": [{"id": 5}]}, "agents[0].id"),
    ({"protocol": {"family": "p2p"}}, "protocol.family"),
    ({"radio": {"sigma": -1}}, "radio.sigma"),
    ({"geo": {"k": 40}}, "geo.k"),
    ({"bogus": 1}, "<root>"),
    ({"radio": {"bogus": 1}}, "radio"),
    ({"attack": {"mode": "relay", "target_regions": [[0, 0, 1, 1]]}}, "attack.source_region"),
    ({"attack": {"mode": "flood", "target_regions": [[0, 0, 1, 1]]}}, "attack.mode"),
    ({"schema_version": 9}, "schema_version"),
])
def test_validation_messages(doc, path):
    with pytest.raises(InvalidConfig) as err:
        ScenarioConfig.from_dict(doc)
    assert err.value.path == path


def test_load_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    with pytest.raises(InvalidConfig):
        ScenarioConfig.load(p)


def test_demo_configs_validate():
    files = sorted(DEMO_CONFIGS.glob("*.json"))
    assert files
    for f in files:
        ScenarioConfig.load(f)
