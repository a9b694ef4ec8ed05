import pytest

from rplsybil.adversary import QueryBehavior
from rplsybil.scenario import ConfigError, Defense, ScenarioConfig, dump_config, load_config, parse_config


def test_defaults():
    cfg = ScenarioConfig()
    assert cfg.node_count == 100
    assert cfg.query_interval_s == 30.0
    assert cfg.defense is Defense.UITRUST
    assert ScenarioConfig(sybil_ratio=0.3).attacker_count == 30


def test_parse_with_comments_and_attacker_keys():
    cfg = parse_config(
        "# a comment\nnode_count = 20\nsybil_ratio = 0.5  # trailing\n"
        "defense = nonemrhof\nattacker.query_behavior = ignore\nattacker.power_levels_dbm = -3, 0\n"
        "trace = yes\n"
    )
    assert cfg.node_count == 20 and cfg.sybil_ratio == 0.5
    assert cfg.defense is Defense.NONE_MRHOF
    assert cfg.attacker.query_behavior is QueryBehavior.IGNORE
    assert cfg.attacker.power_levels_dbm == (-3.0, 0.0)
    assert cfg.trace is True


@pytest.mark.parametrize("text", [
    "bogus = 1", "attacker.bogus = 1", "node_count", "node_count = x",
    "sybil_ratio = 1.5", "gamma = -0.1", "defense = magic", "attacker.mac_pool_size = 0",
])
def test_invalid_configs_raise(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_dump_round_trips(tmp_path):
    cfg = ScenarioConfig(node_count=17, sybil_ratio=0.2, defense=Defense.ID_COUNT, scenario_id="x")
    path = tmp_path / "c.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(str(path)) == cfg


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.cfg"))
