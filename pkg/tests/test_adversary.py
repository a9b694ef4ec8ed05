import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplsybil.adversary import Attacker, AttackerConfig, NodeIdentity, QueryBehavior, simulate_flood


def make(**kw) -> Attacker:
    return Attacker(device=1, identity=NodeIdentity(uid=0xD00D, mac=0), config=AttackerConfig(**kw), mac_base=0x1000)


def test_flood_emits_one_dis_per_period():
    att = make(dis_rate_hz=2.0)
    frames = simulate_flood(att, 0.0, 3.0, random.Random(1))
    assert [t for t, _ in frames] == [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]


def test_identity_switches_every_period_and_never_reuses_while_pool_lasts():
    att = make(identity_switch_period_s=10.0)
    frames = simulate_flood(att, 0.0, 100.0, random.Random(2))
    macs = [m for _, m in frames]
    distinct = list(dict.fromkeys(macs))
    assert len(distinct) == 10
    assert all(0x1000 <= m < 0x1000 + 2 ** 16 for m in distinct)
    assert att.reused == 0


def test_exhausted_pool_reuses_and_counts():
    att = make(mac_pool_size=2, identity_switch_period_s=1.0)
    simulate_flood(att, 0.0, 5.0, random.Random(3))
    assert att.reused == 3


def test_consecutive_identities_change_power():
    att = make()
    rng = random.Random(4)
    prev = None
    for _ in range(50):
        _, p = att.next_fake_identity(rng)
        assert p != prev
        prev = p


def test_uid_is_immutable():
    ident = NodeIdentity(uid=7, mac=1)
    ident.mac = 2
    with pytest.raises(AttributeError):
        ident.uid = 8


def test_query_behaviours():
    rng = random.Random(0)
    assert make().respond_to_query(0, 2.0, rng) == 0.0
    assert make(query_behavior="delay").respond_to_query(0, 2.0, rng) == pytest.approx(3.0)
    assert make(query_behavior=QueryBehavior.IGNORE).respond_to_query(0, 2.0, rng) is None
    alt = make(query_behavior=QueryBehavior.ANSWER_THEN_IGNORE_ALT_UID)
    assert alt.respond_to_query(0, 2.0, rng) == 0.0
    assert alt.respond_to_query(1, 2.0, rng) is None
    assert alt.respond_to_query(0, 2.0, rng) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        AttackerConfig(mac_pool_size=0)
    with pytest.raises(ValueError):
        AttackerConfig(dis_rate_hz=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(0.5, 5.0))
def test_recent_identities_are_within_answer_window(seed, rate):
    att = make(dis_rate_hz=rate, answer_window_s=30.0)
    simulate_flood(att, 0.0, 120.0, random.Random(seed))
    recent = att.recent_identities(120.0)
    assert att.identity.mac in recent
    assert all(att.history[m] >= 90.0 for m in recent)
