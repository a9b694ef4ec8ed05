import pytest

from rplsybil.harness import run_scenario
from rplsybil.netsim import US_PER_S
from rplsybil.rpl import Mode
from rplsybil.scenario import Defense, ScenarioConfig
from rplsybil.simulation import Network, TopologyError

SMALL = ScenarioConfig(node_count=20, sybil_ratio=0.2, duration_s=1200.0, seed=1)


def test_same_seed_same_result():
    a = run_scenario(SMALL).row()
    b = run_scenario(SMALL).row()
    assert a == b
    assert run_scenario(SMALL.replace(seed=2)).row() != a


def test_uitrust_detects_small_attack():
    res = run_scenario(SMALL)
    assert res.network.stats.alarm_t is not None
    assert res.network.stats.alarm_t >= SMALL.attack_start_s
    assert res.report.misdetection_rate == 0.0
    assert res.report.detection_latency_s is not None


def test_no_alarm_without_attackers():
    net = run_scenario(SMALL.replace(sybil_ratio=0.0)).network
    assert net.stats.alarm_t is None
    assert net.stats.data_delivered <= net.stats.data_originated


def test_each_device_reports_a_single_uid_per_type():
    net = run_scenario(SMALL).network
    assert net.uid_obs
    assert all(len(uids) == 1 for uids in net.uid_obs.values())


def test_disconnected_field_is_a_topology_error():
    with pytest.raises(TopologyError):
        Network(SMALL.replace(field_side_m=1000.0, tx_range_m=5.0))


def test_late_alarm_joins_the_running_round_grid():
    net = Network(SMALL)
    rounds = []
    net._query_round = lambda dev, k: rounds.append((net.clock.now_us, k))
    dev = net.devices[1]
    t0 = 600 * US_PER_S
    net.clock.schedule_us(t0 + 10 * US_PER_S, net._enter_attack_mode, dev, t0)
    net.clock.run(until=700.0)
    assert dev.st.mode is Mode.ATTACK_DETECTION
    (at, k), = rounds
    # the round at t0 + 2 s is already past, so the first query waits one interval
    assert k == 1
    assert t0 + 32 * US_PER_S <= at < t0 + 33 * US_PER_S


@pytest.mark.parametrize("defense", list(Defense))
def test_every_defense_runs(defense):
    rep = run_scenario(SMALL.replace(defense=defense, duration_s=900.0)).report
    assert 0.0 <= rep.pdr <= 1.0
    assert rep.overhead_bytes > 0
