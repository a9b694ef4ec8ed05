import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplsybil.netsim import (
    CausalityError,
    DropReason,
    EnergyAccount,
    EnergyAction,
    EnergyModel,
    RadioConfig,
    SimClock,
    Trace,
    account_energy,
    deliver,
    rssi_at,
)


def test_first_event_id_and_stable_ties():
    clock = SimClock()
    order = []
    assert clock.schedule(0.0, order.append, "boot") == 0
    clock.schedule(1.0, order.append, "e")
    clock.schedule(1.0, order.append, "f")
    clock.run()
    assert order == ["boot", "e", "f"]


def test_scheduling_in_the_past_is_rejected():
    clock = SimClock()
    clock.schedule(5.0, lambda: None)
    clock.run()
    with pytest.raises(CausalityError):
        clock.schedule(4.0, lambda: None)


def test_run_until_stops_and_advances_time():
    clock = SimClock()
    fired = []
    clock.schedule(2.0, fired.append, 2)
    clock.schedule(8.0, fired.append, 8)
    clock.run(until=5.0)
    assert fired == [2]
    assert clock.now == 5.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=40))
def test_events_run_in_time_order(times):
    clock = SimClock()
    seen = []
    for i, t in enumerate(times):
        clock.schedule_us(t, lambda i=i: seen.append((clock.now_us, i)))
    clock.run()
    assert seen == sorted(seen)


POS = [(0.0, 0.0), (50.0, 0.0), (10.0, 0.0)]


def test_delivery_range_and_loss():
    radio = RadioConfig(tx_range_m=30.0, forwarding_error_rate=0.0)
    out = deliver(0, 1, POS, radio, random.Random(1))
    assert not out.delivered and out.reason is DropReason.OUT_OF_RANGE
    assert deliver(0, 2, POS, radio, random.Random(1)).delivered
    with pytest.raises(ValueError):
        deliver(0, 0, POS, radio, random.Random(1))


def test_empirical_loss_rate():
    radio = RadioConfig(forwarding_error_rate=0.05)
    rng = random.Random(7)
    drops = sum(not deliver(0, 2, POS, radio, rng).delivered for _ in range(10_000))
    assert abs(drops / 10_000 - 0.05) <= 0.01


def test_rssi_examples():
    assert rssi_at(0.0, 1.0) == pytest.approx(-40.0)
    assert rssi_at(0.0, 7.0) - rssi_at(-10.0, 7.0) == pytest.approx(10.0)
    assert rssi_at(0.0, 10.0, 40.0, 2.0) == pytest.approx(-60.0)
    with pytest.raises(ValueError):
        rssi_at(0.0, 0.0)


def test_energy_examples():
    acct = EnergyAccount()
    assert account_energy(acct, EnergyAction.TX, 0) == 0.0
    one = account_energy(EnergyAccount(), EnergyAction.TX, 100)
    account_energy(acct, EnergyAction.TX, 100)
    account_energy(acct, EnergyAction.TX, 100)
    assert acct.total == pytest.approx(2 * one)
    model = EnergyModel(tx_current_a=0.0195)
    assert model.airtime_s(125) == pytest.approx(0.004)
    assert model.joules(EnergyAction.TX, 125) == pytest.approx(2.34e-4)
    with pytest.raises(ValueError):
        model.joules(EnergyAction.RX, -1)


def test_trace_serialisation(tmp_path):
    tr = Trace(enabled=True)
    tr.add(1_500_000, "DIS", "0xa", "*", 34, "multicast")
    path = tmp_path / "t.ndjson"
    tr.write(str(path))
    assert path.read_text() == '{"t":1.5,"kind":"DIS","src":"0xa","dst":"*","bytes":34,"outcome":"multicast"}\n'
    off = Trace()
    off.add(0, "DIS", "a", "b", 1, "x")
    assert off.records == []
