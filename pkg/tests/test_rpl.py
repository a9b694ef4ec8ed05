import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplsybil.rpl import (
    INFINITE_RANK,
    Action,
    ControlMessage,
    DodagState,
    Kind,
    LinkStats,
    Mode,
    TrickleTimer,
    compute_etx,
    handle_dis,
    mrhof_select_parent,
    path_rank,
    trickle_on_inconsistent,
)


def dis_from(mac: int) -> ControlMessage:
    return ControlMessage(Kind.DIS, mac)


def test_reset_from_max_returns_to_min():
    tr = TrickleTimer(i_min=4.0, i_max_doublings=8)
    tr.current_interval = tr.i_max
    assert trickle_on_inconsistent(tr)
    assert tr.current_interval == 4.0


def test_reset_at_min_is_a_no_op():
    tr = TrickleTimer(i_min=4.0)
    rng = random.Random(0)
    tr.start(0, rng)
    fire = tr.fire_at_us
    assert not tr.on_inconsistent(1_000_000, rng)
    assert tr.current_interval == 4.0
    assert tr.fire_at_us == fire


def test_silent_doublings():
    tr = TrickleTimer(i_min=4.0, i_max_doublings=8)
    rng = random.Random(0)
    tr.start(0, rng)
    for _ in range(5):
        tr.on_interval_end(tr.end_at_us, rng)
    assert tr.current_interval == 4.0 * 2 ** 5
    for _ in range(10):
        tr.on_interval_end(tr.end_at_us, rng)
    assert tr.current_interval == tr.i_max


def test_fire_time_in_second_half_of_interval():
    tr = TrickleTimer(i_min=4.0)
    rng = random.Random(3)
    for _ in range(100):
        tr.start(0, rng)
        assert 2_000_000 <= tr.fire_at_us < 4_000_000


def test_redundancy_suppression():
    tr = TrickleTimer(redundancy_k=2)
    tr.on_consistent()
    assert tr.should_transmit()
    tr.on_consistent()
    assert not tr.should_transmit()


def test_handle_dis_examples():
    st_ = DodagState(rank=512)
    assert handle_dis(st_, dis_from(0xA)) == [Action.TRICKLE_RESET, Action.EMIT_DIO]
    st_.mode = Mode.ATTACK_DETECTION
    assert handle_dis(st_, dis_from(0xA)) == [Action.PENDING_ADD]
    assert list(st_.pending_table) == [0xA]
    handle_dis(st_, dis_from(0xA))
    assert list(st_.pending_table) == [0xA]
    assert handle_dis(DodagState(), dis_from(0xA)) == []


def test_pending_table_evicts_oldest():
    st_ = DodagState(rank=512, pending_capacity=2, mode=Mode.ATTACK_DETECTION)
    for mac in (1, 2, 3):
        st_.add_pending(mac)
    assert list(st_.pending_table) == [2, 3]
    assert st_.pending_evictions == 1


def test_etx_examples():
    assert compute_etx(LinkStats(1.0, 1.0)) == 1.0
    assert compute_etx(LinkStats(0.5, 1.0)) == 2.0
    assert math.isinf(compute_etx(LinkStats(0.0, 0.7)))


def test_link_estimates_are_ewma():
    link = LinkStats()
    link.observe_fwd(False)
    assert link.d_fwd == 0.8
    link.observe_seq(10)
    link.observe_seq(12)  # one DIO missed
    assert link.d_rev == pytest.approx(0.8 * 0.8 + 0.2)  # miss then hit
    assert link.last_seq == 12


def test_mrhof_examples():
    assert mrhof_select_parent({7: (256, 1.0)}) == 7
    assert mrhof_select_parent({1: (256, 1.0), 2: (128, 3.0)}) == 1
    # current path 384 vs challenger 380: inside the hysteresis band
    assert mrhof_select_parent({1: (256, 1.0), 2: (252, 1.0)}, current=1, hysteresis=64) == 1
    assert mrhof_select_parent({1: (512, 1.0), 2: (256, 1.0)}, current=1, hysteresis=64) == 2
    assert mrhof_select_parent({1: (INFINITE_RANK, 1.0)}) is None
    assert mrhof_select_parent({}) is None


def test_control_message_sizes():
    assert ControlMessage(Kind.DIO, 1, rank=256, extra_bytes=3).bytes == 75
    try:
        ControlMessage(Kind.DIS, 1, rank=256)
    except ValueError:
        pass
    else:
        raise AssertionError("DIS carries no rank")


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.integers(0, 50), st.tuples(st.integers(256, 4000), st.floats(1.0, 10.0)), min_size=1))
def test_selected_parent_has_minimal_path_rank(cands):
    best = mrhof_select_parent(cands)
    costs = {m: path_rank(r, e) for m, (r, e) in cands.items()}
    assert costs[best] == min(costs.values())
