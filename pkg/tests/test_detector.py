import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplsybil import detector as det
from rplsybil.detector import (
    Case,
    EvidenceLedger,
    LtoReportEntry,
    MessageCounter,
    QueryField,
    ResponseField,
    Verdict,
    calibrate_threshold,
    check_delta,
    compute_lto,
    counter_check,
    query_targets,
    response_matches,
    rotate_uid_type,
    score_pair,
    score_round,
    score_timeouts,
)


def counter_with(cum_at: dict[int, int], n=10) -> MessageCounter:
    """A counter whose cumulative count equals cum_at[t] at the given seconds."""
    c = MessageCounter(window_n=n)
    last = 0
    for t in sorted(cum_at):
        c.record(t - 1, cum_at[t] - last)
        last = cum_at[t]
    return c


def test_counter_examples():
    c = counter_with({10: 35, 20: 40})
    c.th_c = 10
    assert c.delta(20) == 5
    assert counter_check(c, 20) is Verdict.NORMAL
    flat = counter_with({10: 35, 20: 35})
    flat.th_c = 0.5
    assert counter_check(flat, 20) is Verdict.NORMAL
    assert check_delta(11, 10) is Verdict.ALARM
    assert check_delta(10, 10) is Verdict.NORMAL


def test_counter_preconditions():
    c = MessageCounter(window_n=10)
    c.record(3.0)
    with pytest.raises(ValueError):
        counter_check(c, 5.0)
    with pytest.raises(ValueError):
        counter_check(c, 12.0)
    c.record(8.0)
    with pytest.raises(ValueError):
        c.record(2.0)  # append-only


def test_calibration_is_mean_plus_three_sigma_with_floor():
    assert calibrate_threshold([4, 6]) == pytest.approx(5 + 3 * 1)
    assert calibrate_threshold([1, 1, 1], floor=25) == 25
    assert calibrate_threshold([], floor=7) == 7


def test_wire_formats_are_bit_exact():
    q = QueryField(2, 0xBEEF)
    raw = q.encode()
    assert len(raw) == det.QUERY_BYTES
    assert raw == bytes([0x2B, 0xEE, 0xF0])
    assert QueryField.decode(raw) == q
    r = ResponseField(1, 0x0123456789AB, 7)
    assert len(r.encode()) == det.RESPONSE_BYTES
    assert ResponseField.decode(r.encode()) == r
    e = LtoReportEntry(0x00124B000001, 9, 3)
    assert len(e.encode()) == det.LTO_ENTRY_BYTES
    assert LtoReportEntry.decode(e.encode()) == e
    with pytest.raises(ValueError):
        QueryField(16, 0).encode()


def test_response_must_echo_nonce_and_type():
    q = QueryField(1, 42)
    assert response_matches(q, ResponseField(1, 5, 42))
    assert not response_matches(q, ResponseField(1, 5, 41))
    assert not response_matches(q, ResponseField(2, 5, 42))


def test_collective_query_targets():
    s1, s2, h1, me = 0xA1, 0xA2, 0x11, 0x99
    assert query_targets([s1, s2], [h1], me) == [h1, s1, s2]
    assert query_targets([], [], me) == []
    assert query_targets([s1], [s1, me], me) == [s1]


def test_score_pair_cases():
    led = EvidenceLedger(owner=1)
    assert score_pair(led, (0xA, 101), (0xB, 202)) is Case.DISTINCT
    assert (led.entries[0xA].p, led.entries[0xB].p) == (3, 3)
    assert score_pair(led, (0xC, 7), (0xD, 7)) is Case.SAME_UID
    assert (led.entries[0xC].n, led.entries[0xD].n) == (3, 3)
    assert score_pair(led, (0xA, 101), (0xA, 101)) is None
    assert led.entries[0xA].p == 3


def test_score_round_adds_three_once_per_identity():
    led = EvidenceLedger(owner=1)
    cases = score_round(led, {0x1: 11, 0x2: 22, 0x3: 33})
    assert set(cases.values()) == {Case.DISTINCT}
    assert [led.entries[m].p for m in (1, 2, 3)] == [3, 3, 3]
    led = EvidenceLedger(owner=1)
    score_round(led, {0x1: 5, 0x2: 5, 0x3: 5})
    assert [led.entries[m].n for m in (1, 2, 3)] == [3, 3, 3]
    led = EvidenceLedger(owner=1)
    score_round(led, {0x1: 5})  # nothing to compare against
    assert led.entries == {}


def test_timeouts():
    th = 2.0
    led = EvidenceLedger(owner=1)
    assert score_timeouts(led, {0x5: 1.5 * th}, th) == {0x5: 1}
    assert score_timeouts(led, {0x6: 0.5 * th}, th) == {0x6: 0}
    assert score_timeouts(led, {0x7: None}, th) == {0x7: 1}
    assert score_timeouts(led, {0x7: None}, th) == {0x7: 2}
    assert led.entries[0x7].n == 3
    # an answer resets the silence streak
    score_timeouts(led, {0x7: 0.1}, th)
    assert score_timeouts(led, {0x7: None}, th) == {0x7: 1}


def test_rotation():
    first, second, third = det.DEFAULT_ROTATION
    assert rotate_uid_type(first, 3, 4) == second
    assert rotate_uid_type(first, 2, 4) == first
    assert rotate_uid_type(first, 0, 4) == first
    assert rotate_uid_type(third, 4, 4) == third  # exhausted
    assert rotate_uid_type(first, 0, 0) == first


def test_lto():
    assert compute_lto(3, 0) == 1.0
    assert compute_lto(3, 3) == 0.5
    assert compute_lto(6, 3) == pytest.approx(2 / 3)
    assert compute_lto(0, 0) is None


def test_ledger_rejects_negative_increments_and_tracks_dirty():
    led = EvidenceLedger(owner=1)
    with pytest.raises(ValueError):
        led.add(5, p=-1)
    led.add(5, p=3)
    led.add(4, n=1)
    assert [e.mac for e in led.take_dirty()] == [4, 5]
    assert led.take_dirty() == []


@settings(max_examples=80, deadline=None)
@given(st.lists(st.dictionaries(st.integers(1, 8), st.integers(0, 3), max_size=6), max_size=6))
def test_ledger_counts_are_monotone_and_lto_bounded(rounds):
    led = EvidenceLedger(owner=0)
    before = {}
    for resp in rounds:
        score_round(led, resp)
        score_timeouts(led, {m: None for m in range(1, 9) if m not in resp}, 2.0)
        for m, ev in led.entries.items():
            p0, n0 = before.get(m, (0, 0))
            assert ev.p >= p0 and ev.n >= n0
            lto = compute_lto(ev.p, ev.n)
            assert lto is None or 0.0 <= lto <= 1.0
            before[m] = (ev.p, ev.n)
