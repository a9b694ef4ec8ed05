import numpy as np
import pytest

from rplsybil.baselines import (
    IdCountTracker,
    RssiStats,
    co_observed,
    id_count_detect,
    id_count_threshold,
    rssi_profile_detect,
    similar_pairs,
)


def stats(t0: float, t1: float, rssi: float, frames: int = 5) -> RssiStats:
    s = RssiStats()
    for k in range(frames):
        s.add(t0 + (t1 - t0) * k / max(1, frames - 1), rssi)
    return s


def test_co_observation_window():
    assert co_observed(stats(0, 5, -60), stats(12, 20, -60), 10.0)
    assert not co_observed(stats(0, 5, -60), stats(16, 20, -60), 10.0)


def test_same_power_identities_merge_distinct_powers_do_not():
    hist = {
        1: {10: stats(0, 9, -60.0), 11: stats(10, 19, -61.0), 12: stats(0, 19, -70.0)},
        2: {10: stats(0, 9, -55.0), 11: stats(10, 19, -54.0), 12: stats(0, 19, -54.5)},
    }
    assert similar_pairs(hist, 3.0, 10.0) == [(10, 11)]
    assert rssi_profile_detect(hist, 3.0, 10.0) == {10, 11}
    # a second observer is required when asked for
    assert rssi_profile_detect({1: hist[1]}, 3.0, 10.0, min_common=2) == set()


def test_one_disagreeing_observer_vetoes_a_merge():
    hist = {
        1: {10: stats(0, 9, -60.0), 11: stats(10, 19, -60.0)},
        2: {10: stats(0, 9, -50.0), 11: stats(10, 19, -70.0)},
    }
    assert rssi_profile_detect(hist, 3.0, 10.0) == set()


def test_since_filter_ignores_old_identities():
    hist = {1: {10: stats(0, 9, -60.0), 11: stats(100, 109, -60.0), 12: stats(100, 109, -60.5)}}
    assert rssi_profile_detect(hist, 3.0, 200.0, since=50.0) == {11, 12}


def test_lazy_shadowing_preserves_the_mean_distribution():
    rng = np.random.default_rng(0)
    means = []
    for _ in range(4000):
        s = RssiStats()
        for k in range(9):
            s.add(k, -60.0)
            s.pending += 1
        s.settle(2.0, rng)
        means.append(s.mean)
    assert np.mean(means) == pytest.approx(-60.0, abs=0.05)
    assert np.std(means) == pytest.approx(2.0 / 3.0, rel=0.05)


def test_id_count_threshold_and_detection():
    assert id_count_threshold(4.0, 60.0) == 45.0
    times = {1: [k * 1.0 for k in range(100)], 2: [k * 4.0 for k in range(100)]}
    assert id_count_detect(times, 60.0, 45.0) == {1}


def test_streaming_tracker_matches_batch():
    rng = np.random.default_rng(5)
    events = sorted((float(t), int(m)) for t, m in zip(rng.uniform(0, 300, 600), rng.integers(0, 6, 600)))
    tr = IdCountTracker(30.0, 12)
    for t, m in events:
        tr.observe(m, t)
    times: dict[int, list[float]] = {}
    for t, m in events:
        times.setdefault(m, []).append(t)
    assert tr.flagged == id_count_detect(times, 30.0, 12)
