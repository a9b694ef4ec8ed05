import pytest
from hypothesis import given
from hypothesis import strategies as st

from rplsybil.metrics import MetricsReport, detection_latency, first_full_detection, misdetection_rate, pdr


def test_misdetection_counts_false_positives_and_negatives():
    truth = {1: False, 2: False, 3: True, 4: True}
    assert misdetection_rate({3: True, 4: True}, truth) == 0.0
    assert misdetection_rate({1: True, 3: True}, truth) == 0.5
    assert misdetection_rate({}, {}) == 0.0


def test_pdr():
    assert pdr(9, 10) == 0.9
    assert pdr(0, 0) == 0.0
    with pytest.raises(ValueError):
        pdr(11, 10)


def test_latency():
    assert detection_latency({3: 700.0, 4: 750.0}, [3, 4], 600.0) == 150.0
    assert detection_latency({3: 700.0, 4: None}, [3, 4], 600.0) is None
    assert detection_latency({}, [], 600.0) is None
    assert first_full_detection([(630.0, 0.5), (660.0, 1.0), (690.0, 1.0)]) == 660.0
    assert first_full_detection([(630.0, 0.5)]) is None


def test_report_validates_ranges():
    with pytest.raises(ValueError):
        MetricsReport(1.5, 0.5, None, 0, 0.0)
    with pytest.raises(ValueError):
        MetricsReport(0.5, 0.5, None, -1, 0.0)
    assert MetricsReport(0.0, 1.0, 3.0, 10, 0.1).to_dict()["overhead_bytes"] == 10


@given(st.dictionaries(st.integers(0, 30), st.booleans()), st.dictionaries(st.integers(0, 30), st.booleans()))
def test_misdetection_in_unit_interval(verdicts, truth):
    assert 0.0 <= misdetection_rate(verdicts, truth) <= 1.0
