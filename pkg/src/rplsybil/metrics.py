"""Run-level metrics computed from a finished simulation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence


@dataclass
class MetricsReport:
    misdetection_rate: float
    pdr: float
    detection_latency_s: float | None
    overhead_bytes: int
    energy_j: float
    detection_ratio_timeseries: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name in ("misdetection_rate", "pdr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.overhead_bytes < 0 or self.energy_j < 0:
            raise ValueError("overhead and energy must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def misdetection_rate(verdicts: Mapping[int, bool], ground_truth: Mapping[int, bool]) -> float:
    """(FP + FN) / devices.

    Both maps go from physical device to "is malicious": `verdicts` is the final
    detector output, `ground_truth` the attacker assignment.
    """
    if not ground_truth:
        return 0.0
    wrong = sum(1 for dev, bad in ground_truth.items() if verdicts.get(dev, False) != bad)
    return wrong / len(ground_truth)


def pdr(delivered: int, originated: int) -> float:
    if originated <= 0:
        return 0.0
    if not 0 <= delivered <= originated:
        raise ValueError("delivered must lie in [0, originated]")
    return delivered / originated


def detection_latency(
    flag_times: Mapping[int, float | None], attackers: Iterable[int], attack_start: float
) -> float | None:
    """Time from the attack start until the last attacker device is flagged.

    `flag_times[d]` is when device d was first seen as malicious (None if never).
    """
    worst = -math.inf
    any_attacker = False
    for dev in attackers:
        any_attacker = True
        t = flag_times.get(dev)
        if t is None:
            return None
        worst = max(worst, t)
    if not any_attacker:
        return None
    return worst - attack_start


def first_full_detection(series: Sequence[tuple[float, float]]) -> float | None:
    for t, frac in series:
        if frac >= 1.0:
            return t
    return None
