"""Discrete-event engine, radio model and energy accounting.

Time is kept as integer microseconds so that runs are bit-for-bit reproducible
on any platform. Everything random is drawn from streams handed in by the caller.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

US_PER_S = 1_000_000


def to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S


class CausalityError(ValueError):
    """Raised when an event is scheduled in the past."""


class SimClock:
    """Event queue plus the current simulated time.

    Events with equal timestamps run in the order they were scheduled.
    """

    def __init__(self) -> None:
        self.now_us = 0
        self._queue: list[tuple[int, int, Callable[..., Any], tuple]] = []
        self._next_id = 0

    @property
    def now(self) -> float:
        return self.now_us / US_PER_S

    def schedule(self, at: float, fn: Callable[..., Any], *args: Any) -> int:
        return self.schedule_us(to_us(at), fn, *args)

    def schedule_us(self, at_us: int, fn: Callable[..., Any], *args: Any) -> int:
        if at_us < self.now_us:
            raise CausalityError(f"event at {at_us}us is before now={self.now_us}us")
        eid = self._next_id
        self._next_id += 1
        heapq.heappush(self._queue, (at_us, eid, fn, args))
        return eid

    def after_us(self, delay_us: int, fn: Callable[..., Any], *args: Any) -> int:
        return self.schedule_us(self.now_us + delay_us, fn, *args)

    def __len__(self) -> int:
        return len(self._queue)

    def run(self, until: float | None = None) -> None:
        limit = None if until is None else to_us(until)
        queue = self._queue
        pop = heapq.heappop
        while queue:
            if limit is not None and queue[0][0] > limit:
                break
            t, _, fn, args = pop(queue)
            self.now_us = t
            fn(*args)
        if limit is not None and self.now_us < limit:
            self.now_us = limit


@dataclass
class RadioConfig:
    tx_range_m: float = 30.0
    forwarding_error_rate: float = 0.05
    path_loss_exponent: float = 2.0
    ref_loss_db: float = 40.0
    tx_power_dbm: float = 0.0
    shadowing_sigma_db: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.forwarding_error_rate <= 1.0:
            raise ValueError("forwarding_error_rate must lie in [0, 1]")
        if self.tx_range_m <= 0:
            raise ValueError("tx_range_m must be positive")


class DropReason(str, Enum):
    OUT_OF_RANGE = "out_of_range"
    LOSS = "loss"


@dataclass(frozen=True)
class DeliveryOutcome:
    delivered: bool
    reason: DropReason | None = None
    rx_time: float | None = None
    rssi_dbm: float | None = None


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def rssi_at(
    tx_power_dbm: float,
    distance_m: float,
    ref_loss_db: float = 40.0,
    path_loss_exponent: float = 2.0,
    shadowing_db: float = 0.0,
) -> float:
    """Log-distance path loss; `shadowing_db` is an already-drawn noise sample."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return tx_power_dbm - ref_loss_db - 10.0 * path_loss_exponent * math.log10(distance_m) + shadowing_db


def deliver(
    tx: int,
    rx: int,
    positions: "list[tuple[float, float]]",
    radio: RadioConfig,
    rng: random.Random,
    now: float = 0.0,
    tx_power_dbm: float | None = None,
    shadow_rng: random.Random | None = None,
) -> DeliveryOutcome:
    """Unit-disk reachability followed by an independent Bernoulli loss."""
    if tx == rx:
        raise ValueError("tx and rx must differ")
    d = distance(positions[tx], positions[rx])
    if d > radio.tx_range_m:
        return DeliveryOutcome(False, DropReason.OUT_OF_RANGE)
    if rng.random() < radio.forwarding_error_rate:
        return DeliveryOutcome(False, DropReason.LOSS)
    power = radio.tx_power_dbm if tx_power_dbm is None else tx_power_dbm
    noise = shadow_rng.gauss(0.0, radio.shadowing_sigma_db) if shadow_rng is not None else 0.0
    # co-located devices are clamped to 1 mm so the log term stays finite
    rssi = rssi_at(power, max(d, 1e-3), radio.ref_loss_db, radio.path_loss_exponent, noise)
    return DeliveryOutcome(True, None, now, rssi)


# ---------------------------------------------------------------------------
# Energy


class EnergyAction(str, Enum):
    TX = "tx"
    RX = "rx"
    IDLE = "idle"


@dataclass(frozen=True)
class EnergyModel:
    """CC2420-class radio constants (Tmote Sky)."""

    tx_current_a: float = 0.0174
    rx_current_a: float = 0.0188
    idle_current_a: float = 0.0
    voltage_v: float = 3.0
    bitrate_bps: float = 250_000.0

    def airtime_s(self, nbytes: float) -> float:
        return nbytes * 8.0 / self.bitrate_bps

    def joules(self, action: EnergyAction, amount: float) -> float:
        """`amount` is bytes for TX/RX and seconds for IDLE."""
        if amount < 0:
            raise ValueError("amount must be non-negative")
        if action is EnergyAction.TX:
            return self.tx_current_a * self.voltage_v * self.airtime_s(amount)
        if action is EnergyAction.RX:
            return self.rx_current_a * self.voltage_v * self.airtime_s(amount)
        return self.idle_current_a * self.voltage_v * amount


@dataclass
class EnergyAccount:
    tx_joules: float = 0.0
    rx_joules: float = 0.0
    idle_joules: float = 0.0

    @property
    def total(self) -> float:
        return self.tx_joules + self.rx_joules + self.idle_joules


def account_energy(
    account: EnergyAccount, action: EnergyAction, amount: float, model: EnergyModel = EnergyModel()
) -> float:
    joules = model.joules(action, amount)
    if action is EnergyAction.TX:
        account.tx_joules += joules
    elif action is EnergyAction.RX:
        account.rx_joules += joules
    else:
        account.idle_joules += joules
    return joules


# ---------------------------------------------------------------------------
# Trace


@dataclass
class TraceRecord:
    t: float
    kind: str
    src: str
    dst: str
    bytes: int
    outcome: str

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "kind": self.kind, "src": self.src, "dst": self.dst,
             "bytes": self.bytes, "outcome": self.outcome},
            separators=(",", ":"),
        )


@dataclass
class Trace:
    enabled: bool = False
    records: list[TraceRecord] = field(default_factory=list)

    def add(self, t_us: int, kind: str, src: str, dst: str, nbytes: int, outcome: str) -> None:
        if self.enabled:
            self.records.append(TraceRecord(round(t_us / US_PER_S, 6), kind, src, dst, nbytes, outcome))

    def lines(self) -> Iterable[str]:
        for rec in self.records:
            yield rec.to_json()

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")
