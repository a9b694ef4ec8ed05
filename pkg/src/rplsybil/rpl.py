"""RPL control plane: control frames, trickle, ETX and MRHOF parent selection."""

from __future__ import annotations

import math
import random
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from .netsim import US_PER_S


class Kind(str, Enum):
    DIS = "DIS"
    DIO = "DIO"
    DAO = "DAO"


CONTROL_KINDS = frozenset(k.value for k in Kind)

# MAC header + FCS (21) + compressed IPv6/ICMPv6 (11) + message body
BASE_BYTES = {Kind.DIS: 34, Kind.DIO: 72, Kind.DAO: 62}
DATA_BYTES = 21 + 7 + 8 + 30

INFINITE_RANK = 0xFFFF
ROOT_RANK = 256
RANK_UNIT = 128


@dataclass
class ControlMessage:
    kind: Kind
    src_mac: int
    rank: int | None = None
    piggyback: Any = None
    alarm: bool = False
    extra_bytes: int = 0

    def __post_init__(self) -> None:
        if self.piggyback is not None and self.kind is Kind.DIS:
            raise ValueError("DIS frames carry no piggyback")
        if self.kind is not Kind.DIO and (self.alarm or self.rank is not None):
            raise ValueError("rank and alarm flag exist only on DIO")

    @property
    def bytes(self) -> int:
        return BASE_BYTES[self.kind] + self.extra_bytes


# ---------------------------------------------------------------------------
# Trickle


@dataclass(slots=True)
class TrickleTimer:
    i_min: float = 4.0
    i_max_doublings: int = 8
    redundancy_k: int = 10
    current_interval: float = 4.0
    counter: int = 0
    interval_start_us: int = 0
    fire_at_us: int = 0
    end_at_us: int = 0
    generation: int = 0

    def __post_init__(self) -> None:
        self.current_interval = self.i_min

    @property
    def i_max(self) -> float:
        return self.i_min * (2 ** self.i_max_doublings)

    def _begin(self, now_us: int, rng: random.Random) -> None:
        self.counter = 0
        self.generation += 1
        span = int(self.current_interval * US_PER_S)
        self.interval_start_us = now_us
        self.fire_at_us = now_us + span // 2 + int(rng.random() * (span - span // 2))
        self.end_at_us = now_us + span

    def start(self, now_us: int, rng: random.Random) -> None:
        self.current_interval = self.i_min
        self._begin(now_us, rng)

    def on_inconsistent(self, now_us: int, rng: random.Random) -> bool:
        """Reset to the minimum interval. Returns False when already there.

        At i_min the reset is a no-op so that a steady stream of resets cannot
        postpone the pending transmission forever.
        """
        if self.current_interval <= self.i_min:
            return False
        self.current_interval = self.i_min
        self._begin(now_us, rng)
        return True

    def on_consistent(self) -> None:
        self.counter += 1

    def should_transmit(self) -> bool:
        return self.counter < self.redundancy_k

    def on_interval_end(self, now_us: int, rng: random.Random) -> None:
        self.current_interval = min(self.current_interval * 2, self.i_max)
        self._begin(now_us, rng)


def trickle_on_inconsistent(timer: TrickleTimer, now_us: int = 0, rng: random.Random | None = None) -> bool:
    return timer.on_inconsistent(now_us, rng or random.Random(0))


# ---------------------------------------------------------------------------
# Link estimation


@dataclass(slots=True)
class LinkStats:
    d_fwd: float = 1.0
    d_rev: float = 1.0
    alpha: float = 0.2
    last_seq: int | None = None

    def observe_fwd(self, success: bool) -> None:
        self.d_fwd = (1 - self.alpha) * self.d_fwd + self.alpha * (1.0 if success else 0.0)

    def observe_rev(self, success: bool) -> None:
        self.d_rev = (1 - self.alpha) * self.d_rev + self.alpha * (1.0 if success else 0.0)

    def observe_seq(self, seq: int) -> None:
        """Reverse-direction estimate from gaps in the neighbour's DIO sequence."""
        if self.last_seq is not None and seq > self.last_seq:
            for _ in range(min(seq - self.last_seq - 1, 8)):
                self.observe_rev(False)
        self.observe_rev(True)
        self.last_seq = seq

    @property
    def etx(self) -> float:
        return compute_etx(self)


def compute_etx(stats: LinkStats) -> float:
    if stats.d_fwd <= 0 or stats.d_rev <= 0:
        return math.inf
    return 1.0 / (stats.d_fwd * stats.d_rev)


# ---------------------------------------------------------------------------
# MRHOF


def path_rank(parent_rank: float, etx: float, rank_unit: int = RANK_UNIT) -> float:
    if math.isinf(etx) or parent_rank >= INFINITE_RANK:
        return math.inf
    return parent_rank + etx * rank_unit


def mrhof_select_parent(
    candidates: Mapping[int, tuple[float, float]],
    current: int | None = None,
    rank_unit: int = RANK_UNIT,
    hysteresis: float = 64.0,
) -> int | None:
    """Pick a parent from ``{mac: (advertised_rank, etx)}``.

    Returns None when no candidate offers a finite path (the node detaches).
    """
    best = None
    best_cost = math.inf
    for mac in sorted(candidates):
        rank, etx = candidates[mac]
        cost = path_rank(rank, etx, rank_unit)
        if cost < best_cost:
            best, best_cost = mac, cost
    if best is None:
        return None
    if current is not None and current in candidates and current != best:
        cur_cost = path_rank(*candidates[current], rank_unit)
        if not math.isinf(cur_cost) and cur_cost - best_cost < hysteresis:
            return current
    return best


# ---------------------------------------------------------------------------
# Per-node DODAG state


class Mode(str, Enum):
    NORMAL = "normal"
    ATTACK_DETECTION = "attack_detection"


class Action(str, Enum):
    TRICKLE_RESET = "trickle_reset"
    EMIT_DIO = "emit_dio"
    PENDING_ADD = "pending_add"


@dataclass(slots=True)
class Candidate:
    rank: int
    link: LinkStats = field(default_factory=LinkStats)


@dataclass
class DodagState:
    rank: int = INFINITE_RANK
    parent: int | None = None
    candidates: dict[int, Candidate] = field(default_factory=dict)
    pending_table: OrderedDict = field(default_factory=OrderedDict)
    pending_capacity: int = 64
    pending_evictions: int = 0
    mode: Mode = Mode.NORMAL

    @property
    def joined(self) -> bool:
        return self.rank < INFINITE_RANK

    def add_pending(self, mac: int) -> None:
        if mac in self.pending_table:
            return
        if len(self.pending_table) >= self.pending_capacity:
            self.pending_table.popitem(last=False)
            self.pending_evictions += 1
        self.pending_table[mac] = None


def handle_dis(state: DodagState, dis: ControlMessage) -> list[Action]:
    """Decide what a DIS triggers; the caller carries out the actions."""
    if dis.kind is not Kind.DIS:
        raise ValueError("handle_dis expects a DIS frame")
    if not state.joined:
        return []
    if state.mode is Mode.ATTACK_DETECTION:
        state.add_pending(dis.src_mac)
        return [Action.PENDING_ADD]
    return [Action.TRICKLE_RESET, Action.EMIT_DIO]
