"""Root-side message counter and node-side UID query-response evidence.

The counter watches the total number of control messages in the DODAG and raises
an alarm when it jumps. Nodes then query their neighbours' hardware identifiers
and score each claimed identity from the answers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Mapping, Sequence


class Verdict(str, Enum):
    NORMAL = "normal"
    ALARM = "alarm"


class Case(IntEnum):
    DISTINCT = 1    # different UID, different MAC
    SAME_UID = 2    # same UID behind different MACs
    LATE = 3
    ROTATE = 4


class UidType(IntEnum):
    SILICON_SERIAL = 0
    RADIO_TRANSCEIVER = 1
    PART_NUMBER = 2
    EEPROM = 3


UID_BITS = {
    UidType.SILICON_SERIAL: 48,
    UidType.RADIO_TRANSCEIVER: 16,
    UidType.PART_NUMBER: 20,
    UidType.EEPROM: 48,
}

DEFAULT_ROTATION = (UidType.SILICON_SERIAL, UidType.RADIO_TRANSCEIVER, UidType.PART_NUMBER)

POSITIVE_WEIGHT = 3
NEGATIVE_WEIGHT = 3
LATE_PENALTY = 1
SILENT_PENALTY = 2


# ---------------------------------------------------------------------------
# Control message counter


@dataclass
class MessageCounter:
    """Per-second buckets of control-message counts seen by the root."""

    window_n: float = 10.0
    th_c: float | None = None
    bucket_s: float = 1.0
    buckets: list[int] = field(default_factory=list)

    def record(self, t: float, count: int = 1) -> None:
        idx = int(t // self.bucket_s)
        if idx < len(self.buckets) - 1:
            raise ValueError("buckets are append-only")
        while len(self.buckets) <= idx:
            self.buckets.append(0)
        self.buckets[idx] += count

    def cumulative(self, t: float) -> int:
        """C_total[t]: messages in all buckets that closed at or before t."""
        idx = int(t // self.bucket_s)
        return sum(self.buckets[: max(0, min(idx, len(self.buckets)))])

    def delta(self, t: float) -> int:
        return self.cumulative(t) - self.cumulative(t - self.window_n)

    def sliding_deltas(self, start: float, stop: float, step: float | None = None) -> list[int]:
        step = step or self.bucket_s
        out = []
        t = start + self.window_n
        while t <= stop + 1e-9:
            out.append(self.delta(t))
            t += step
        return out


def counter_check(counter: MessageCounter, t: float) -> Verdict:
    if t < counter.window_n:
        raise ValueError("need at least one full window of history")
    if counter.th_c is None:
        raise ValueError("threshold not calibrated")
    return Verdict.ALARM if counter.delta(t) > counter.th_c else Verdict.NORMAL


def check_delta(delta: float, th_c: float) -> Verdict:
    return Verdict.ALARM if delta > th_c else Verdict.NORMAL


def calibrate_threshold(deltas: Sequence[float], floor: float = 0.0) -> float:
    """mean + 3 sigma of attack-free window deltas."""
    if not deltas:
        return floor
    m = sum(deltas) / len(deltas)
    var = sum((d - m) ** 2 for d in deltas) / len(deltas)
    return max(floor, m + 3.0 * math.sqrt(var))


# ---------------------------------------------------------------------------
# Piggyback wire formats (MSB first, zero pad to a whole byte)


def _pack(fields: Sequence[tuple[int, int]]) -> bytes:
    value = 0
    nbits = 0
    for width, v in fields:
        if v < 0 or v >= (1 << width):
            raise ValueError(f"value {v} does not fit in {width} bits")
        value = (value << width) | v
        nbits += width
    pad = (-nbits) % 8
    return (value << pad).to_bytes((nbits + pad) // 8, "big")


def _unpack(data: bytes, widths: Sequence[int]) -> list[int]:
    nbits = sum(widths)
    pad = (-nbits) % 8
    if len(data) != (nbits + pad) // 8:
        raise ValueError("wrong field length")
    value = int.from_bytes(data, "big") >> pad
    out = []
    for width in reversed(widths):
        out.append(value & ((1 << width) - 1))
        value >>= width
    return out[::-1]


@dataclass(frozen=True)
class QueryField:
    uid_type: int
    nonce: int

    WIDTHS = (4, 16)

    def encode(self) -> bytes:
        return _pack(list(zip(self.WIDTHS, (self.uid_type, self.nonce))))

    @classmethod
    def decode(cls, data: bytes) -> "QueryField":
        return cls(*_unpack(data, cls.WIDTHS))


@dataclass(frozen=True)
class ResponseField:
    uid_type: int
    uid: int
    nonce: int

    WIDTHS = (4, 48, 16)

    def encode(self) -> bytes:
        return _pack(list(zip(self.WIDTHS, (self.uid_type, self.uid, self.nonce))))

    @classmethod
    def decode(cls, data: bytes) -> "ResponseField":
        return cls(*_unpack(data, cls.WIDTHS))


@dataclass(frozen=True)
class LtoReportEntry:
    mac: int
    p: int
    n: int

    WIDTHS = (48, 16, 16)

    def encode(self) -> bytes:
        cap = 0xFFFF
        return _pack(list(zip(self.WIDTHS, (self.mac, min(self.p, cap), min(self.n, cap)))))

    @classmethod
    def decode(cls, data: bytes) -> "LtoReportEntry":
        return cls(*_unpack(data, cls.WIDTHS))


QUERY_BYTES = 3
RESPONSE_BYTES = 9
LTO_ENTRY_BYTES = 10


def query_targets(pending: Iterable[int], neighbours: Iterable[int], own_mac: int) -> list[int]:
    """Identities one collective query covers: the pending table plus recently
    heard neighbours, never the querier itself."""
    out = set(pending)
    out.update(neighbours)
    out.discard(own_mac)
    return sorted(out)


def response_matches(query: QueryField, response: ResponseField) -> bool:
    return response.nonce == query.nonce and response.uid_type == query.uid_type


# ---------------------------------------------------------------------------
# Evidence


@dataclass(slots=True)
class Evidence:
    p: int = 0
    n: int = 0
    uid_seen: dict[int, int] = field(default_factory=dict)  # uid_type -> uid
    last_query_t: float | None = None
    last_response_t: float | None = None
    silent_rounds: int = 0


@dataclass
class EvidenceLedger:
    """Evidence held by one observer about every identity it has queried."""

    owner: int
    entries: dict[int, Evidence] = field(default_factory=dict)
    dirty: set[int] = field(default_factory=set)

    def get(self, mac: int) -> Evidence:
        ev = self.entries.get(mac)
        if ev is None:
            ev = self.entries[mac] = Evidence()
        return ev

    def add(self, mac: int, p: int = 0, n: int = 0) -> None:
        if p < 0 or n < 0:
            raise ValueError("evidence counts only grow")
        ev = self.get(mac)
        ev.p += p
        ev.n += n
        if p or n:
            self.dirty.add(mac)

    def lto(self, mac: int) -> float | None:
        ev = self.entries.get(mac)
        return None if ev is None else compute_lto(ev.p, ev.n)

    def pop_dirty(self) -> list[int]:
        """Identities whose counts changed since the last call, sorted."""
        out = sorted(self.dirty)
        self.dirty.clear()
        return out

    def take_dirty(self) -> list[LtoReportEntry]:
        return [LtoReportEntry(m, self.entries[m].p, self.entries[m].n) for m in self.pop_dirty()]


def compute_lto(p: float, n: float) -> float | None:
    total = p + n
    if total == 0:
        return None
    return p / total


def score_pair(ledger: EvidenceLedger, u: tuple[int, int], k: tuple[int, int]) -> Case | None:
    """Score one pair of (mac, uid) answers; the same MAC twice is skipped."""
    mac_u, uid_u = u
    mac_k, uid_k = k
    same_mac = mac_u == mac_k
    same_uid = uid_u == uid_k
    if same_mac:
        return None
    if not same_uid:
        ledger.add(mac_u, p=POSITIVE_WEIGHT)
        ledger.add(mac_k, p=POSITIVE_WEIGHT)
        return Case.DISTINCT
    ledger.add(mac_u, n=NEGATIVE_WEIGHT)
    ledger.add(mac_k, n=NEGATIVE_WEIGHT)
    return Case.SAME_UID


def classify_round(responses: Mapping[int, int]) -> dict[int, Case]:
    """Case of every responding identity in one query round.

    An identity whose UID also came back under another MAC is Case 2; an
    identity that is distinguishable from at least one other responder is
    Case 1; a lone responder has nothing to be compared against.
    """
    by_uid: dict[int, int] = {}
    for uid in responses.values():
        by_uid[uid] = by_uid.get(uid, 0) + 1
    out: dict[int, Case] = {}
    if len(responses) < 2:
        return out
    for mac, uid in responses.items():
        out[mac] = Case.SAME_UID if by_uid[uid] > 1 else Case.DISTINCT
    return out


def score_round(ledger: EvidenceLedger, responses: Mapping[int, int], uid_type: int = 0) -> dict[int, Case]:
    """Apply one round's pairwise comparisons: +3 once per identity and round."""
    cases = classify_round(responses)
    dirty = ledger.dirty
    for mac, case in cases.items():
        ev = ledger.get(mac)
        ev.uid_seen[uid_type] = responses[mac]
        if case is Case.DISTINCT:
            ev.p += POSITIVE_WEIGHT
        else:
            ev.n += NEGATIVE_WEIGHT
        dirty.add(mac)
    return cases


def score_timeouts(
    ledger: EvidenceLedger, response_times: Mapping[int, float | None], th_r: float
) -> dict[int, int]:
    """Penalise late or missing answers; returns the penalty given to each MAC.

    A late answer costs 1. A missing answer costs 1 the first time and 2 from the
    second consecutive silent round on.
    """
    out = {}
    get = ledger.get
    dirty = ledger.dirty
    for mac, r in response_times.items():
        ev = get(mac)
        if r is None:
            ev.silent_rounds += 1
            pen = SILENT_PENALTY if ev.silent_rounds >= 2 else LATE_PENALTY
        else:
            ev.silent_rounds = 0
            pen = LATE_PENALTY if r > th_r else 0
        if pen:
            ev.n += pen
            dirty.add(mac)
        out[mac] = pen
    return out


def rotate_uid_type(current: int, silent: int, queried: int, rotation: Sequence[int] = DEFAULT_ROTATION) -> int:
    """Next UID type to ask for after a round with `silent` of `queried` unanswered."""
    if queried <= 0 or 2 * silent <= queried:
        return current
    idx = list(rotation).index(current)
    if idx + 1 >= len(rotation):
        return current
    return rotation[idx + 1]


def unique_uids(values: Iterable[int]) -> int:
    return len(set(values))
