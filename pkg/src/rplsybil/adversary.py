"""Power-controlled Sybil attacker."""

from __future__ import annotations

import random
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum


class QueryBehavior(str, Enum):
    ANSWER = "answer"
    DELAY = "delay"
    IGNORE = "ignore"
    ANSWER_THEN_IGNORE_ALT_UID = "answer_then_ignore_alt_uid"


@dataclass
class AttackerConfig:
    dis_rate_hz: float = 1.0
    mac_pool_size: int = 2 ** 16
    identity_switch_period_s: float = 10.0
    power_levels_dbm: tuple[float, ...] = (-10.0, -5.0, 0.0)
    query_behavior: QueryBehavior = QueryBehavior.ANSWER
    delay_factor: float = 1.5
    ignore_prob: float = 1.0
    # identities used within this window are still answered for
    answer_window_s: float = 60.0

    def __post_init__(self) -> None:
        if self.mac_pool_size < 1:
            raise ValueError("mac_pool_size must be >= 1")
        if self.dis_rate_hz <= 0:
            raise ValueError("dis_rate_hz must be positive")
        if not self.power_levels_dbm:
            raise ValueError("power_levels_dbm must not be empty")
        self.query_behavior = QueryBehavior(self.query_behavior)
        self.power_levels_dbm = tuple(float(p) for p in self.power_levels_dbm)


@dataclass
class NodeIdentity:
    uid: int
    mac: int
    tx_power_dbm: float = 0.0

    def __setattr__(self, name, value):
        if name == "uid" and "uid" in self.__dict__:
            raise AttributeError("a device UID is immutable")
        super().__setattr__(name, value)


@dataclass
class Attacker:
    """One compromised physical device.

    MACs are drawn from ``mac_base + [0, mac_pool_size)`` so pools of distinct
    attackers never overlap with each other or with honest addresses.
    """

    device: int
    identity: NodeIdentity
    config: AttackerConfig
    mac_base: int
    used: set[int] = field(default_factory=set)
    history: OrderedDict = field(default_factory=OrderedDict)  # mac -> last use (s)
    reused: int = 0
    switches: int = 0
    active: bool = False
    last_switch: float = 0.0
    primary_uid_type: int | None = None

    def next_fake_identity(self, rng: random.Random, now: float = 0.0) -> tuple[int, float]:
        cfg = self.config
        if len(self.used) >= cfg.mac_pool_size:
            self.reused += 1
            mac = self.mac_base + rng.randrange(cfg.mac_pool_size)
        else:
            while True:
                mac = self.mac_base + rng.randrange(cfg.mac_pool_size)
                if mac not in self.used:
                    break
        self.used.add(mac)
        levels = cfg.power_levels_dbm
        if len(levels) > 1 and self.switches > 0:
            # never repeat the previous level: consecutive identities must not
            # share an RSSI signature
            choices = [p for p in levels if p != self.identity.tx_power_dbm] or list(levels)
        else:
            choices = list(levels)
        power = choices[rng.randrange(len(choices))]
        self.identity.mac = mac
        self.identity.tx_power_dbm = power
        self.switches += 1
        self.last_switch = now
        self.touch(now)
        return mac, power

    def touch(self, now: float) -> None:
        mac = self.identity.mac
        self.history.pop(mac, None)
        self.history[mac] = now

    def attack_tick(self, now: float, rng: random.Random) -> list[int]:
        """MACs of DIS frames to emit at `now` (one tick = one flood instant)."""
        if not self.active:
            return []
        if self.switches == 0 or now - self.last_switch >= self.config.identity_switch_period_s - 1e-9:
            self.next_fake_identity(rng, now)
        self.touch(now)
        return [self.identity.mac]

    def recent_identities(self, now: float) -> list[int]:
        horizon = now - self.config.answer_window_s
        return [mac for mac, t in self.history.items() if t >= horizon]

    def respond_to_query(self, uid_type: int, th_r: float, rng: random.Random) -> float | None:
        """Delay in seconds before answering, or None to stay silent."""
        cfg = self.config
        b = cfg.query_behavior
        if b is QueryBehavior.ANSWER:
            return 0.0
        if b is QueryBehavior.DELAY:
            return cfg.delay_factor * th_r
        if b is QueryBehavior.IGNORE:
            return None if rng.random() < cfg.ignore_prob else 0.0
        if self.primary_uid_type is None:
            self.primary_uid_type = uid_type
        return 0.0 if uid_type == self.primary_uid_type else None


def simulate_flood(attacker: Attacker, start: float, stop: float, rng: random.Random) -> list[tuple[float, int]]:
    """Standalone flood schedule: (time, mac) of every DIS in [start, stop)."""
    out = []
    period = 1.0 / attacker.config.dis_rate_hz
    attacker.active = True
    k = 0
    while True:
        t = start + k * period
        if t >= stop - 1e-12:
            break
        for mac in attacker.attack_tick(t, rng):
            out.append((t, mac))
        k += 1
    return out
