"""Scenario configuration and its key-value file format.

A config file holds one ``key = value`` pair per line; ``#`` starts a comment.
Keys are the field names of :class:`ScenarioConfig`; attacker settings use the
``attacker.`` prefix (e.g. ``attacker.dis_rate_hz = 2``). Lists are
comma-separated. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .adversary import AttackerConfig, QueryBehavior


class Defense(str, Enum):
    UITRUST = "UITrust"
    RSSI_PROFILE = "RssiProfile"
    ID_COUNT = "IdCount"
    NONE_MRHOF = "NoneMrhof"

    @classmethod
    def parse(cls, text: str) -> "Defense":
        for d in cls:
            if d.value.lower() == text.strip().lower():
                return d
        raise ConfigError(f"unknown defense {text!r}")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    node_count: int = 100
    sybil_ratio: float = 0.0
    query_interval_s: float = 30.0
    forwarding_error_rate: float = 0.05
    tx_range_m: float = 30.0
    duration_s: float = 3600.0
    seed: int = 0
    defense: Defense = Defense.UITRUST
    gamma: float = 0.5
    theta: float = 0.5
    lam: float = 0.5
    cut_distance: float = 0.3
    cr_reference: str = "subject"
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    data_period_s: float = 60.0
    data_payload_bytes: int = 30

    # timeline
    attack_start_s: float = 600.0
    calibration_start_s: float = 300.0
    # detector
    window_n_s: float = 10.0
    th_r_s: float = 2.0
    th_c_floor_per_node: float = 0.25
    # trickle / RPL
    trickle_i_min_s: float = 4.0
    trickle_doublings: int = 8
    trickle_k: int = 10
    rank_hysteresis: float = 64.0
    candidate_capacity: int = 32
    pending_capacity: int = 64
    # radio / placement
    path_loss_exponent: float = 2.0
    ref_loss_db: float = 40.0
    shadowing_sigma_db: float = 2.0
    target_degree: float = 14.0
    field_side_m: float = 0.0  # 0 derives the side from target_degree
    # baselines
    eps_rssi_db: float = 3.0
    rssi_window_s: float = 10.0
    rssi_min_common_observers: int = 4
    idcount_window_s: float = 60.0
    idcount_rate_factor: float = 3.0
    # experiments
    forced_uid_collision: bool = False
    trace: bool = False
    scenario_id: str = "default"

    def __post_init__(self) -> None:
        if isinstance(self.defense, str):
            self.defense = Defense.parse(self.defense)
        if self.node_count < 1:
            raise ConfigError("node_count must be >= 1")
        if not 0.0 <= self.sybil_ratio <= 1.0:
            raise ConfigError("sybil_ratio must lie in [0, 1]")
        for name in ("gamma", "theta", "lam"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if not 0.0 <= self.forwarding_error_rate <= 1.0:
            raise ConfigError("forwarding_error_rate must lie in [0, 1]")

    @property
    def attacker_count(self) -> int:
        return int(round(self.sybil_ratio * self.node_count))

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "attacker":
                for af in dataclasses.fields(v):
                    av = getattr(v, af.name)
                    out[f"attacker.{af.name}"] = av.value if isinstance(av, Enum) else av
            else:
                out[f.name] = v.value if isinstance(v, Enum) else v
        return out


def _coerce(text: str, current: Any, key: str) -> Any:
    text = text.strip()
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, Enum):
            if isinstance(current, Defense):
                return Defense.parse(text)
            return type(current)(text.lower())
        if isinstance(current, int):
            return int(text, 0)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            return tuple(float(x) for x in text.split(",") if x.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    cfg = base or ScenarioConfig()
    top: dict[str, Any] = {}
    att: dict[str, Any] = {}
    top_fields = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"attacker"}
    att_fields = {f.name for f in dataclasses.fields(AttackerConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("attacker."):
            name = key[len("attacker."):]
            if name not in att_fields:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            att[name] = _coerce(value, getattr(cfg.attacker, name), key)
        elif key in top_fields:
            top[key] = _coerce(value, getattr(cfg, key), key)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    try:
        attacker = dataclasses.replace(cfg.attacker, **att)
        return dataclasses.replace(cfg, attacker=attacker, **top)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ConfigError", "Defense", "ScenarioConfig", "QueryBehavior",
    "parse_config", "load_config", "dump_config",
]
