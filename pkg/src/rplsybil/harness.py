"""Single runs, seed sweeps and result export."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .metrics import MetricsReport, first_full_detection, misdetection_rate, pdr
from .netsim import EnergyAction
from .scenario import Defense, ScenarioConfig
from .simulation import Network

COLUMNS = (
    "scenario_id", "seed", "defense", "sybil_ratio", "misdetection_rate", "pdr",
    "detection_latency_s", "overhead_bytes", "energy_j",
)


@dataclass
class RunResult:
    config: ScenarioConfig
    report: MetricsReport
    network: Network

    def row(self) -> dict:
        r = self.report
        return {
            "scenario_id": self.config.scenario_id,
            "seed": self.config.seed,
            "defense": self.config.defense.value,
            "sybil_ratio": self.config.sybil_ratio,
            "misdetection_rate": r.misdetection_rate,
            "pdr": r.pdr,
            "detection_latency_s": r.detection_latency_s,
            "overhead_bytes": r.overhead_bytes,
            "energy_j": r.energy_j,
        }


def build_report(net: Network) -> MetricsReport:
    cfg = net.cfg
    truth = {d.idx: not d.honest for d in net.devices[1:]}
    verdicts = net.device_verdicts()
    energy = 0.0
    for d in net.devices:
        energy += net.energy.joules(EnergyAction.TX, d.tx_bytes) + net.energy.joules(EnergyAction.RX, d.rx_bytes)
    latency = None
    if net.attacker_devs and cfg.defense is not Defense.NONE_MRHOF:
        t = first_full_detection(net.detect_series)
        if t is not None:
            latency = max(0.0, t - cfg.attack_start_s)
    return MetricsReport(
        misdetection_rate=misdetection_rate(verdicts, truth),
        pdr=pdr(net.stats.data_delivered, net.stats.data_originated),
        detection_latency_s=latency,
        overhead_bytes=net.stats.control_bytes,
        energy_j=energy,
        detection_ratio_timeseries=list(net.detect_series),
    )


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    net = Network(cfg).run()
    return RunResult(cfg, build_report(net), net)


def sweep(
    base: ScenarioConfig, seeds: Iterable[int], ratios: Sequence[float], defenses: Sequence[Defense]
) -> list[RunResult]:
    """Every (ratio, defense, seed) combination, in that nesting order."""
    out = []
    seeds = list(seeds)
    for ratio in ratios:
        for defense in defenses:
            for seed in seeds:
                cfg = base.replace(sybil_ratio=ratio, defense=defense, seed=seed)
                out.append(run_scenario(cfg))
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(round(value, 12))
    return str(value)


def sort_rows(rows: Iterable[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: (str(r["scenario_id"]), float(r["sybil_ratio"]), str(r["defense"]), int(r["seed"])))


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def rows_to_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps({c: r[c] for c in COLUMNS}, separators=(",", ":")) + "\n" for r in rows)


def export(rows: Iterable[dict], path: str, fmt: str = "csv") -> None:
    """Write rows in the order given. Raises OSError on an unwritable path."""
    rows = list(rows)
    if fmt == "csv":
        text = rows_to_csv(rows)
    elif fmt == "jsonl":
        text = rows_to_jsonl(rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_rows(path: str) -> list[dict]:
    """Rows back from a CSV or JSONL file written by :func:`export`."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".jsonl"):
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({
            "scenario_id": r["scenario_id"],
            "seed": int(r["seed"]),
            "defense": r["defense"],
            "sybil_ratio": float(r["sybil_ratio"]),
            "misdetection_rate": float(r["misdetection_rate"]),
            "pdr": float(r["pdr"]),
            "detection_latency_s": float(r["detection_latency_s"]) if r["detection_latency_s"] else None,
            "overhead_bytes": int(r["overhead_bytes"]),
            "energy_j": float(r["energy_j"]),
        })
    return rows
