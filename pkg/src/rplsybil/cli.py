"""Command-line entry point.

    python -m rplsybil run --config scenario.cfg --seed 7 --out run.csv [--trace run.ndjson]
    python -m rplsybil sweep --config scenario.cfg --seeds 20 --ratios 0.1,0.3,0.5 \
        --defenses UITrust,RssiProfile,IdCount,NoneMrhof --out results/
    python -m rplsybil report --in results/ --format csv [--summary]

Exit codes: 0 success, 2 configuration error, 3 topology failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import glob
import os
import statistics
import sys
from collections import defaultdict

from .harness import COLUMNS, export, read_rows, rows_to_csv, rows_to_jsonl, run_scenario, sort_rows
from .scenario import ConfigError, Defense, ScenarioConfig, load_config
from .simulation import TopologyError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TOPOLOGY = 3
EXIT_IO = 4


def _base_config(path: str | None) -> ScenarioConfig:
    return load_config(path) if path else ScenarioConfig()


def _fmt_from_path(path: str) -> str:
    return "jsonl" if path.endswith(".jsonl") else "csv"


def _parse_list(text: str, conv):
    try:
        return [conv(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from exc


def cmd_run(args) -> int:
    cfg = _base_config(args.config).replace(seed=args.seed)
    if args.trace:
        cfg = cfg.replace(trace=True)
    result = run_scenario(cfg)
    export([result.row()], args.out, _fmt_from_path(args.out))
    if args.trace:
        result.network.trace.write(args.trace)
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _base_config(args.config)
    ratios = _parse_list(args.ratios, float)
    defenses = _parse_list(args.defenses, Defense.parse)
    # validate every point before spending time on runs
    for ratio in ratios:
        base.replace(sybil_ratio=ratio)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for ratio in ratios:
        for defense in defenses:
            for seed in range(args.seeds):
                cfg = base.replace(sybil_ratio=ratio, defense=defense, seed=seed)
                rows.append(run_scenario(cfg).row())
                if args.verbose:
                    print(f"done ratio={ratio} defense={defense.value} seed={seed}", file=sys.stderr)
    rows = sort_rows(rows)
    export(rows, os.path.join(args.out, "results.csv"), "csv")
    export(rows, os.path.join(args.out, "results.jsonl"), "jsonl")
    return EXIT_OK


def summarize(rows: list[dict]) -> list[dict]:
    """Mean of every metric per (scenario, ratio, defense); latency over detected runs only."""
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for r in rows:
        groups[(r["scenario_id"], float(r["sybil_ratio"]), r["defense"])].append(r)
    out = []
    for (sid, ratio, defense), rs in sorted(groups.items()):
        lat = [r["detection_latency_s"] for r in rs if r["detection_latency_s"] is not None]
        out.append({
            "scenario_id": sid,
            "seed": len(rs),
            "defense": defense,
            "sybil_ratio": ratio,
            "misdetection_rate": statistics.fmean(r["misdetection_rate"] for r in rs),
            "pdr": statistics.fmean(r["pdr"] for r in rs),
            "detection_latency_s": statistics.fmean(lat) if lat else None,
            "overhead_bytes": int(round(statistics.fmean(r["overhead_bytes"] for r in rs))),
            "energy_j": statistics.fmean(r["energy_j"] for r in rs),
        })
    return out


def cmd_report(args) -> int:
    if not os.path.isdir(args.inp):
        raise OSError(f"{args.inp} is not a directory")
    paths = sorted(glob.glob(os.path.join(args.inp, "*.csv")))
    if not paths:
        paths = sorted(glob.glob(os.path.join(args.inp, "*.jsonl")))
    rows = []
    for p in paths:
        rows.extend(read_rows(p))
    rows = sort_rows(rows)
    if args.summary:
        rows = summarize(rows)
    text = rows_to_csv(rows) if args.format == "csv" else rows_to_jsonl(rows)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rplsybil", description="RPL Sybil-attack simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one scenario, one seed")
    run.add_argument("--config")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="result file (.csv or .jsonl)")
    run.add_argument("--trace", help="also write the event trace as NDJSON")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="seeds x ratios x defenses")
    sw.add_argument("--config")
    sw.add_argument("--seeds", type=int, default=20)
    sw.add_argument("--ratios", default="0.1,0.2,0.3,0.4,0.5")
    sw.add_argument("--defenses", default=",".join(d.value for d in Defense))
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("-v", "--verbose", action="store_true")
    sw.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="print collected results")
    rep.add_argument("--in", dest="inp", required=True)
    rep.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    rep.add_argument("--summary", action="store_true", help="average over seeds")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TopologyError as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


__all__ = ["main", "build_parser", "summarize", "COLUMNS"]
