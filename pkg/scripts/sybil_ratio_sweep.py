"""Sweep the Sybil ratio for every defense and print per-point means.

    python3 scripts/sybil_ratio_sweep.py --seeds 20 --out results/

Writes results/results.csv (one row per run) and results/summary.csv (means
over seeds) covering misdetection, PDR, detection latency, overhead and energy.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from rplsybil.cli import summarize
from rplsybil.harness import export, run_scenario, sort_rows
from rplsybil.scenario import Defense, ScenarioConfig, load_config


def main() -> int:
    here = os.path.dirname(os.path.abspath(__file__))
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(here, "default.cfg"))
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--ratios", default="0.1,0.2,0.3,0.4,0.5")
    ap.add_argument("--defenses", default=",".join(d.value for d in Defense))
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    base: ScenarioConfig = load_config(args.config)
    ratios = [float(x) for x in args.ratios.split(",")]
    defenses = [Defense.parse(x) for x in args.defenses.split(",")]
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for ratio in ratios:
        for defense in defenses:
            t0 = time.perf_counter()
            for seed in range(args.seeds):
                rows.append(run_scenario(base.replace(sybil_ratio=ratio, defense=defense, seed=seed)).row())
            print(f"ratio={ratio:.1f} {defense.value:<11} {time.perf_counter() - t0:7.1f}s", file=sys.stderr)
    rows = sort_rows(rows)
    export(rows, os.path.join(args.out, "results.csv"))
    summary = summarize(rows)
    export(summary, os.path.join(args.out, "summary.csv"))
    print(f"{'ratio':>5} {'defense':<11} {'misdet':>7} {'pdr':>6} {'latency':>8} {'overhead':>9} {'energy':>7}")
    for r in summary:
        lat = "-" if r["detection_latency_s"] is None else f"{r['detection_latency_s']:.0f}"
        print(f"{r['sybil_ratio']:>5.1f} {r['defense']:<11} {r['misdetection_rate']:>7.3f} {r['pdr']:>6.3f} "
              f"{lat:>8} {r['overhead_bytes']:>9} {r['energy_j']:>7.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
