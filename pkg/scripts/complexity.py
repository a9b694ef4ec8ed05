"""Operation counts of the trust evaluation and the trust-weighted routing
step as the network grows, with their log-log slopes.

    python3 scripts/complexity.py --sizes 10,20,40,80
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from rplsybil.trust import OpCounter, evaluate, trust_shortest_paths


def trust_ops(n: int, rng: np.random.Generator) -> int:
    lto = rng.uniform(0.0, 1.0, size=(n, n))
    lto[rng.random((n, n)) < 0.2] = np.nan
    ids = list(range(1, n + 1))
    return evaluate(lto, ids, ids, np.ones(n)).ops


def routing_ops(n: int, rng: np.random.Generator, r: float, big_r: float) -> int:
    while True:
        ang = rng.uniform(0, 2 * np.pi, n)
        rad = big_r * np.sqrt(rng.uniform(0, 1, n))
        pos = np.c_[rad * np.cos(ang), rad * np.sin(ang)]
        d = np.linalg.norm(pos[:, None] - pos[None], axis=2)
        edges = {i: [(j, float(rng.uniform(0.05, 1.0))) for j in range(n) if j != i and d[i, j] <= r] for i in range(n)}
        ops = OpCounter()
        if not any(math.isinf(x) for x in trust_shortest_paths(n, edges, 0, ops)):
            return ops.ops


def main() -> None:
    ap = argparse.ArgumentParser(description="operation-count scaling")
    ap.add_argument("--sizes", default="10,20,40,80")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sizes = [int(x) for x in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)
    r, big_r = 60.0, 100.0
    t_ops, r_ops = [], []
    print(f"{'N':>5} {'trust_ops':>12} {'routing_ops':>12}")
    for n in sizes:
        t_ops.append(np.mean([trust_ops(n, rng) for _ in range(args.reps)]))
        r_ops.append(np.mean([routing_ops(n, rng, r, big_r) for _ in range(args.reps)]))
        print(f"{n:>5} {t_ops[-1]:>12.0f} {r_ops[-1]:>12.0f}")
    model = [(r / big_r) ** 2 * n * n + n * math.log2(n) for n in sizes]
    slope = lambda ys: np.polyfit(np.log(sizes), np.log(ys), 1)[0]
    print(f"trust slope {slope(t_ops):.2f}; routing slope {slope(r_ops):.2f} "
          f"(N^2 r^2/R^2 + N log N gives {slope(model):.2f})")


if __name__ == "__main__":
    main()
