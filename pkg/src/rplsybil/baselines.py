"""Reference detectors the trust scheme is compared against.

* RSSI profiling: identities that look alike in received power at the same
  observers are taken to be one device.
* ID counting: a MAC that sends DIS faster than any honest node could is flagged.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np


@dataclass(slots=True)
class RssiStats:
    count: int = 0
    total: float = 0.0
    first_t: float = 0.0
    last_t: float = 0.0
    # frames already counted in `total` whose shadowing noise is still undrawn
    pending: int = 0

    def add(self, t: float, rssi: float) -> None:
        if self.count == 0:
            self.first_t = t
        self.count += 1
        self.total += rssi
        self.last_t = t

    @property
    def mean(self) -> float:
        return self.total / self.count

    def settle(self, sigma_db: float, rng) -> None:
        """Add the shadowing of all pending frames in one draw.

        The sum of k independent N(0, s^2) samples is N(0, k s^2), so drawing
        it lazily leaves the distribution of every mean unchanged.
        """
        if self.pending:
            self.total += float(rng.normal(0.0, sigma_db * self.pending ** 0.5))
            self.pending = 0


def co_observed(a: RssiStats, b: RssiStats, window_s: float) -> bool:
    return a.first_t <= b.last_t + window_s and b.first_t <= a.last_t + window_s


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = defaultdict(list)
        for x in self.parent:
            out[self.find(x)].append(x)
        return [sorted(g) for g in out.values()]


def similar_pairs(
    history: Mapping[int, Mapping[int, RssiStats]],
    eps_db: float,
    window_s: float,
    min_common: int = 1,
    since: float | None = None,
) -> list[tuple[int, int]]:
    """Identity pairs whose mean RSSI agrees within eps at every observer that
    saw both around the same time, with at least ``min_common`` such observers.

    With ``since`` set, only identities first heard (by that observer) at or
    after ``since`` take part: a Sybil device's identities are all young, while
    long-lived identities have nothing to be merged with.
    """
    close: dict[tuple[int, int], int] = defaultdict(int)
    disagree = []  # per observer: (mac -> row, co-observed but not within eps)
    for seen in history.values():
        items = sorted(seen.items())
        if since is not None:
            items = [kv for kv in items if kv[1].first_t >= since]
        if len(items) < 2:
            continue
        macs = [m for m, _ in items]
        first = np.array([st.first_t for _, st in items])
        last = np.array([st.last_t for _, st in items])
        mean = np.array([st.mean for _, st in items])
        co = (first[:, None] <= last[None, :] + window_s) & (first[None, :] <= last[:, None] + window_s)
        near = np.abs(mean[:, None] - mean[None, :]) < eps_db
        iu, ju = np.nonzero(np.triu(co & near, k=1))
        for i, j in zip(iu.tolist(), ju.tolist()):
            close[(macs[i], macs[j])] += 1
        disagree.append(({m: i for i, m in enumerate(macs)}, co & ~near))
    out = []
    for (u, v), c in sorted(close.items()):
        if c < min_common:
            continue
        if any(u in idx and v in idx and bad[idx[u], idx[v]] for idx, bad in disagree):
            continue
        out.append((u, v))
    return out


def rssi_profile_detect(
    history: Mapping[int, Mapping[int, RssiStats]],
    eps_db: float = 3.0,
    window_s: float = 10.0,
    min_common: int = 1,
    since: float | None = None,
) -> set[int]:
    """Identities merged into a suspected multi-identity device (group size >= 2)."""
    uf = _UnionFind()
    for u, v in similar_pairs(history, eps_db, window_s, min_common, since):
        uf.union(u, v)
    return {m for g in uf.groups() if len(g) >= 2 for m in g}


def id_count_threshold(i_min_s: float, window_s: float, factor: float = 3.0) -> float:
    """DIS count per window above which a MAC is flagged.

    The reference honest rate is one message per minimum trickle interval.
    """
    return factor * window_s / i_min_s


def id_count_detect(dis_times: Mapping[int, Iterable[float]], window_s: float, threshold: float) -> set[int]:
    flagged = set()
    for mac, times in dis_times.items():
        q: deque[float] = deque()
        for t in sorted(times):
            q.append(t)
            while q[0] <= t - window_s:
                q.popleft()
            if len(q) > threshold:
                flagged.add(mac)
                break
    return flagged


class IdCountTracker:
    """Streaming form of :func:`id_count_detect`."""

    def __init__(self, window_s: float, threshold: float) -> None:
        self.window_s = window_s
        self.threshold = threshold
        self.recent: dict[int, deque[float]] = {}
        self.flagged: set[int] = set()

    def observe(self, mac: int, t: float) -> bool:
        q = self.recent.get(mac)
        if q is None:
            q = self.recent[mac] = deque()
        q.append(t)
        while q[0] <= t - self.window_s:
            q.popleft()
        if len(q) > self.threshold and mac not in self.flagged:
            self.flagged.add(mac)
            return True
        return False
