"""Centralised trust calculus run at the root.

Inputs are the local trust opinions (LTOs) reported by observers. Matrices use
``nan`` for "no opinion". Rows index observers, columns index subject
identities; an observer may also be a subject (same MAC).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

NULL = math.nan
# spreads below this count as zero: equal SRs can pick up rounding noise
SIGMA_EPS = 1e-12


class NodeVerdict(str, Enum):
    HONEST = "honest"
    MALICIOUS = "malicious"


class Decision(str, Enum):
    KEEP = "keep"
    SWITCH = "switch"


@dataclass(frozen=True)
class TrustParams:
    gamma: float = 0.5
    theta: float = 0.5
    lam: float = 0.5
    cut_distance: float = 0.3
    # "subject": compare u's opinion on j against BR_j; "self": against BR_u
    cr_reference: str = "subject"

    def __post_init__(self) -> None:
        for name in ("gamma", "theta", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.cr_reference not in ("subject", "self"):
            raise ValueError("cr_reference must be 'subject' or 'self'")


class OpCounter:
    """Tally of scalar multiply/compare operations, for complexity checks."""

    def __init__(self) -> None:
        self.ops = 0

    def add(self, n: int | float) -> None:
        self.ops += int(n)


# ---------------------------------------------------------------------------
# Scalar building blocks


def similarity(row_w: Sequence[float], row_j: Sequence[float]) -> float:
    """Cosine of two LTO rows over the subjects both rated, clamped at 0.

    Fewer than two common subjects, or a zero vector, gives the neutral 1.
    """
    a = np.asarray(row_w, dtype=float)
    b = np.asarray(row_j, dtype=float)
    common = ~np.isnan(a) & ~np.isnan(b)
    if common.sum() < 2:
        return 1.0
    a, b = a[common], b[common]
    na, nb = float(np.sqrt(a @ a)), float(np.sqrt(b @ b))
    if na == 0.0 or nb == 0.0:
        return 1.0
    return max(float(a @ b) / (na * nb), 0.0)


def subjective_reputation(lto_col: Sequence[float], hr: Sequence[float], sim_row: Sequence[float]) -> float:
    """Weighted mean of the opinions held on one subject, weights HR_j * Sim_{w,j}."""
    col = np.asarray(lto_col, dtype=float)
    mask = ~np.isnan(col)
    if not mask.any():
        return NULL
    w = np.asarray(hr, dtype=float)[mask] * np.asarray(sim_row, dtype=float)[mask]
    v = col[mask]
    total = w.sum()
    if total <= 0:
        return float(v.mean())
    return float(min(max((w * v).sum() / total, v.min()), v.max()))


def behavioral_reputation(sr_col: Sequence[float], quorum: Sequence[int]) -> float:
    if len(quorum) == 0:
        raise ValueError("empty quorum")
    col = np.asarray(sr_col, dtype=float)[list(quorum)]
    col = col[~np.isnan(col)]
    return float(col.mean()) if col.size else NULL


def credibility_reputation(lto_row: Sequence[float], reference: Sequence[float] | float) -> float:
    """1 - RMS deviation of u's opinions from the consensus, clamped to [0, 1].

    ``reference`` is the BR of each rated subject (aligned with ``lto_row``) or a
    single BR value to compare every opinion against.
    """
    row = np.asarray(lto_row, dtype=float)
    ref = np.broadcast_to(np.asarray(reference, dtype=float), row.shape)
    mask = ~np.isnan(row) & ~np.isnan(ref)
    if not mask.any():
        return 0.5
    dev = row[mask] - ref[mask]
    return float(min(max(1.0 - math.sqrt(float(dev @ dev) / mask.sum()), 0.0), 1.0))


def global_reputation(br: float, cr: float, gamma: float) -> float:
    return gamma * br + (1.0 - gamma) * cr


def classify(gr: float, theta: float) -> NodeVerdict:
    return NodeVerdict.MALICIOUS if gr < theta else NodeVerdict.HONEST


def directional_weight(sr_d_wu: float, sr_d_col: Sequence[float]) -> float:
    """Gaussian closeness of one directional SR to the column mean."""
    col = np.asarray(sr_d_col, dtype=float)
    col = col[~np.isnan(col)]
    if col.size == 0:
        raise ValueError("column has no directional SR")
    mu = float(col.mean())
    sigma = float(np.sqrt(((col - mu) ** 2).mean()))
    if sigma <= SIGMA_EPS:
        return 1.0
    return math.exp(-((sr_d_wu - mu) ** 2) / (2.0 * sigma * sigma))


def directional_global_trust(sr_d_wu: float, w_wu: float, gr_w: float) -> tuple[float, float, float]:
    t_d = sr_d_wu * w_wu
    t_dg = t_d * gr_w
    return t_d, t_dg, 1.0 - t_dg


def trust_rank(r_parent: float, etx: float, link_cost: float, lam: float) -> float:
    if math.isinf(etx) or math.isinf(r_parent):
        return math.inf
    return lam * r_parent + (1.0 - lam) * (etx * link_cost)


def maybe_switch_parent(r_existing: float, r_candidate: float) -> Decision:
    return Decision.SWITCH if r_existing > r_candidate else Decision.KEEP


# ---------------------------------------------------------------------------
# Clustering


def average_linkage_clusters(points: np.ndarray, cut: float, ops: OpCounter | None = None) -> list[list[int]]:
    """Agglomerative clustering, average linkage, Euclidean metric.

    Merges the closest pair (lowest indices on ties) while its linkage distance
    is at most ``cut``. Returns clusters as sorted index lists.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n == 0:
        return []
    sq = (pts * pts).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T, 0.0)
    dist = np.sqrt(d2)
    if ops is not None:
        ops.add(n * n * max(pts.shape[1], 1))
    np.fill_diagonal(dist, np.inf)
    sizes = np.ones(n)
    members = {i: [i] for i in range(n)}
    alive = np.ones(n, dtype=bool)
    for _ in range(n - 1):
        flat = int(np.argmin(dist))
        i, j = divmod(flat, n)
        if ops is not None:
            ops.add(n * n)
        if not dist[i, j] <= cut:
            break
        if i > j:
            i, j = j, i
        # Lance-Williams update for average linkage
        new = (sizes[i] * dist[i] + sizes[j] * dist[j]) / (sizes[i] + sizes[j])
        new[i] = np.inf
        new[~alive] = np.inf
        dist[i, :] = new
        dist[:, i] = new
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        sizes[i] += sizes[j]
        alive[j] = False
        members[i].extend(members.pop(j))
    return [sorted(m) for _, m in sorted(members.items())]


def trusted_quorum(
    sr: np.ndarray,
    cut: float = 0.3,
    prev_gr: Sequence[float] | None = None,
    ids: Sequence[int] | None = None,
    ops: OpCounter | None = None,
) -> list[int]:
    """Row indices of the largest cluster of observers' SR vectors.

    Missing SR entries are imputed with their column mean. Equal-size clusters
    are ordered by mean previous GR of their members, then by lowest member id.
    """
    sr = np.asarray(sr, dtype=float)
    n = sr.shape[0]
    if n == 0:
        return []
    if n == 1:
        return [0]
    all_null = np.isnan(sr).all(axis=0)
    col_mean = np.nanmean(np.where(all_null[None, :], 0.0, sr), axis=0)
    filled = np.where(np.isnan(sr), col_mean[None, :], sr)
    clusters = average_linkage_clusters(filled, cut, ops)
    ids = list(range(n)) if ids is None else list(ids)

    def key(cluster: list[int]):
        g = 0.0
        if prev_gr is not None:
            vals = [prev_gr[i] for i in cluster if not math.isnan(prev_gr[i])]
            g = sum(vals) / len(vals) if vals else 0.0
        return (-len(cluster), -g, min(ids[i] for i in cluster))

    return sorted(min(clusters, key=key))


# ---------------------------------------------------------------------------
# Full evaluation


@dataclass
class TrustReport:
    observers: list[int]
    subjects: list[int]
    sr: np.ndarray
    br: dict[int, float]
    cr: dict[int, float]
    gr: dict[int, float]
    verdict: dict[int, NodeVerdict]
    quorum: list[int]
    sim: np.ndarray
    sr_d: np.ndarray
    w: np.ndarray
    t_d: np.ndarray
    t_dg: np.ndarray
    link_cost: np.ndarray
    ops: int = 0
    flagged_fallback: int = 0
    _obs_index: dict[int, int] = field(default_factory=dict, repr=False)
    _subj_index: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._obs_index = {m: i for i, m in enumerate(self.observers)}
        self._subj_index = {m: i for i, m in enumerate(self.subjects)}

    def malicious(self) -> set[int]:
        return {m for m, v in self.verdict.items() if v is NodeVerdict.MALICIOUS}

    def cost(self, w: int, u: int) -> float | None:
        """Link cost l_{w,u}, or None when w holds no directional view of u."""
        i = self._obs_index.get(w)
        j = self._subj_index.get(u)
        if i is None or j is None:
            return None
        v = self.link_cost[i, j]
        return None if math.isnan(v) else float(v)

    def to_json(self) -> dict:
        def clean(x: float):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else round(float(x), 12)

        return {
            "observers": list(self.observers),
            "subjects": list(self.subjects),
            "quorum": [self.observers[i] for i in self.quorum],
            "nodes": {
                str(m): {"br": clean(self.br[m]), "cr": clean(self.cr[m]), "gr": clean(self.gr[m]),
                         "verdict": self.verdict[m].value}
                for m in self.subjects
            },
            "links": [
                {"w": self.observers[i], "u": self.subjects[j], "t_d": clean(self.t_d[i, j]),
                 "t_dg": clean(self.t_dg[i, j]), "l": clean(self.link_cost[i, j])}
                for i, j in zip(*np.nonzero(~np.isnan(self.link_cost)))
            ],
            "ops": self.ops,
        }


def similarity_matrix(lto: np.ndarray, ops: OpCounter | None = None) -> np.ndarray:
    mask = (~np.isnan(lto)).astype(float)
    x = np.nan_to_num(lto)
    dot = x @ x.T
    sq = (x * x) @ mask.T  # |w| restricted to subjects j also rated
    common = mask @ mask.T
    if ops is not None:
        n, m = lto.shape
        ops.add(3 * n * n * m)
    norm = np.sqrt(sq * sq.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norm > 0, dot / np.where(norm > 0, norm, 1.0), 1.0)
    out = np.where(common < 2, 1.0, np.maximum(cos, 0.0))
    return np.minimum(out, 1.0)


def subjective_reputation_matrix(
    lto: np.ndarray, hr: np.ndarray, sim: np.ndarray, ops: OpCounter | None = None
) -> tuple[np.ndarray, int]:
    mask = (~np.isnan(lto)).astype(float)
    x = np.nan_to_num(lto)
    weights = sim * hr[None, :]  # [w, j] = HR_j * Sim_{w,j}
    num = weights @ x
    den = weights @ mask
    if ops is not None:
        n, m = lto.shape
        ops.add(2 * n * n * m)
    count = mask.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        plain = np.where(count > 0, x.sum(axis=0) / np.where(count > 0, count, 1.0), NULL)
        sr = np.where(den > 0, num / np.where(den > 0, den, 1.0), plain[None, :])
    fallback = int(((den <= 0) & (count[None, :] > 0)).sum())
    sr = np.where(count[None, :] > 0, sr, NULL)
    # keep within [min LTO, max LTO] of the column despite rounding
    lo = np.where(mask > 0, x, np.inf).min(axis=0)
    hi = np.where(mask > 0, x, -np.inf).max(axis=0)
    sr = np.where(np.isnan(sr), sr, np.clip(sr, lo[None, :], hi[None, :]))
    return sr, fallback


def evaluate(
    lto: np.ndarray,
    observers: Sequence[int],
    subjects: Sequence[int],
    hr: Sequence[float],
    params: TrustParams = TrustParams(),
    receivers: np.ndarray | None = None,
    prev_gr: Mapping[int, float] | None = None,
) -> TrustReport:
    """Run the whole pipeline on one LTO snapshot.

    ``receivers[w, u]`` marks that observer w directly hears subject u; it
    restricts the directional SR. By default it equals "w holds an LTO on u".
    """
    ops = OpCounter()
    lto = np.asarray(lto, dtype=float)
    hr_arr = np.asarray(hr, dtype=float)
    n_obs, n_subj = lto.shape
    observers = list(observers)
    subjects = list(subjects)
    if len(observers) != n_obs or len(subjects) != n_subj or hr_arr.shape != (n_obs,):
        raise ValueError("shape mismatch")
    sim = similarity_matrix(lto, ops)
    sr, fallback = subjective_reputation_matrix(lto, hr_arr, sim, ops)

    prev = None
    if prev_gr is not None:
        prev = [prev_gr.get(m, NULL) for m in observers]
    quorum = trusted_quorum(sr, params.cut_distance, prev, observers, ops) if n_obs else []

    q = sr[quorum] if quorum else np.empty((0, n_subj))
    with np.errstate(invalid="ignore"):
        qmask = ~np.isnan(q)
        qcount = qmask.sum(axis=0)
        br_vec = np.where(qcount > 0, np.nan_to_num(q).sum(axis=0) / np.maximum(qcount, 1), NULL)
    ops.add(len(quorum) * n_subj)

    subj_index = {m: j for j, m in enumerate(subjects)}
    br = {m: float(br_vec[j]) for j, m in enumerate(subjects)}
    cr: dict[int, float] = {}
    obs_index = {m: i for i, m in enumerate(observers)}
    for m in subjects:
        i = obs_index.get(m)
        if i is None:
            cr[m] = 0.5
            continue
        ref = br_vec if params.cr_reference == "subject" else br[m]
        cr[m] = credibility_reputation(lto[i], ref)
    ops.add(n_obs * n_subj)

    gr: dict[int, float] = {}
    verdict: dict[int, NodeVerdict] = {}
    for m in subjects:
        b = br[m]
        if math.isnan(b):
            g = NULL
            verdict[m] = NodeVerdict.HONEST
        else:
            g = global_reputation(b, cr[m], params.gamma)
            verdict[m] = classify(g, params.theta)
        gr[m] = g

    if receivers is None:
        recv = ~np.isnan(lto)
    else:
        recv = np.asarray(receivers, dtype=bool)
    sr_d = np.where(recv, sr, NULL)
    dmask = ~np.isnan(sr_d)
    dcount = dmask.sum(axis=0)
    x = np.nan_to_num(sr_d)
    mu = np.where(dcount > 0, x.sum(axis=0) / np.maximum(dcount, 1), NULL)
    var = np.where(dcount > 0, (np.where(dmask, (x - mu[None, :]) ** 2, 0.0)).sum(axis=0) / np.maximum(dcount, 1), NULL)
    sigma = np.sqrt(var)
    spread = sigma > SIGMA_EPS
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(
            spread[None, :],
            np.exp(-((sr_d - mu[None, :]) ** 2) / (2.0 * np.where(spread, sigma, 1.0)[None, :] ** 2)),
            1.0,
        )
    w = np.where(dmask, w, NULL)
    t_d = sr_d * w
    gr_obs = np.array([gr.get(m, NULL) for m in observers]) if n_obs else np.empty(0)
    gr_obs = np.where(np.isnan(gr_obs), 0.5, gr_obs)
    t_dg = t_d * gr_obs[:, None]
    link = 1.0 - t_dg
    ops.add(4 * n_obs * n_subj)

    return TrustReport(
        observers=observers, subjects=subjects, sr=sr, br=br, cr=cr, gr=gr, verdict=verdict,
        quorum=quorum, sim=sim, sr_d=sr_d, w=w, t_d=t_d, t_dg=t_dg, link_cost=link,
        ops=ops.ops, flagged_fallback=fallback,
    )


# ---------------------------------------------------------------------------
# Routing path computation


def trust_shortest_paths(
    n: int, edges: Mapping[int, Sequence[tuple[int, float]]], source: int, ops: OpCounter | None = None
) -> list[float]:
    """Dijkstra over trust-weighted link costs from ``source`` (binary heap)."""
    dist = [math.inf] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = [False] * n
    while heap:
        d, v = heapq.heappop(heap)
        if ops is not None:
            ops.add(max(1, int(math.log2(len(heap) + 1))))
        if done[v]:
            continue
        done[v] = True
        for u, c in edges.get(v, ()):
            if ops is not None:
                ops.add(1)
            nd = d + c
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist
