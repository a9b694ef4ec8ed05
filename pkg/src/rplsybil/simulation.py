"""Whole-network simulation: honest RPL nodes, Sybil devices and the defenses.

Device 0 is the DODAG root. Honest devices use a fixed MAC; attacker devices
draw MACs from private pools. Frames are delivered to every in-range device at
the instant they are sent; only timers are events.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import detector as det
from . import rpl
from .adversary import Attacker, NodeIdentity
from .baselines import IdCountTracker, RssiStats, id_count_threshold, rssi_profile_detect
from .netsim import US_PER_S, EnergyModel, SimClock, Trace
from .rpl import INFINITE_RANK, RANK_UNIT, ROOT_RANK, Kind, LinkStats, Mode, TrickleTimer
from .scenario import Defense, ScenarioConfig
from .trust import NodeVerdict, TrustParams, TrustReport, evaluate, trust_rank

HONEST_MAC_BASE = 0x00124B000000
ATTACKER_MAC_BASE = 0x0A0000000000
ATTACKER_POOL_STRIDE = 1 << 24

TRUST_HEADER_BYTES = 2
FLAGGED_ENTRY_BYTES = 2  # 16-bit short address
REPORT_GROUP_BYTES = 7
REPORT_LTO_STEP = 0.05
STALE_SUBJECT_S = 120.0


class TopologyError(RuntimeError):
    pass


def _stream(ss: np.random.SeedSequence) -> random.Random:
    return random.Random(int(ss.generate_state(2, dtype=np.uint64)[0]))


@dataclass(slots=True)
class Dio:
    rank: int
    seq: int
    alarm: bool = False
    alarm_t0_us: int = 0
    query: det.QueryField | None = None
    report_to: int | None = None
    reports: list | None = None  # [(observer, (depth, entries))]
    trust: tuple | None = None  # (version, report, flagged set, newly flagged count)


@dataclass
class Stats:
    control_bytes: int = 0
    control_frames: dict = field(default_factory=lambda: {"DIS": 0, "DIO": 0, "DAO": 0})
    data_originated: int = 0
    data_delivered: int = 0
    data_dropped_attacker: int = 0
    data_dropped_loss: int = 0
    data_dropped_noroute: int = 0
    alarm_t: float | None = None
    th_c: float | None = None
    trust_epochs: int = 0
    pending_evictions: int = 0
    mac_reuse: int = 0


class Device:
    __slots__ = (
        "net", "idx", "mac", "uids", "honest", "on", "is_root", "st", "trickle", "dio_seq",
        "parent_dev", "depth", "heard", "ledger", "round", "uid_type",
        "resp_pending", "resp_timer", "answered", "report_buf", "trust_version", "trust",
        "trust_delta", "flags", "reported", "relay_pending", "alarm_t0_us", "attacker", "next_round_k",
        "tx_bytes", "rx_bytes", "ctrl_tx_bytes",
    )

    def __init__(self, net: "Network", idx: int, mac: int, uids: dict[int, int], honest: bool) -> None:
        cfg = net.cfg
        self.net = net
        self.idx = idx
        self.mac = mac
        self.uids = uids
        self.honest = honest
        self.on = False
        self.is_root = idx == 0
        self.st = rpl.DodagState(pending_capacity=cfg.pending_capacity)
        self.trickle = TrickleTimer(cfg.trickle_i_min_s, cfg.trickle_doublings, cfg.trickle_k)
        self.dio_seq = 0
        self.parent_dev = -1
        self.depth = 0
        self.heard: dict[int, int] = {}
        self.ledger = det.EvidenceLedger(mac)
        self.round = None
        self.uid_type = int(det.DEFAULT_ROTATION[0])
        self.resp_pending: dict = {}
        self.resp_timer = False
        self.answered: set = set()
        self.report_buf: dict = {}
        self.trust_version = 0
        self.trust: TrustReport | None = None
        self.trust_delta = 0
        self.flags: frozenset[int] = frozenset()
        self.reported: dict[int, float] = {}
        self.relay_pending = False
        self.alarm_t0_us = 0
        self.attacker: Attacker | None = None
        self.next_round_k = 0
        self.tx_bytes = 0
        self.rx_bytes = 0
        self.ctrl_tx_bytes = 0

    @property
    def current_mac(self) -> int:
        return self.attacker.identity.mac if self.attacker is not None else self.mac


class Network:
    def __init__(self, cfg: ScenarioConfig) -> None:
        self.cfg = cfg
        ss = np.random.SeedSequence(cfg.seed)
        (self.ss_place, ss_loss, ss_timing, ss_attack, ss_shadow, ss_resp) = ss.spawn(6)
        self.loss_rng = _stream(ss_loss)
        self.timing_rng = _stream(ss_timing)
        self.attack_rng = _stream(ss_attack)
        self.shadow_rng = np.random.default_rng(ss_shadow)
        self.resp_rng = _stream(ss_resp)
        self.clock = SimClock()
        self.trace = Trace(enabled=cfg.trace)
        self.stats = Stats()
        self.energy = EnergyModel()
        self.params = TrustParams(cfg.gamma, cfg.theta, cfg.lam, cfg.cut_distance, cfg.cr_reference)
        self.uitrust = cfg.defense is Defense.UITRUST
        self.rssi_on = cfg.defense is Defense.RSSI_PROFILE
        self.idcount_on = cfg.defense is Defense.ID_COUNT
        self.filtering = cfg.defense is not Defense.NONE_MRHOF
        self.omega_us = int(cfg.query_interval_s * US_PER_S)
        self.th_r_us = int(cfg.th_r_s * US_PER_S)
        self._place()
        self._build_devices()
        # root-side state
        self.counter_buckets: list[int] = []
        self.counter_prefix = [0]
        self.th_c: float | None = None
        self.alarm = False
        self.lto_store: dict[tuple[int, int], tuple[int, int]] = {}
        self.subject_seen: dict[int, float] = {}
        self.retired: dict[int, NodeVerdict] = {}
        self.obs_depth: dict[int, int] = {}
        self.trust_version = 0
        self.trust_report: TrustReport | None = None
        self.flagged: set[int] = set()
        self.ever_flagged: set[int] = set()  # union of every flag set handed out
        self.prev_gr: dict[int, float] = {}
        # baselines
        self.rssi_hist: dict[int, dict[int, RssiStats]] = {}
        self.rssi_cover: dict[int, list] = {}
        self.idcount = IdCountTracker(
            cfg.idcount_window_s,
            id_count_threshold(cfg.trickle_i_min_s, cfg.idcount_window_s, cfg.idcount_rate_factor),
        )
        # metrics bookkeeping
        self.observed: dict[int, set[int]] = {}  # device -> MACs heard by honest nodes
        self.uid_obs: dict[tuple[int, int], set[int]] = {}  # (device, uid type) -> UIDs heard
        self.detect_series: list[tuple[float, float]] = []
        self.all_detected_t: float | None = None

    # ------------------------------------------------------------------ setup

    def _place(self) -> None:
        cfg = self.cfg
        n = cfg.node_count
        side = cfg.field_side_m or math.sqrt(n * math.pi * cfg.tx_range_m ** 2 / cfg.target_degree)
        self.side = side
        n_att = cfg.attacker_count
        children = self.ss_place.spawn(10)
        for attempt, child in enumerate(children):
            g = np.random.default_rng(child)
            pos = np.empty((n + 1, 2))
            pos[0] = (side / 2, side / 2)
            pos[1:] = g.uniform(0.0, side, size=(n, 2))
            att = sorted(int(i) for i in g.choice(np.arange(1, n + 1), size=n_att, replace=False)) if n_att else []
            uid_seed = int(g.integers(0, 2 ** 62))
            if self._honest_connected(pos, set(att)):
                self.positions = [tuple(map(float, p)) for p in pos]
                self.attacker_devs = att
                self.placement_attempts = attempt + 1
                self._uid_rng = random.Random(uid_seed)
                return
        raise TopologyError("honest topology disconnected after 10 placements")

    def _honest_connected(self, pos: np.ndarray, att: set[int]) -> bool:
        r2 = self.cfg.tx_range_m ** 2
        honest = [i for i in range(len(pos)) if i not in att]
        d2 = ((pos[honest, None, :] - pos[None, honest, :]) ** 2).sum(axis=2)
        adj = d2 <= r2
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.nonzero(adj[i])[0]:
                if int(j) not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen) == len(honest)

    def _build_devices(self) -> None:
        cfg = self.cfg
        n = cfg.node_count + 1
        pos = np.array(self.positions)
        d = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2))
        self.nbrs: list[list[tuple[int, float]]] = []
        for i in range(n):
            row = []
            for j in np.nonzero(d[i] <= cfg.tx_range_m)[0]:
                j = int(j)
                if j != i:
                    dist = max(float(d[i, j]), 1e-3)
                    pl = cfg.ref_loss_db + 10.0 * cfg.path_loss_exponent * math.log10(dist)
                    row.append((j, pl))
            self.nbrs.append(row)
        self.dist = d
        att = set(self.attacker_devs)
        self.devices: list[Device] = []
        self.mac_owner: dict[int, int] = {}
        for i in range(n):
            uids = {int(t): self._uid_rng.getrandbits(det.UID_BITS[t]) for t in det.UidType}
            mac = HONEST_MAC_BASE + i
            dev = Device(self, i, mac, uids, honest=i not in att)
            if i in att:
                base = ATTACKER_MAC_BASE + i * ATTACKER_POOL_STRIDE
                dev.attacker = Attacker(i, NodeIdentity(uids[0], base, 0.0), cfg.attacker, mac_base=base)
            self.devices.append(dev)
            self.mac_owner[mac] = i
        if cfg.forced_uid_collision and self.attacker_devs:
            honest = [i for i in range(1, n) if i not in att]
            if honest:
                victim = self.devices[honest[0]]
                sybil = self.devices[self.attacker_devs[0]]
                sybil.uids = dict(victim.uids)
                self.collision_pair = (victim.idx, sybil.idx)
        self.root = self.devices[0]
        self.nbr_devs = [[(self.devices[j], pl) for j, pl in row] for row in self.nbrs]
        # neighbours that are switched on, in index order
        self.live_nbrs: list[list[tuple[Device, float]]] = [[] for _ in self.nbr_devs]
        self.honest_nbr_count = [sum(1 for r, _ in row if r.honest) for row in self.nbr_devs]

    # ------------------------------------------------------------------ radio

    def _send_control(self, dev: Device, kind: str, nbytes: int) -> None:
        st = self.stats
        st.control_bytes += nbytes
        st.control_frames[kind] += 1
        dev.tx_bytes += nbytes
        dev.ctrl_tx_bytes += nbytes
        t = self.clock.now_us // US_PER_S
        buckets = self.counter_buckets
        while len(buckets) <= t:
            buckets.append(0)
        buckets[t] += 1

    def _radiate(self, dev: Device, nbytes: int) -> list[tuple[Device, float]]:
        """Charge reception energy to every listening neighbour and return the
        (receiver, path loss) pairs that decoded the frame."""
        rand = self.loss_rng.random
        err = self.cfg.forwarding_error_rate
        got = []
        for r, pl in self.live_nbrs[dev.idx]:
            r.rx_bytes += nbytes
            if rand() >= err:
                got.append((r, pl))
        return got

    def _switch_on(self, dev: Device) -> None:
        dev.on = True
        for j, _ in self.nbrs[dev.idx]:
            self.live_nbrs[j] = [(r, pl) for r, pl in self.nbr_devs[j] if r.on]

    def _record_rssi(self, src: Device, mac: int, got: list[tuple[Device, float]]) -> None:
        """Accumulate the noise-free received power; shadowing is drawn when a
        profile is first used (see :meth:`RssiStats.settle`)."""
        t = self.clock.now_us / US_PER_S
        oldest_usable = t - 2 * self.cfg.query_interval_s
        # per identity: [honest listeners holding a profile, newest first_t]
        cover = self.rssi_cover.get(mac)
        if cover is None:
            cover = self.rssi_cover[mac] = [0, t]
        elif cover[0] == self.honest_nbr_count[src.idx] and cover[1] < oldest_usable:
            return  # every profile of this identity is too old to be compared again
        power = src.attacker.identity.tx_power_dbm if src.attacker is not None else 0.0
        hist = self.rssi_hist
        for r, pl in got:
            if not r.honest:
                continue
            seen = hist.get(r.idx)
            if seen is None:
                seen = hist[r.idx] = {}
            st = seen.get(mac)
            if st is None:
                st = seen[mac] = RssiStats(first_t=t)
                cover[0] += 1
                cover[1] = t
            elif st.first_t < oldest_usable:
                continue
            st.count += 1
            st.total += power - pl
            st.last_t = t
            st.pending += 1

    def _mark_observed(self, dev: Device, mac: int, got: list[tuple[Device, float]]) -> None:
        if dev.attacker is not None:
            for r, _ in got:
                if r.honest:
                    self.observed.setdefault(dev.idx, set()).add(mac)
                    return

    def broadcast_dis(self, dev: Device) -> None:
        mac = dev.current_mac
        nbytes = rpl.BASE_BYTES[Kind.DIS]
        self._send_control(dev, "DIS", nbytes)
        if self.trace.enabled:
            self.trace.add(self.clock.now_us, "DIS", hex(mac), "*", nbytes, "multicast")
        if self.idcount_on:
            self.idcount.observe(mac, self.clock.now_us / US_PER_S)
        got = self._radiate(dev, nbytes)
        if self.rssi_on:
            self._record_rssi(dev, mac, got)
        self._mark_observed(dev, mac, got)
        flagged = self.filtering and self.is_flagged_anywhere(mac)
        attack_mode = Mode.ATTACK_DETECTION
        for r, _ in got:
            if not r.honest:
                self.attacker_on_dis(r, mac)
                continue
            # fast path of on_dis for the common case
            if r.st.rank >= INFINITE_RANK or (flagged and self.is_flagged(r, mac)):
                continue
            if r.st.mode is attack_mode:
                pend = r.st.pending_table
                if mac not in pend:
                    self.on_dis(r, mac)
                continue
            tr = r.trickle
            if tr.current_interval > tr.i_min:
                self._trickle_reset(r)
            tr.counter = 0

    def broadcast_dio(self, dev: Device, dio: Dio, extra: int) -> None:
        mac = dev.current_mac
        nbytes = rpl.BASE_BYTES[Kind.DIO] + extra
        self._send_control(dev, "DIO", nbytes)
        if self.trace.enabled:
            self.trace.add(self.clock.now_us, "DIO", hex(mac), "*", nbytes, "multicast")
        got = self._radiate(dev, nbytes)
        if self.rssi_on:
            self._record_rssi(dev, mac, got)
        self._mark_observed(dev, mac, got)
        uitrust = self.uitrust
        update = self._update_candidate
        for r, _ in got:
            if not r.honest:
                self.attacker_on_dio(r, dev, mac, dio)
            elif uitrust:
                self.on_dio(r, dev, mac, dio)
            else:
                # on_dio without the trust fields
                r.trickle.counter += 1
                if not r.is_root:
                    update(r, mac, dio.rank, dio.seq)

    def broadcast_response(self, dev: Device, mac: int, resp: det.ResponseField) -> None:
        nbytes = rpl.BASE_BYTES[Kind.DAO] + det.RESPONSE_BYTES
        self._send_control(dev, "DAO", nbytes)
        self.trace.add(self.clock.now_us, "DAO", hex(mac), "*", nbytes, "multicast")
        heard = False
        for r, _ in self._radiate(dev, nbytes):
            if r.honest:
                heard = True
                self.on_response(r, mac, resp)
        if heard:
            self.uid_obs.setdefault((dev.idx, resp.uid_type), set()).add(resp.uid)

    def unicast_dao(self, dev: Device, parent_mac: int) -> None:
        nbytes = rpl.BASE_BYTES[Kind.DAO]
        self._send_control(dev, "DAO", nbytes)
        owner = self.mac_owner.get(parent_mac, -1)
        ok = owner >= 0 and self.devices[owner].on and self.dist[dev.idx, owner] <= self.cfg.tx_range_m
        if ok:
            self.devices[owner].rx_bytes += nbytes
            ok = self.loss_rng.random() >= self.cfg.forwarding_error_rate
        self.trace.add(self.clock.now_us, "DAO", hex(dev.current_mac), hex(parent_mac), nbytes,
                       "delivered" if ok else "loss")

    # ------------------------------------------------------------------ flags

    def is_flagged(self, dev: Device, mac: int) -> bool:
        """Whether `dev` treats identity `mac` as malicious."""
        if self.uitrust:
            return mac in dev.flags
        if self.idcount_on:
            return mac in self.idcount.flagged
        if self.rssi_on:
            return mac in self.flagged
        return False

    def is_flagged_anywhere(self, mac: int) -> bool:
        """Cheap pre-check: False means no device treats `mac` as malicious."""
        if self.uitrust:
            return mac in self.ever_flagged
        return self.is_flagged(self.root, mac)

    # ------------------------------------------------------------------ boot / trickle

    @property
    def attack_start_us(self) -> int:
        return int(self.cfg.attack_start_s * US_PER_S)

    def boot(self) -> None:
        cfg = self.cfg
        clock = self.clock
        root = self.root
        self._switch_on(root)
        root.st.rank = ROOT_RANK
        root.depth = 1
        self._start_trickle(root)
        rng = self.timing_rng
        for dev in self.devices[1:]:
            if dev.honest:
                clock.schedule_us(int(rng.random() * 10 * US_PER_S), self._boot_node, dev)
                first = int((cfg.data_period_s + rng.random() * cfg.data_period_s) * US_PER_S)
                clock.schedule_us(first, self._data_tick, dev)
        for i in self.attacker_devs:
            clock.schedule_us(self.attack_start_us + int(rng.random() * US_PER_S), self._attacker_start,
                              self.devices[i])
        if self.uitrust:
            clock.schedule_us(int((cfg.attack_start_s) * US_PER_S), self._calibrate)

    def _boot_node(self, dev: Device) -> None:
        self._switch_on(dev)
        self._dis_retry(dev)

    def _dis_retry(self, dev: Device) -> None:
        if dev.st.joined:
            return
        self.broadcast_dis(dev)
        self.clock.after_us(10 * US_PER_S, self._dis_retry, dev)

    def _start_trickle(self, dev: Device) -> None:
        dev.trickle.start(self.clock.now_us, self.timing_rng)
        self._arm_trickle(dev)

    def _arm_trickle(self, dev: Device) -> None:
        tr = dev.trickle
        self.clock.schedule_us(tr.fire_at_us, self._trickle_fire, dev, tr.generation)
        self.clock.schedule_us(tr.end_at_us, self._trickle_end, dev, tr.generation)

    def _trickle_fire(self, dev: Device, gen: int) -> None:
        if gen != dev.trickle.generation:
            return
        if dev.trickle.should_transmit():
            self.emit_dio(dev)

    def _trickle_end(self, dev: Device, gen: int) -> None:
        if gen != dev.trickle.generation:
            return
        dev.trickle.on_interval_end(self.clock.now_us, self.timing_rng)
        self._arm_trickle(dev)

    def _trickle_reset(self, dev: Device) -> None:
        if dev.trickle.on_inconsistent(self.clock.now_us, self.timing_rng):
            self._arm_trickle(dev)

    # ------------------------------------------------------------------ DIO

    def emit_dio(self, dev: Device, query: det.QueryField | None = None) -> None:
        dev.dio_seq += 1
        dio = Dio(dev.st.rank, dev.dio_seq)
        extra = 0
        if self.uitrust and dev.honest:
            if self.alarm and dev.st.mode is Mode.ATTACK_DETECTION:
                dio.alarm = True
                dio.alarm_t0_us = dev.alarm_t0_us
            if query is not None:
                dio.query = query
                extra += det.QUERY_BYTES
            if dev.report_buf and dev.st.parent is not None:
                dio.reports = sorted(dev.report_buf.items())
                dio.report_to = dev.st.parent
                extra += sum(REPORT_GROUP_BYTES + det.LTO_ENTRY_BYTES * len(e) for _, (_, e) in dio.reports)
                dev.report_buf = {}
            if dev.trust is not None:
                dio.trust = (dev.trust_version, dev.trust, dev.flags, dev.trust_delta)
                extra += TRUST_HEADER_BYTES + FLAGGED_ENTRY_BYTES * dev.trust_delta
                dev.trust_delta = 0
        self.broadcast_dio(dev, dio, extra)

    def on_dio(self, r: Device, src: Device, mac: int, dio: Dio) -> None:
        now = self.clock.now_us
        r.trickle.counter += 1  # consistent DIO
        if self.uitrust:
            r.heard[mac] = now
            if dio.alarm and r.st.mode is Mode.NORMAL:
                self._enter_attack_mode(r, dio.alarm_t0_us)
            if dio.query is not None:
                self._queue_response(r, mac, dio.query)
            if dio.reports is not None and dio.report_to == r.mac:
                self._take_reports(r, dio.reports)
            if dio.trust is not None and dio.trust[0] > r.trust_version and src.honest:
                self._adopt_trust(r, dio.trust)
        if r.is_root:
            return
        self._update_candidate(r, mac, dio.rank, dio.seq)

    # ------------------------------------------------------------------ routing

    def _update_candidate(self, r: Device, mac: int, rank: int, seq: int) -> None:
        st = r.st
        cands = st.candidates
        c = cands.pop(mac, None)
        if c is None:
            if self.filtering and self.is_flagged(r, mac):
                return
            if len(cands) >= self.cfg.candidate_capacity:
                # least recently heard first; the parent is never evicted
                for victim in cands:
                    if victim != st.parent:
                        del cands[victim]
                        break
            c = rpl.Candidate(rank, LinkStats())
        cands[mac] = c
        c.rank = rank
        link = c.link
        if link.last_seq is None or seq == link.last_seq + 1:
            link.d_rev = (1.0 - link.alpha) * link.d_rev + link.alpha
            link.last_seq = seq
        else:
            link.observe_seq(seq)
        parent = st.parent
        hyst = self.cfg.rank_hysteresis
        if mac == parent:
            q = link.d_fwd * link.d_rev
            new_rank = rank + (1.0 / q) * RANK_UNIT if q > 0.0 and rank < INFINITE_RANK else math.inf
            if new_rank > st.rank + hyst or new_rank >= INFINITE_RANK:
                self._reselect(r)
            else:
                st.rank = int(new_rank)
            return
        if st.rank >= INFINITE_RANK:
            self._reselect(r)
            return
        if st.mode is Mode.ATTACK_DETECTION and self.uitrust:
            self._consider_trusted(r, mac)
            return
        cur = cands.get(parent) if parent is not None else None
        if cur is not None:
            # cheap bound first: the candidate's advertised rank alone already
            # rules it out unless it beats the parent's path rank by the hysteresis
            cl = cur.link
            q = cl.d_fwd * cl.d_rev
            cur_rank = cur.rank + (1.0 / q) * RANK_UNIT if q > 0.0 and cur.rank < INFINITE_RANK else math.inf
            if cur_rank - rank < hyst + RANK_UNIT:
                return
            if cur_rank - self._path_rank(c) < hyst:
                return
        if not (self.filtering and self.is_flagged(r, mac)):
            self._set_parent(r, mac)

    @staticmethod
    def _path_rank(c: rpl.Candidate) -> float:
        link = c.link
        q = link.d_fwd * link.d_rev
        if q <= 0.0 or c.rank >= INFINITE_RANK:
            return math.inf
        return c.rank + (1.0 / q) * RANK_UNIT

    def _trusted_mode(self, r: Device) -> bool:
        return self.uitrust and r.st.mode is Mode.ATTACK_DETECTION

    def _verified(self, r: Device, mac: int) -> bool:
        tr = r.trust
        if tr is not None:
            g = tr.gr.get(mac)
            # an identity nobody in the quorum has rated is not vouched for
            if g is not None and not math.isnan(g) and g >= self.cfg.theta:
                return True
        ev = r.ledger.entries.get(mac)
        if ev is None or ev.p == 0:
            return False
        return det.compute_lto(ev.p, ev.n) >= self.cfg.theta

    def _trust_cost(self, r: Device, mac: int) -> float:
        c = r.st.candidates[mac]
        l = None
        if r.trust is not None:
            l = r.trust.cost(r.mac, mac)
        if l is None:
            lto = r.ledger.lto(mac)
            l = 1.0 - lto if lto is not None else 1.0
        if mac == self.root.mac:
            l = 0.0
        return trust_rank(c.rank / RANK_UNIT, c.link.etx, l, self.cfg.lam)

    def _consider_trusted(self, r: Device, mac: int) -> None:
        """Switch to `mac` if it is an unflagged, vouched-for identity whose
        trust-weighted rank beats the current parent's."""
        root_mac = self.root.mac
        if mac != root_mac and (mac in r.flags or not self._verified(r, mac)):
            return
        st = r.st
        parent = st.parent
        cands = st.candidates
        if parent is not None and parent in cands and (parent == root_mac or self._verified(r, parent)):
            cur = self._trust_cost(r, parent)
            if self.cfg.lam * (cands[mac].rank / RANK_UNIT) >= cur:
                return
            if not cur > self._trust_cost(r, mac):
                return
        self._set_parent(r, mac)

    def _creates_loop(self, r: Device, mac: int) -> bool:
        owner = self.mac_owner.get(mac)
        if owner is None:
            return True
        if not self.devices[owner].honest:
            return False  # traffic ends there; no cycle can form
        steps = 0
        dev = owner
        limit = len(self.devices)
        while dev != 0:
            if dev == r.idx:
                return True
            nxt = self.devices[dev].parent_dev
            if nxt < 0:
                return True
            if not self.devices[nxt].honest:
                return False
            dev = nxt
            steps += 1
            if steps > limit:
                return True
        return False

    def _reselect(self, r: Device) -> None:
        st = r.st
        usable = [
            m for m in sorted(st.candidates)
            if st.candidates[m].rank < INFINITE_RANK and not self.is_flagged(r, m) and not self._creates_loop(r, m)
        ]
        choice = None
        if self._trusted_mode(r):
            costs = {m: self._trust_cost(r, m) for m in usable if self._verified(r, m) or m == self.root.mac}
            if costs:
                best = min(costs, key=lambda m: (costs[m], m))
                cur = st.parent if st.parent in costs else None
                choice = cur if cur is not None and not costs[best] < costs[cur] else best
            elif any(self._verified(r, m) for m in st.candidates if not self.is_flagged(r, m)):
                # every vouched-for neighbour currently routes through us:
                # detach and poison so the subtree looks for another way out
                self._detach(r)
                return
        if choice is None:
            pool = {m: (st.candidates[m].rank, st.candidates[m].link.etx) for m in usable}
            cur = st.parent if st.parent in pool else None
            choice = rpl.mrhof_select_parent(pool, cur, RANK_UNIT, self.cfg.rank_hysteresis)
        if choice is None:
            self._detach(r)
            return
        self._set_parent(r, choice)

    def _detach(self, r: Device) -> None:
        st = r.st
        if st.parent is None and not st.joined:
            return
        st.parent = None
        r.parent_dev = -1
        st.rank = INFINITE_RANK
        self.emit_dio(r)

    def _set_parent(self, r: Device, mac: int) -> None:
        st = r.st
        if self._creates_loop(r, mac):
            return
        was_joined = st.joined
        c = st.candidates[mac]
        changed = mac != st.parent
        st.parent = mac
        r.parent_dev = self.mac_owner[mac]
        st.rank = int(min(self._path_rank(c), INFINITE_RANK))
        if changed:
            self.unicast_dao(r, mac)
        if not was_joined and st.joined:
            self._start_trickle(r)

    # ------------------------------------------------------------------ DIS

    def on_dis(self, r: Device, mac: int) -> None:
        st = r.st
        if st.rank >= INFINITE_RANK:
            return
        if self.filtering and self.is_flagged(r, mac):
            return
        if st.mode is Mode.ATTACK_DETECTION:
            before = st.pending_evictions
            st.add_pending(mac)
            self.stats.pending_evictions += st.pending_evictions - before
            return
        if r.trickle.current_interval > r.trickle.i_min:
            self._trickle_reset(r)
        # a DIS always earns an answer within the current interval, even when
        # the timer already sits at i_min and neighbours' DIOs would suppress it
        r.trickle.counter = 0

    # ------------------------------------------------------------------ data

    def _data_tick(self, dev: Device) -> None:
        self.clock.after_us(int(self.cfg.data_period_s * US_PER_S), self._data_tick, dev)
        self.stats.data_originated += 1
        self._forward_data(dev)

    def _forward_data(self, dev: Device) -> None:
        nbytes = rpl.DATA_BYTES - 30 + self.cfg.data_payload_bytes
        st = self.stats
        devices = self.devices
        cur = dev
        hops = 0
        limit = len(devices)
        while True:
            pmac = cur.st.parent
            if pmac is None:
                st.data_dropped_noroute += 1
                self.trace.add(self.clock.now_us, "DATA", hex(cur.current_mac), "-", nbytes, "no_route")
                return
            owner = self.mac_owner[pmac]
            nxt = devices[owner]
            cur.tx_bytes += nbytes
            nxt.rx_bytes += nbytes
            c = cur.st.candidates.get(pmac)
            if self.loss_rng.random() < self.cfg.forwarding_error_rate:
                if c is not None:
                    c.link.observe_fwd(False)
                st.data_dropped_loss += 1
                self.trace.add(self.clock.now_us, "DATA", hex(cur.current_mac), hex(pmac), nbytes, "loss")
                return
            if c is not None:
                c.link.observe_fwd(True)
            self.trace.add(self.clock.now_us, "DATA", hex(cur.current_mac), hex(pmac), nbytes, "delivered")
            if not nxt.honest:
                st.data_dropped_attacker += 1
                return
            if nxt.is_root:
                st.data_delivered += 1
                return
            cur = nxt
            hops += 1
            if hops > limit:
                st.data_dropped_noroute += 1
                return

    # ------------------------------------------------------------------ attackers

    def _attacker_start(self, dev: Device) -> None:
        self._switch_on(dev)
        att = dev.attacker
        att.active = True
        self._attacker_tick(dev)

    def _attacker_tick(self, dev: Device) -> None:
        att = dev.attacker
        now_s = self.clock.now_us / US_PER_S
        before = att.switches
        for mac in att.attack_tick(now_s, self.attack_rng):
            self.mac_owner[mac] = dev.idx
            self.broadcast_dis(dev)
        if att.reused:
            self.stats.mac_reuse = max(self.stats.mac_reuse, att.reused)
        if att.switches != before and dev.st.joined:
            # a fresh identity announces itself like a newly joined node
            self.emit_dio(dev)
        self.clock.after_us(int(US_PER_S / att.config.dis_rate_hz), self._attacker_tick, dev)

    def attacker_on_dis(self, r: Device, mac: int) -> None:
        if r.st.joined:
            tr = r.trickle
            if tr.current_interval > tr.i_min:
                self._trickle_reset(r)
            tr.counter = 0

    def attacker_on_dio(self, r: Device, src: Device, mac: int, dio: Dio) -> None:
        """Attackers keep no parent: they advertise the best rank heard plus one
        perfect hop, which makes them attractive parents for honest nodes."""
        r.trickle.on_consistent()
        if dio.query is not None:
            self._attacker_answer(r, dio.query)
        if dio.rank >= INFINITE_RANK:
            return
        offer = dio.rank + RANK_UNIT
        st = r.st
        if offer < st.rank:
            joined = st.joined
            st.rank = offer
            if not joined:
                self._start_trickle(r)

    def _attacker_answer(self, dev: Device, q: det.QueryField) -> None:
        key = (q.nonce, q.uid_type)
        if key in dev.answered:
            return
        dev.answered.add(key)
        if len(dev.answered) > 64:
            dev.answered = {k for k in dev.answered if k[0] == q.nonce}
        delay = dev.attacker.respond_to_query(q.uid_type, self.cfg.th_r_s, self.resp_rng)
        if delay is None:
            return
        jitter = 0.2 + 0.4 * self.resp_rng.random()
        self.clock.after_us(int((delay + jitter) * US_PER_S), self._attacker_send_answers, dev, q)

    def _attacker_send_answers(self, dev: Device, q: det.QueryField) -> None:
        now_s = self.clock.now_us / US_PER_S
        uid = dev.uids[q.uid_type]
        for mac in dev.attacker.recent_identities(now_s):
            self.broadcast_response(dev, mac, det.ResponseField(q.uid_type, uid, q.nonce))

    # ------------------------------------------------------------------ UITrust: counter

    def _calibrate(self) -> None:
        cfg = self.cfg
        w = int(cfg.window_n_s)
        start = int(cfg.calibration_start_s)
        stop = int(cfg.attack_start_s)
        prefix = self._prefix()
        deltas = [prefix[t] - prefix[t - w] for t in range(start + w, stop + 1)]
        self.th_c = det.calibrate_threshold(deltas, floor=cfg.th_c_floor_per_node * cfg.node_count)
        self.stats.th_c = self.th_c
        self.clock.after_us(US_PER_S, self._counter_tick)

    def _prefix(self) -> list[int]:
        b = self.counter_buckets
        p = self.counter_prefix
        now = self.clock.now_us // US_PER_S
        while len(b) < now:
            b.append(0)
        while len(p) <= min(len(b), now):
            p.append(p[-1] + b[len(p) - 1])
        return p

    def _counter_tick(self) -> None:
        if self.alarm:
            return
        now = self.clock.now_us // US_PER_S
        prefix = self._prefix()
        w = int(self.cfg.window_n_s)
        delta = prefix[now] - prefix[now - w]
        if det.check_delta(delta, self.th_c) is det.Verdict.ALARM:
            self._raise_alarm()
            return
        self.clock.after_us(US_PER_S, self._counter_tick)

    def _raise_alarm(self) -> None:
        now = self.clock.now_us
        self.alarm = True
        self.stats.alarm_t = now / US_PER_S
        self._enter_attack_mode(self.root, now)
        self.clock.schedule_us(now + self.omega_us - US_PER_S, self._trust_epoch)

    def _enter_attack_mode(self, dev: Device, t0_us: int) -> None:
        dev.st.mode = Mode.ATTACK_DETECTION
        dev.alarm_t0_us = t0_us
        if dev.is_root:
            self.emit_dio(dev)
        else:
            self._trickle_reset(dev)
        now = self.clock.now_us
        k = max(0, -(-(now - t0_us - 2 * US_PER_S) // self.omega_us))
        dev.next_round_k = k
        self._schedule_round(dev)

    # ------------------------------------------------------------------ UITrust: query rounds

    def _schedule_round(self, dev: Device) -> None:
        k = dev.next_round_k
        at = dev.alarm_t0_us + k * self.omega_us + 2 * US_PER_S + int(self.timing_rng.random() * US_PER_S / 2)
        self.clock.schedule_us(max(at, self.clock.now_us), self._query_round, dev, k)

    def _query_round(self, dev: Device, k: int) -> None:
        dev.next_round_k = k + 1
        self._schedule_round(dev)
        now = self.clock.now_us
        horizon = now - 2 * self.omega_us
        targets = det.query_targets(dev.st.pending_table, (m for m, t in dev.heard.items() if t >= horizon), dev.mac)
        if len(dev.heard) > 256:
            dev.heard = {m: t for m, t in dev.heard.items() if t >= horizon}
        if not targets:
            return
        q = det.QueryField(dev.uid_type, k & 0xFFFF)
        dev.round = {"q": q, "t": now, "targets": {m: None for m in targets}, "uids": {}}
        for m in list(dev.st.pending_table):
            dev.st.pending_table[m] = (dev.st.pending_table[m] or 0) + 1
            if dev.st.pending_table[m] >= 2:
                del dev.st.pending_table[m]
        self.emit_dio(dev, query=q)
        self.clock.after_us(2 * self.th_r_us, self._close_round, dev, dev.round)

    def _queue_response(self, r: Device, querier: int, q: det.QueryField) -> None:
        key = (q.nonce, q.uid_type)
        if (key, querier) in r.answered:
            return
        r.resp_pending.setdefault(key, set()).add(querier)
        if not r.resp_timer:
            r.resp_timer = True
            delay = 0.2 + 0.4 * self.resp_rng.random()
            self.clock.after_us(int(delay * US_PER_S), self._send_responses, r)

    def _send_responses(self, r: Device) -> None:
        r.resp_timer = False
        pending = r.resp_pending
        r.resp_pending = {}
        for (nonce, uid_type), queriers in sorted(pending.items()):
            self.broadcast_response(r, r.mac, det.ResponseField(uid_type, r.uids[uid_type], nonce))
            for qm in queriers:
                r.answered.add(((nonce, uid_type), qm))
        if len(r.answered) > 512:
            r.answered = set()

    def on_response(self, r: Device, mac: int, resp: det.ResponseField) -> None:
        if self.uitrust:
            r.heard[mac] = self.clock.now_us
        rd = r.round
        if rd is None or mac == r.mac:
            return
        q = rd["q"]
        if not det.response_matches(q, resp):
            return
        if mac in rd["uids"]:
            return
        rd["uids"][mac] = resp.uid
        if rd["targets"].get(mac) is None:
            rd["targets"][mac] = (self.clock.now_us - rd["t"]) / US_PER_S
        r.st.pending_table.pop(mac, None)

    def _close_round(self, dev: Device, rd: dict) -> None:
        if dev.round is rd:
            dev.round = None
        led = dev.ledger
        q = rd["q"]
        det.score_round(led, rd["uids"], q.uid_type)
        det.score_timeouts(led, rd["targets"], self.cfg.th_r_s)
        silent = sum(1 for v in rd["targets"].values() if v is None)
        dev.uid_type = int(det.rotate_uid_type(dev.uid_type, silent, len(rd["targets"])))
        st = dev.st
        if not dev.is_root and st.parent is not None and st.parent != self.root.mac and not self._verified(dev, st.parent):
            self._reselect(dev)
        entries = []
        reported = dev.reported
        for m in led.pop_dirty():
            ev = led.entries[m]
            lto = ev.p / (ev.p + ev.n)
            last = reported.get(m)
            if last is None or abs(lto - last) >= REPORT_LTO_STEP:
                reported[m] = lto
                entries.append(det.LtoReportEntry(m, ev.p, ev.n))
        if not entries:
            return
        if dev.is_root:
            self._ingest(dev.mac, 1, entries)
        else:
            self._buffer_report(dev, dev.mac, self._depth(dev), entries)

    def _depth(self, dev: Device) -> int:
        d = 1
        cur = dev
        while not cur.is_root and cur.parent_dev >= 0 and d <= len(self.devices):
            cur = self.devices[cur.parent_dev]
            d += 1
        return d

    def _buffer_report(self, dev: Device, observer: int, depth: int, entries: list) -> None:
        _, old = dev.report_buf.get(observer, (depth, []))
        merged = {e.mac: e for e in old}
        for e in entries:
            merged[e.mac] = e
        dev.report_buf[observer] = (depth, [merged[m] for m in sorted(merged)])

    def _take_reports(self, r: Device, reports: list) -> None:
        for observer, (depth, entries) in reports:
            if r.is_root:
                self._ingest(observer, depth, entries)
            else:
                self._buffer_report(r, observer, depth, entries)

    def _ingest(self, observer: int, depth: int, entries: list) -> None:
        store = self.lto_store
        self.obs_depth[observer] = depth
        now = self.clock.now_us / US_PER_S
        for e in entries:
            key = (observer, e.mac)
            old = store.get(key)
            if old is None or e.p + e.n >= old[0] + old[1]:
                store[key] = (e.p, e.n)
            self.subject_seen[e.mac] = now
            self.retired.pop(e.mac, None)

    # ------------------------------------------------------------------ UITrust: trust epochs

    def _trust_epoch(self) -> None:
        self.clock.after_us(self.omega_us, self._trust_epoch)
        self._retire_stale_subjects()
        report = self.evaluate_trust()
        if report is None:
            return
        self.stats.trust_epochs += 1
        flagged = report.malicious() | {m for m, v in self.retired.items() if v is NodeVerdict.MALICIOUS}
        delta = len(flagged - self.flagged)
        self.flagged = flagged
        self.trust_version += 1
        self.trust_report = report
        root = self.root
        root.trust = report
        root.flags = frozenset(flagged)
        self.ever_flagged |= root.flags
        root.trust_version = self.trust_version
        root.trust_delta = delta
        self._record_detection()
        if delta:
            self.emit_dio(root)

    def _retire_stale_subjects(self) -> None:
        """Drop identities nobody has reported on lately, keeping their last verdict.

        Observers are never retired: their rows feed the similarity and quorum
        computations.
        """
        report = self.trust_report
        if report is None:
            return
        horizon = self.clock.now_us / US_PER_S - STALE_SUBJECT_S
        observers = {o for o, _ in self.lto_store}
        stale = {m for m, t in self.subject_seen.items() if t < horizon and m not in observers}
        if not stale:
            return
        for m in stale:
            self.retired[m] = report.verdict.get(m, NodeVerdict.HONEST)
            del self.subject_seen[m]
        self.lto_store = {k: v for k, v in self.lto_store.items() if k[1] not in stale}

    def evaluate_trust(self) -> TrustReport | None:
        if not self.lto_store:
            return None
        observers = sorted({o for o, _ in self.lto_store})
        subjects = sorted({s for _, s in self.lto_store})
        oi = {m: i for i, m in enumerate(observers)}
        si = {m: j for j, m in enumerate(subjects)}
        lto = np.full((len(observers), len(subjects)), np.nan)
        for (o, s), (p, n) in self.lto_store.items():
            if p + n > 0:
                lto[oi[o], si[s]] = p / (p + n)
        hr = np.array([1.0 / max(1, self.obs_depth.get(o, 1)) for o in observers])
        report = evaluate(lto, observers, subjects, hr, self.params, prev_gr=self.prev_gr)
        self.prev_gr = {m: g for m, g in report.gr.items() if not math.isnan(g)}
        return report

    def _adopt_trust(self, r: Device, trust: tuple) -> None:
        version, report, flags, delta = trust
        r.trust_version = version
        r.trust = report
        r.flags = flags
        r.trust_delta = delta
        if r.st.joined and not r.is_root:
            for m in [m for m in r.st.candidates if m in flags and m != r.st.parent]:
                del r.st.candidates[m]
            self._reselect(r)
        if delta and not r.relay_pending:
            r.relay_pending = True
            self.clock.after_us(int(self.timing_rng.random() * US_PER_S), self._relay_trust, r)

    def _relay_trust(self, r: Device) -> None:
        r.relay_pending = False
        if r.trust_delta:
            self.emit_dio(r)

    # ------------------------------------------------------------------ baselines

    def _baseline_tick(self) -> None:
        self.clock.after_us(self.omega_us, self._baseline_tick)
        now_s = self.clock.now_us / US_PER_S
        if self.rssi_on:
            since = now_s - 2 * self.cfg.query_interval_s
            new = rssi_profile_detect(
                self._recent_rssi(since), self.cfg.eps_rssi_db, self.cfg.rssi_window_s,
                self.cfg.rssi_min_common_observers, since=since,
            )
            fresh = new - self.flagged
            self.flagged |= new
            if fresh:
                for dev in self.devices[1:]:
                    if dev.honest and dev.st.parent in fresh:
                        self._reselect(dev)
        elif self.idcount_on:
            for dev in self.devices[1:]:
                if dev.honest and dev.st.parent in self.idcount.flagged:
                    self._reselect(dev)
        self._record_detection()

    def _recent_rssi(self, since: float) -> dict[int, dict[int, RssiStats]]:
        """Per-observer profiles first heard at or after `since`.

        Profiles are created in time order, so the young ones sit at the tail.
        """
        out = {}
        for obs, seen in self.rssi_hist.items():
            young = {}
            for mac in reversed(seen):
                st = seen[mac]
                if st.first_t < since:
                    break
                st.settle(self.cfg.shadowing_sigma_db, self.shadow_rng)
                young[mac] = st
            if young:
                out[obs] = young
        return out

    # ------------------------------------------------------------------ metrics

    def identity_flags(self) -> set[int]:
        if self.uitrust:
            return set(self.flagged)
        if self.rssi_on:
            return set(self.flagged)
        if self.idcount_on:
            return set(self.idcount.flagged)
        return set()

    def device_verdicts(self, flags: set[int] | None = None) -> dict[int, bool]:
        """Physical device -> flagged as malicious (majority of its observed identities)."""
        flags = self.identity_flags() if flags is None else flags
        out = {}
        for dev in self.devices[1:]:
            if dev.attacker is None:
                out[dev.idx] = dev.mac in flags
            else:
                seen = self.observed.get(dev.idx, set())
                hit = sum(1 for m in seen if m in flags)
                out[dev.idx] = bool(seen) and 2 * hit >= len(seen)
        return out

    def _record_detection(self) -> None:
        if not self.attacker_devs:
            return
        # attackers no honest node has ever heard can be neither seen nor harmful
        active = [i for i in self.attacker_devs if self.observed.get(i)]
        if not active:
            return
        verdicts = self.device_verdicts()
        hit = sum(1 for i in active if verdicts[i])
        t = self.clock.now_us / US_PER_S
        frac = hit / len(active)
        self.detect_series.append((t, frac))
        if frac == 1.0 and self.all_detected_t is None:
            self.all_detected_t = t

    # ------------------------------------------------------------------ run

    def run(self) -> "Network":
        self.boot()
        if self.cfg.defense in (Defense.RSSI_PROFILE, Defense.ID_COUNT) and self.attacker_devs:
            self.clock.schedule_us(self.attack_start_us + self.omega_us, self._baseline_tick)
        self.clock.run(until=self.cfg.duration_s)
        return self
