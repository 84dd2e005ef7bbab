"""Event-driven simulator of saturated CSMA/CA uplink traffic to one AP.

Timing is in integer nanoseconds.  Each node has its own view of the medium:
it is busy while any node in its sensing set (itself included) or the AP is
transmitting.  Once the medium has been idle for DIFS the node reaches idle
slot boundaries every sigma; its backoff counter says how many boundaries to
let pass before transmitting.  The counter is evaluated lazily: an idle node
simply has a scheduled attempt time, and the number of boundaries it passed is
worked out only when the medium turns busy again.

Frame exchange:

* a data frame lasts (L_H + E_P)/R and is decoded by the AP iff no other data
  frame overlaps it;
* a decoded frame is acknowledged SIFS later.  Every node hears the ACK and
  any controller payload it carries;
* a sender learns of a failure when the ACK would have ended (data end +
  SIFS + ACK airtime).  Its view of the medium is released at data end like
  everyone else's, so its slot clock stays aligned with its neighbours'; since
  SIFS + ACK airtime < DIFS it rejoins at the first boundary with them.

A node whose attempt time coincides with the instant its medium turns busy
still transmits (slotted collision semantics).  Ties between nodes are broken
by node id; system events at the same instant run before attempts.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..model import PhyMacConfig, derive_timing
from .strategies import NEVER, StrategySpec, make_strategy
from .topology import Topology

__all__ = ["SimReport", "run_sim", "validate_schedule"]

_TX_END, _ACK_START, _ACK_END, _TIMEOUT, _POLL, _CHURN = range(6)


@dataclass
class SimReport:
    duration_ns: int
    payload_bits: int
    seed: int
    delivered_bits: np.ndarray
    attempts: np.ndarray
    successes: np.ndarray
    collisions: np.ndarray
    ap_idle_slots: int
    ap_busy_periods: int
    ap_busy_ns: int
    window_ns: int
    window_start_ns: np.ndarray
    window_node_bits: np.ndarray  # (n_windows, n_nodes)
    window_active: np.ndarray  # active node count at each window start
    controller_trace: list = field(default_factory=list)
    events: Optional[list] = None

    @property
    def n_nodes(self) -> int:
        return len(self.attempts)

    @property
    def ap_idle_ns(self) -> int:
        return self.duration_ns - self.ap_busy_ns

    @property
    def total_throughput_bps(self) -> float:
        return float(self.delivered_bits.sum()) * 1e9 / self.duration_ns

    @property
    def node_throughput_bps(self) -> np.ndarray:
        return self.delivered_bits * 1e9 / self.duration_ns

    @property
    def mean_idle_slots(self) -> float:
        """Idle slots per AP-sensed busy period; NaN when nothing was sent."""
        if self.ap_busy_periods == 0:
            return float("nan")
        return self.ap_idle_slots / self.ap_busy_periods

    @property
    def busy_fraction(self) -> float:
        return self.ap_busy_ns / self.duration_ns

    @property
    def window_throughput_bps(self) -> np.ndarray:
        """Total throughput per window; the last window may be shorter."""
        ends = np.minimum(self.window_start_ns + self.window_ns, self.duration_ns)
        return self.window_node_bits.sum(axis=1) * 1e9 / (ends - self.window_start_ns)

    def to_dict(self) -> dict:
        return {
            "duration_ns": self.duration_ns,
            "seed": self.seed,
            "payload_bits": self.payload_bits,
            "total_throughput_bps": self.total_throughput_bps,
            "mean_idle_slots": None if self.ap_busy_periods == 0 else self.mean_idle_slots,
            "busy_fraction": self.busy_fraction,
            "nodes": [
                {
                    "id": i,
                    "delivered_bits": int(self.delivered_bits[i]),
                    "attempts": int(self.attempts[i]),
                    "successes": int(self.successes[i]),
                    "collisions": int(self.collisions[i]),
                }
                for i in range(self.n_nodes)
            ],
        }


def _describe(kind: str, payload) -> str:
    """Event label carrying the ACK payload, e.g. ``ack p=0.0307`` or ``ack p0=0.5 j=2``."""
    if payload is None:
        return kind
    if isinstance(payload, tuple):
        return f"{kind} p0={payload[0]:.6g} j={payload[1]}"
    return f"{kind} p={payload:.6g}"


def validate_schedule(schedule, n_max: int) -> list:
    """Churn schedule as [(time_ns, active count), ...] starting at time 0."""
    sched = [(int(t), int(c)) for t, c in schedule]
    if not sched:
        raise ValueError("schedule must not be empty")
    if sched[0][0] != 0:
        raise ValueError("schedule must start at time 0")
    for (t0, _), (t1, _) in zip(sched, sched[1:]):
        if not t1 > t0:
            raise ValueError("schedule times must be strictly increasing")
    for _, c in sched:
        if not 1 <= c <= n_max:
            raise ValueError(f"schedule counts must lie in [1, {n_max}]")
    return sched


def run_sim(
    topology: Topology,
    cfg: PhyMacConfig,
    specs: Union[StrategySpec, Sequence[StrategySpec]],
    duration_ns: int,
    seed: int,
    *,
    controller=None,
    schedule=None,
    window_ns: int = 1_000_000_000,
    trace_events: bool = False,
) -> SimReport:
    """Simulate ``duration_ns`` of saturated uplink traffic.

    ``specs`` is one spec for every node or one per node.  ``controller`` is an
    :class:`~kwcsma.controllers.ApController` whose payload rides on ACKs.
    ``schedule`` lists (time_ns, active count) pairs; nodes join in id order
    and the highest-id active node leaves first.
    """
    n = topology.n_nodes
    if n == 0:
        raise ValueError("need at least one node")
    duration_ns = int(duration_ns)
    if duration_ns < derive_timing(cfg).t_s_ns:
        raise ValueError("duration shorter than one successful transmission")
    if isinstance(specs, StrategySpec):
        specs = [specs] * n
    specs = list(specs)
    if len(specs) != n:
        raise ValueError(f"got {len(specs)} strategy specs for {n} nodes")
    sched = validate_schedule(schedule, n) if schedule is not None else [(0, n)]
    if window_ns <= 0:
        raise ValueError("window_ns must be positive")

    rng = random.Random(seed)
    sigma, sifs, difs = cfg.sigma_ns, cfg.sifs_ns, cfg.difs_ns
    airtime, ack_air = cfg.data_airtime_ns, cfg.ack_airtime_ns
    bits = cfg.payload_bits
    INF = NEVER

    nbrs = [sorted(s) for s in topology.sense_sets]
    others = [sorted(set(range(n)) - s) for s in topology.sense_sets]
    everyone = list(range(n))

    strat = [make_strategy(sp, cfg) for sp in specs]
    active = [False] * n
    leaving = [False] * n
    busy = [0] * n
    idle_since = [0] * n
    att = [INF] * n
    counter = [0] * n
    txing = [False] * n
    corrupt = [False] * n
    stale = [False] * n
    idle_acc = [0] * n
    idle_cnt = [0] * n
    tracks = [s.tracks_idle for s in strat]
    attempts = [0] * n
    successes = [0] * n
    collisions = [0] * n
    success_log: list = []
    events = [] if trace_events else None

    heap: list = []
    seq = 0

    def push(t, kind, node=-1, data=None):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, node, data))
        seq += 1

    # -- AP vantage --------------------------------------------------------------
    ap_active: list = []
    ap = dict(busy=0, idle_since=0, busy_start=0, busy_ns=0, idle_slots=0, periods=0)

    def ap_occupy(t):
        if ap["busy"] == 0:
            gap = t - ap["idle_since"]
            if gap >= difs:
                ap["idle_slots"] += (gap - difs) // sigma
                ap["periods"] += 1
            ap["busy_start"] = t
        ap["busy"] += 1

    def ap_release(t):
        ap["busy"] -= 1
        if ap["busy"] == 0:
            ap["busy_ns"] += t - ap["busy_start"]
            ap["idle_since"] = t

    # -- per-node medium view ---------------------------------------------------
    # occupy()/release() are inlined in the hot loops below; keep them in sync.
    def observe_idle(j, t):
        gap = t - idle_since[j]
        if gap >= difs:
            idle_acc[j] += (gap - difs) // sigma
            idle_cnt[j] += 1
            s = strat[j]
            if idle_cnt[j] >= s.window:
                changed = s.on_idle_window(idle_acc[j] / idle_cnt[j])
                idle_acc[j] = idle_cnt[j] = 0
                if changed and att[j] == INF and not txing[j]:
                    counter[j] = s.draw_backoff(rng)

    def occupy(j, t):
        if busy[j] == 0:
            a = att[j]
            if a != INF and a > t:
                # boundaries at or before t were decisions not to transmit
                el = t - idle_since[j] - difs
                if el >= 0:
                    counter[j] -= el // sigma + 1
                att[j] = INF
            if tracks[j] and active[j]:
                observe_idle(j, t)
        busy[j] += 1

    def release(j, t):
        b = busy[j] - 1
        busy[j] = b
        if b == 0:
            idle_since[j] = t
            if active[j] and not txing[j]:
                att[j] = t + difs + counter[j] * sigma

    last_bcast = None

    def finish(i):
        txing[i] = False
        if leaving[i]:
            leaving[i] = False
            active[i] = False
            stale[i] = False
            return
        if stale[i]:
            stale[i] = False
            strat[i].on_broadcast(last_bcast)
        counter[i] = strat[i].draw_backoff(rng)

    def activate(j, t):
        strat[j] = make_strategy(specs[j], cfg)
        tracks[j] = strat[j].tracks_idle
        idle_acc[j] = idle_cnt[j] = 0
        active[j] = True
        stale[j] = strat[j].listens and last_bcast is not None
        counter[j] = strat[j].draw_backoff(rng)
        if busy[j] == 0:
            idle_since[j] = t
            att[j] = t + difs + counter[j] * sigma
        if events is not None:
            events.append((t, j, "arrive"))

    def deactivate(j, t):
        if txing[j]:
            leaving[j] = True
        else:
            active[j] = False
            att[j] = INF
            stale[j] = False
        if events is not None:
            events.append((t, j, "depart"))

    def apply_churn(target, t):
        present = [j for j in range(n) if active[j] and not leaving[j]]
        while len(present) > target:
            deactivate(present.pop(), t)
        absent = [j for j in range(n) if not active[j]]
        while len(present) < target and absent:
            j = absent.pop(0)
            activate(j, t)
            present.append(j)

    for j in range(sched[0][1]):
        activate(j, 0)
    for t, c in sched[1:]:
        if t <= duration_ns:
            push(t, _CHURN, -1, c)
    if controller is not None:
        push(controller.deadline, _POLL)

    end = duration_ns
    while True:
        ta = min(att)
        th = heap[0][0] if heap else INF
        if th <= ta:
            if th > end:
                break
            t, _, kind, i, data = heapq.heappop(heap)
            if kind == _TX_END:
                ap_active.remove(i)
                ap_release(t)
                attempts[i] += 1
                if not corrupt[i]:
                    successes[i] += 1
                    success_log.append((t, i))
                    payload = controller.on_rx(bits, t) if controller is not None else None
                    push(t + sifs, _ACK_START, i)
                    push(t + sifs + ack_air, _ACK_END, i, payload)
                    if events is not None:
                        events.append((t, i, "rx_ok"))
                else:
                    collisions[i] += 1
                    # the sender's slot clock runs on with everyone else's; it
                    # acts once the ACK timeout has expired
                    for j in nbrs[i]:
                        b = busy[j] - 1
                        busy[j] = b
                        if b == 0:
                            idle_since[j] = t
                            if active[j] and not txing[j]:
                                att[j] = t + difs + counter[j] * sigma
                    push(t + sifs + ack_air, _TIMEOUT, i)
                    if events is not None:
                        events.append((t, i, "rx_fail"))
            elif kind == _ACK_START:
                ap_occupy(t)
                for j in (others[i] if i >= 0 else everyone):
                    occupy(j, t)
            elif kind == _ACK_END:
                ap_release(t)
                if data is not None and data != last_bcast:
                    last_bcast = data
                    for j in range(n):
                        if active[j] and strat[j].listens:
                            stale[j] = True
                if i >= 0:
                    strat[i].on_success(data, rng)
                    finish(i)
                if last_bcast is not None and True in stale:
                    for j in range(n):
                        if stale[j] and not txing[j]:
                            stale[j] = False
                            if strat[j].on_broadcast(last_bcast):
                                counter[j] = strat[j].draw_backoff(rng)
                for j in everyone:
                    b = busy[j] - 1
                    busy[j] = b
                    if b == 0:
                        idle_since[j] = t
                        if active[j] and not txing[j]:
                            att[j] = t + difs + counter[j] * sigma
                if events is not None:
                    events.append((t, i, _describe("ack" if i >= 0 else "control", data)))
            elif kind == _TIMEOUT:
                strat[i].on_failure(rng)
                finish(i)
                if active[i] and busy[i] == 0:
                    # resume at the first boundary of the running slot clock
                    el = t - idle_since[i] - difs
                    if el > 0:
                        counter[i] += -(-el // sigma)
                    att[i] = idle_since[i] + difs + counter[i] * sigma
                if events is not None:
                    events.append((t, i, "timeout"))
            elif kind == _POLL:
                deadline = controller.deadline
                if t >= deadline:
                    payload = controller.poll(t)
                    if payload is not None:
                        push(t, _ACK_START, -1)
                        push(t + ack_air, _ACK_END, -1, payload)
                    deadline = controller.deadline
                push(max(deadline, t + 1), _POLL)
            else:  # _CHURN
                apply_churn(data, t)
        else:
            if ta > end:
                break
            i = att.index(ta)
            att[i] = INF
            txing[i] = True
            if ap_active:
                corrupt[i] = True
                for k in ap_active:
                    corrupt[k] = True
            else:
                corrupt[i] = False
            ap_active.append(i)
            ap_occupy(ta)
            for j in nbrs[i]:
                if busy[j] == 0:
                    a = att[j]
                    if a != INF and a > ta:
                        el = ta - idle_since[j] - difs
                        if el >= 0:
                            counter[j] -= el // sigma + 1
                        att[j] = INF
                    if tracks[j] and active[j]:
                        observe_idle(j, ta)
                busy[j] += 1
            push(ta + airtime, _TX_END, i)
            if events is not None:
                events.append((ta, i, "tx"))

    busy_ns = ap["busy_ns"] + (end - ap["busy_start"] if ap["busy"] else 0)

    n_win = -(-duration_ns // window_ns)
    starts = np.arange(n_win, dtype=np.int64) * window_ns
    win_bits = np.zeros((n_win, n), dtype=np.int64)
    if success_log:
        log = np.asarray(success_log, dtype=np.int64)
        np.add.at(win_bits, (np.minimum(log[:, 0] // window_ns, n_win - 1), log[:, 1]), bits)
    sched_t = np.array([t for t, _ in sched], dtype=np.int64)
    sched_c = np.array([c for _, c in sched])
    win_active = sched_c[np.searchsorted(sched_t, starts, side="right") - 1]

    succ = np.asarray(successes, dtype=np.int64)
    return SimReport(
        duration_ns=duration_ns,
        payload_bits=bits,
        seed=seed,
        delivered_bits=succ * bits,
        attempts=np.asarray(attempts, dtype=np.int64),
        successes=succ,
        collisions=np.asarray(collisions, dtype=np.int64),
        ap_idle_slots=int(ap["idle_slots"]),
        ap_busy_periods=int(ap["periods"]),
        ap_busy_ns=int(busy_ns),
        window_ns=int(window_ns),
        window_start_ns=starts,
        window_node_bits=win_bits,
        window_active=win_active,
        controller_trace=list(controller.trace) if controller is not None else [],
        events=events,
    )
