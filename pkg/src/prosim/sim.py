"""Deterministic discrete-event simulation of a vehicular network.

One run places vehicles on the road grid, drives constant-bit-rate flows
through a slotted MAC with SINR-threshold reception and drop-tail queues, and
routes with the prediction-based selector or one of the baselines. Events are
processed in ``(time, seq)`` order and every random draw comes from a stream
derived from the run seed, so a configuration and seed fully determine the
result.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np

from prosim import kernels
from prosim.baselines import K_MAX, exor_candidates, greedy_next_hop
from prosim.mobility import KMH, MobilityConfig, VehicleState, World, step_vehicles
from prosim.queueing import QueueConfig, headroom_sum, prob_idle_interval, round_half_up
from prosim.routing import (Action, EventKind, ForwardingState, LinkForecast, PacketEvent,
                            RoutingConfig, Status, build_candidate_set, compute_utilities,
                            on_packet_event, optimize_candidate_set)
from prosim.sinr import EPS, SinrConfig

ALGORITHMS = ("pro", "greedy", "exor")
DROP_CAUSES = ("queue_overflow", "sinr_fail", "void", "hop_limit", "ttl")
EVENT_KINDS = ("beacon", "packet_generate", "transmit_start", "receive_decide", "timer_fire",
               "mobility_step", "traffic_light")


class ConfigError(ValueError):
    """Invalid simulation configuration; the message names the offending key."""


@dataclass(frozen=True)
class SimConfig:
    """Every knob of one run. Defaults follow the paper's simulation table where it gives one."""

    area_width: float = 2000.0
    area_height: float = 2000.0
    block_size: float = 500.0
    n_vehicles: int = 100
    n_cbr_pairs: int = 20
    cbr_rate: float = 1.0
    sim_duration: float = 300.0
    beacon_interval: float = 1.0
    R: float = 250.0
    M: int = 50
    t_m: float = 0.01
    p0: float = 0.05
    hop_limit: int = 64
    ttl: float = 30.0
    seed: int = 0
    algorithm: str = "pro"
    packet_size: int = 512
    data_rate: float = 2e6
    v_min_kmh: float = 30.0
    v_max_kmh: float = 60.0
    sigma: float = 1.0
    light_period: float = 30.0
    mobility_dt: float = 0.2
    neighbor_timeout: float = 1.5
    void_retries: int = 0
    k_max: int = K_MAX
    alpha: float = 3.0
    beta: float = 10.0
    noise: float | None = None  # None: noise-limited range equals R
    prediction_samples: int = 200
    p_cut: float = 0.01
    interferer_activity: float | None = None  # None: use p0
    p_opp_threshold: float = 0.9
    timer_T: float = 0.045
    traffic_start: float = 1.0
    cs_range: float | None = None  # contention radius of the MAC; None: 2 * R

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, key: str, msg: str) -> None:
            if not cond:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})")

        for key in ("area_width", "area_height", "block_size", "cbr_rate", "sim_duration",
                    "beacon_interval", "R", "t_m", "ttl", "packet_size", "data_rate",
                    "mobility_dt", "neighbor_timeout", "timer_T", "light_period"):
            need(getattr(self, key) > 0, key, "must be positive")
        for key in ("n_vehicles", "M", "hop_limit", "k_max", "prediction_samples"):
            need(int(getattr(self, key)) == getattr(self, key) and getattr(self, key) >= 1,
                 key, "must be a positive integer")
        need(int(self.n_cbr_pairs) == self.n_cbr_pairs and self.n_cbr_pairs >= 0,
             "n_cbr_pairs", "must be a non-negative integer")
        need(self.n_cbr_pairs <= self.n_vehicles * (self.n_vehicles - 1), "n_cbr_pairs",
             "must be <= n_vehicles * (n_vehicles - 1) distinct ordered pairs")
        need(self.void_retries >= 0, "void_retries", "must be >= 0")
        need(0.0 <= self.p0 <= 1.0, "p0", "must lie in [0, 1]")
        need(0.0 <= self.v_min_kmh <= self.v_max_kmh, "v_min_kmh", "need 0 <= v_min <= v_max")
        need(self.sigma >= 0, "sigma", "must be >= 0")
        need(2.0 <= self.alpha <= 5.0, "alpha", "must lie in [2, 5]")
        need(self.beta > 0, "beta", "must be positive")
        need(self.noise is None or self.noise >= 0, "noise", "must be >= 0")
        need(0.0 <= self.p_cut <= 1.0, "p_cut", "must lie in [0, 1]")
        need(self.interferer_activity is None or 0.0 <= self.interferer_activity <= 1.0,
             "interferer_activity", "must lie in [0, 1]")
        need(0.0 < self.p_opp_threshold <= 1.0, "p_opp_threshold", "must lie in (0, 1]")
        need(self.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}")
        need(self.traffic_start >= 0, "traffic_start", "must be >= 0")
        need(self.cs_range is None or self.cs_range >= 0, "cs_range", "must be >= 0")

    @property
    def mobility(self) -> MobilityConfig:
        return MobilityConfig(self.v_min_kmh * KMH, self.v_max_kmh * KMH, self.sigma, self.R,
                              (self.area_width, self.area_height), self.block_size,
                              self.light_period)

    @property
    def sinr(self) -> SinrConfig:
        noise = self.noise if self.noise is not None else self.R ** -self.alpha / self.beta
        return SinrConfig(self.alpha, self.beta, noise, self.prediction_samples, self.seed)

    @property
    def routing(self) -> RoutingConfig:
        return RoutingConfig(self.p_opp_threshold, self.timer_T)

    def queue(self, dt: float) -> QueueConfig:
        return QueueConfig(self.p0, self.t_m, self.M, max(dt, self.t_m))

    @property
    def activity(self) -> float:
        return self.p0 if self.interferer_activity is None else self.interferer_activity

    @property
    def contention_radius(self) -> float:
        return 2.0 * self.R if self.cs_range is None else self.cs_range

    @property
    def tx_time(self) -> float:
        return self.packet_size * 8 / self.data_rate


@dataclass
class Packet:
    id: int
    flow: int
    src: int
    dest: int
    created_at: float
    size: int = 512
    hop_count: int = 0
    candidates: tuple[int, ...] = ()


class SimEvent(NamedTuple):
    time: float
    seq: int
    kind: str
    payload: tuple = ()


@dataclass
class MetricsRecord:
    scenario_id: str
    algorithm: str
    seed: int
    n_vehicles: int
    n_cbr_pairs: int
    generated: int
    delivered: int
    in_flight: int
    pdr: float
    avg_delay: float
    throughput: float
    transmissions: int
    drops: dict = field(default_factory=lambda: {c: 0 for c in DROP_CAUSES})
    pdr_defined: bool = True
    trace_hash: str = ""

    def conserved(self) -> bool:
        return self.generated == self.delivered + sum(self.drops.values()) + self.in_flight


@dataclass
class RunLog:
    """Raw counters of one run, turned into a :class:`MetricsRecord` by :func:`collect_metrics`."""

    generated: int = 0
    delivered: int = 0
    delays: list = field(default_factory=list)
    transmissions: int = 0
    drops: dict = field(default_factory=lambda: {c: 0 for c in DROP_CAUSES})
    in_flight: int = 0


def collect_metrics(log: RunLog, scenario_id: str = "", algorithm: str = "", seed: int = 0,
                    n_vehicles: int = 0, n_cbr_pairs: int = 0) -> MetricsRecord:
    """Delivery ratio, mean delay over delivered packets, and delivered per transmission."""
    defined = log.generated > 0
    pdr = log.delivered / log.generated if defined else math.nan
    delay = sum(log.delays) / len(log.delays) if log.delays else math.nan
    thr = log.delivered / log.transmissions if log.transmissions else 0.0
    return MetricsRecord(scenario_id, algorithm, seed, n_vehicles, n_cbr_pairs, log.generated,
                         log.delivered, log.in_flight, pdr, delay, thr, log.transmissions,
                         dict(log.drops), defined)


def sample_flows(n: int, pairs: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Distinct ordered (source, destination) pairs with source != destination.

    A vehicle may take part in several flows; no flow is repeated.
    """
    if pairs == 0:
        return []
    k = rng.choice(n * (n - 1), size=pairs, replace=False)
    src = k // (n - 1)
    dst = k % (n - 1)
    dst = dst + (dst >= src)
    return [(int(a), int(b)) for a, b in zip(src, dst)]


def enqueue_packet(queue: list, item, capacity: int) -> bool:
    """Drop-tail admission: append unless the queue already holds ``capacity`` items."""
    if len(queue) >= capacity:
        return False
    queue.append(item)
    return True


def mac_schedule(contenders: Sequence[int], positions: np.ndarray, R: float,
                 rng: np.random.Generator) -> list[int]:
    """One transmitter per contention neighbourhood for a slot.

    Contenders are visited in random order; each wins unless an earlier winner
    is within ``R`` of it.
    """
    if len(contenders) == 0:
        return []
    ids = np.asarray(contenders, dtype=np.int64)
    order = rng.permutation(len(ids)).astype(np.int64)
    pos = positions[ids]
    win = kernels.mac_select(order, np.ascontiguousarray(pos[:, 0]),
                             np.ascontiguousarray(pos[:, 1]), R)
    return [int(ids[k]) for k in win]


def reception_decision(transmitters: Sequence[int], listeners: Sequence[int],
                       positions: np.ndarray, sinr: SinrConfig, R: float) -> np.ndarray:
    """Boolean ``(n_tx, n_listeners)``: listener decodes transmitter.

    Every concurrent transmitter interferes with the others; a transmitter
    cannot receive, and nothing is decoded beyond ``R``.
    """
    tx = np.asarray(transmitters, dtype=np.int64)
    ls = np.asarray(listeners, dtype=np.int64)
    if len(tx) == 0 or len(ls) == 0:
        return np.zeros((len(tx), len(ls)), dtype=bool)
    tp = positions[tx]
    lp = positions[ls]
    s = kernels.listener_sinr(np.ascontiguousarray(tp[:, 0]), np.ascontiguousarray(tp[:, 1]),
                              np.ascontiguousarray(lp[:, 0]), np.ascontiguousarray(lp[:, 1]),
                              sinr.alpha, sinr.noise)
    d2 = (tp[:, None, 0] - lp[None, :, 0]) ** 2 + (tp[:, None, 1] - lp[None, :, 1]) ** 2
    ok = (s >= sinr.beta) & (d2 <= R * R)
    busy = set(transmitters)
    for k, u in enumerate(listeners):
        if u in busy:
            ok[:, k] = False
    return ok


@dataclass(eq=False)
class _Entry:
    packet: Packet
    hop: int  # hop index of the transmission this copy was received on
    ready: bool = True
    retries: int = 0


@dataclass
class _PacketRecord:
    packet: Packet
    alive: int = 0
    status: str = "alive"  # alive | delivered | <drop cause>
    last_cause: str | None = None


@dataclass
class _Holder:
    state: ForwardingState
    entry: _Entry | None = None


class Simulator:
    """One simulation run. Use :func:`run_simulation` unless you need the internals."""

    def __init__(self, cfg: SimConfig, initial: Sequence[VehicleState] | None = None,
                 flows: Sequence[tuple[int, int]] | None = None, trace: bool = False,
                 scenario_id: str = ""):
        self.cfg = cfg
        self.scenario_id = scenario_id
        seeds = np.random.SeedSequence(cfg.seed).spawn(5)
        self.rng_mobility, self.rng_traffic, self.rng_mac, self.rng_predict, self.rng_beacon = (
            np.random.default_rng(s) for s in seeds)
        self.mob_cfg = cfg.mobility
        self.sinr_cfg = cfg.sinr
        self.route_cfg = cfg.routing
        if initial is None:
            self.world = World.random(cfg.n_vehicles, self.mob_cfg, self.rng_mobility)
        else:
            self.world = World.from_states(initial, self.mob_cfg)
            self.world.roads.redraw_lights(self.rng_mobility)
        n = len(self.world)
        self.n = n
        self.queues: list[list[_Entry]] = [[] for _ in range(n)]
        self.n_ready = np.zeros(n, dtype=np.int64)
        self.pos = self.world.positions()
        self.vel = self.world.velocities()
        self.b_pos = self.pos.copy()
        self.b_vel = self.vel.copy()
        self.b_time = np.full(n, -math.inf)
        self.b_qlen = np.zeros(n, dtype=np.int64)
        self.heard = np.full((n, n), -math.inf)
        self.events: list = []
        self.seq = 0
        self.now = 0.0
        self.log = RunLog()
        self.packets: dict[int, _PacketRecord] = {}
        self.holders: dict[int, dict[int, _Holder]] = {}
        self.next_pid = 0
        self.peak_queue = 0
        self.hop_senders: dict[tuple[int, int], int] = {}  # (packet, hop) -> transmissions
        self.mac_pending = False
        self.last_slot = -1
        self.trace_enabled = trace
        self.trace: list[str] = []
        self._hash = hashlib.sha256()
        if flows is None:
            flows = sample_flows(n, cfg.n_cbr_pairs, self.rng_traffic)
        self.flows = list(flows)

    # --- event plumbing --------------------------------------------------------------

    def schedule(self, time: float, kind: str, payload: tuple = ()) -> None:
        if time < self.now:
            raise RuntimeError(f"event {kind} scheduled in the past")
        heapq.heappush(self.events, SimEvent(time, self.seq, kind, payload))
        self.seq += 1

    def _record(self, ev: SimEvent, node: int = -1, pid: int = -1) -> None:
        line = f"{ev.time:.17g}\t{ev.seq}\t{ev.kind}\t{node}\t{pid}"
        self._hash.update(line.encode())
        if self.trace_enabled:
            self.trace.append(line)

    def run(self) -> MetricsRecord:
        cfg = self.cfg
        self.schedule(0.0, "mobility_step")
        self.schedule(cfg.light_period, "traffic_light")
        phases = self.rng_beacon.uniform(0.0, cfg.beacon_interval, size=self.n)
        for v in range(self.n):
            self.schedule(float(phases[v]), "beacon", (v,))
        for f, _ in enumerate(self.flows):
            start = cfg.traffic_start + float(self.rng_traffic.uniform(0.0, 1.0 / cfg.cbr_rate))
            if start < cfg.sim_duration:
                self.schedule(start, "packet_generate", (f,))
        handlers = {
            "beacon": self._on_beacon,
            "packet_generate": self._on_generate,
            "transmit_start": self._on_transmit,
            "receive_decide": self._on_receive,
            "timer_fire": self._on_timer,
            "mobility_step": self._on_mobility,
            "traffic_light": self._on_light,
        }
        last = (-math.inf, -1)
        while self.events:
            ev = heapq.heappop(self.events)
            if ev.time > cfg.sim_duration:
                break
            assert (ev.time, ev.seq) > last, "event order violated"
            last = (ev.time, ev.seq)
            self.now = ev.time
            handlers[ev.kind](ev)
        return self._finish()

    def _finish(self) -> MetricsRecord:
        self.log.in_flight = sum(1 for r in self.packets.values() if r.status == "alive")
        rec = collect_metrics(self.log, self.scenario_id, self.cfg.algorithm, self.cfg.seed,
                              self.n, len(self.flows))
        rec.trace_hash = self._hash.hexdigest()
        if not rec.conserved():
            raise RuntimeError("flow conservation violated")
        return rec

    # --- copy accounting -----------------------------------------------------------

    def _kill_copy(self, pid: int, cause: str | None) -> None:
        rec = self.packets[pid]
        rec.alive -= 1
        if cause is not None:
            rec.last_cause = cause
        if rec.alive == 0 and rec.status == "alive":
            final = rec.last_cause or "sinr_fail"
            rec.status = final
            self.log.drops[final] += 1
            self.holders.pop(pid, None)

    def _deliver(self, pid: int) -> None:
        rec = self.packets[pid]
        if rec.status != "alive":
            return
        rec.status = "delivered"
        self.log.delivered += 1
        self.log.delays.append(self.now - rec.packet.created_at)

    # --- handlers ------------------------------------------------------------------

    def _on_mobility(self, ev: SimEvent) -> None:
        self._record(ev)
        if ev.time > 0:
            step_vehicles(self.world, self.cfg.mobility_dt, self.rng_mobility)
            self.pos = self.world.positions()
            self.vel = self.world.velocities()
        self.schedule(ev.time + self.cfg.mobility_dt, "mobility_step")

    def _on_light(self, ev: SimEvent) -> None:
        self._record(ev)
        self.world.roads.redraw_lights(self.rng_mobility)
        self.schedule(ev.time + self.cfg.light_period, "traffic_light")

    def _on_beacon(self, ev: SimEvent) -> None:
        (v,) = ev.payload
        self._record(ev, v)
        self.b_pos[v] = self.pos[v]
        self.b_vel[v] = self.vel[v]
        self.b_time[v] = self.now
        self.b_qlen[v] = len(self.queues[v])
        d2 = ((self.pos - self.pos[v]) ** 2).sum(axis=1)
        hear = d2 <= self.cfg.R ** 2
        hear[v] = False
        self.heard[hear, v] = self.now
        self.schedule(self.now + self.cfg.beacon_interval, "beacon", (v,))

    def _on_generate(self, ev: SimEvent) -> None:
        (f,) = ev.payload
        src, dst = self.flows[f]
        pid = self.next_pid
        self.next_pid += 1
        self._record(ev, src, pid)
        pkt = Packet(pid, f, src, dst, self.now, self.cfg.packet_size)
        rec = _PacketRecord(pkt)
        self.packets[pid] = rec
        self.log.generated += 1
        if self._enqueue(src, _Entry(pkt, 0)):
            rec.alive = 1
            self._wake_mac()
        else:
            rec.status = "queue_overflow"
            self.log.drops["queue_overflow"] += 1
        nxt = self.now + 1.0 / self.cfg.cbr_rate
        if nxt < self.cfg.sim_duration:
            self.schedule(nxt, "packet_generate", (f,))

    def _enqueue(self, v: int, entry: _Entry) -> bool:
        if not enqueue_packet(self.queues[v], entry, self.cfg.M):
            return False
        self.n_ready[v] += 1
        self.peak_queue = max(self.peak_queue, len(self.queues[v]))
        return True

    def _wake_mac(self) -> None:
        if self.mac_pending:
            return
        slot = max(int(math.ceil(self.now / self.cfg.t_m - 1e-9)), self.last_slot + 1)
        self.mac_pending = True
        self.schedule(max(slot * self.cfg.t_m, self.now), "transmit_start", (slot,))

    def _contenders(self) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.n_ready)]

    def _on_transmit(self, ev: SimEvent) -> None:
        (slot,) = ev.payload
        self._record(ev)
        self.mac_pending = False
        self.last_slot = slot
        contenders = self._contenders()
        winners = mac_schedule(contenders, self.pos, self.cfg.contention_radius, self.rng_mac)
        txs = []
        for v in winners:
            entry = next(e for e in self.queues[v] if e.ready)
            tx = self._prepare_transmission(v, entry)
            if tx is not None:
                txs.append(tx)
        if txs:
            self.schedule(self.now + self.cfg.tx_time, "receive_decide", tuple(txs))
        if self.n_ready.any():
            self._wake_mac()

    def _prepare_transmission(self, v: int, entry: _Entry):
        cfg = self.cfg
        pkt = entry.packet
        pid = pkt.id
        self.queues[v].remove(entry)
        self.n_ready[v] -= 1
        holders = self.holders.get(pid)
        if holders is not None:
            holders.pop(v, None)
        if self.now - pkt.created_at > cfg.ttl:
            self._kill_copy(pid, "ttl")
            return None
        if entry.hop >= cfg.hop_limit:
            self._kill_copy(pid, "hop_limit")
            return None
        cands = self._select(v, pkt.dest)
        if not cands:
            if entry.retries < cfg.void_retries:
                entry.retries += 1
                entry.ready = False
                self.queues[v].insert(0, entry)
                self.schedule(self.now + cfg.beacon_interval, "timer_fire", ("retry", v, pid))
                return None
            self._kill_copy(pid, "void")
            return None
        self.log.transmissions += 1
        key = (pid, entry.hop + 1)
        self.hop_senders[key] = self.hop_senders.get(key, 0) + 1
        return (v, pid, entry.hop + 1, tuple(cands))

    def _on_receive(self, ev: SimEvent) -> None:
        txs = ev.payload
        self._record(ev, txs[0][0], txs[0][1])
        senders = [t[0] for t in txs]
        listeners: set[int] = set()
        for v, pid, hop, cands in txs:
            listeners.update(cands)
            listeners.add(self.packets[pid].packet.dest)
            listeners.update(self.holders.get(pid, {}).keys())
        listeners.difference_update(senders)
        lst = sorted(listeners)
        index = {u: k for k, u in enumerate(lst)}
        ok = reception_decision(senders, lst, self.pos, self.sinr_cfg, self.cfg.R)
        for k, (v, pid, hop, cands) in enumerate(txs):
            decoded = {u for u in lst if ok[k, index[u]]}
            self._handle_delivery(v, pid, hop, cands, decoded)

    def _handle_delivery(self, sender: int, pid: int, hop: int, cands: tuple[int, ...],
                         decoded: set[int]) -> None:
        rec = self.packets[pid]
        dest = rec.packet.dest
        reached_dest = dest in decoded
        if reached_dest:
            self._deliver(pid)
        holders = self.holders.setdefault(pid, {})
        # overheard forward: relays still holding an earlier copy stand down
        for u in sorted(holders):
            if u == sender or u not in decoded:
                continue
            h = holders[u]
            new, action = on_packet_event(h.state, PacketEvent(
                EventKind.OVERHEARD_FORWARD, pid, self.now, u, cands, hop), self.route_cfg)
            if action is Action.CANCEL:
                if h.entry is not None and h.entry in self.queues[u]:
                    self.queues[u].remove(h.entry)
                    self.n_ready[u] -= h.entry.ready
                del holders[u]
                self._kill_copy(pid, None)
            else:
                h.state = new
        armed = 0
        for u in cands:
            if u == dest or u not in decoded or u in holders:
                continue
            new, action = on_packet_event(None, PacketEvent(
                EventKind.RECEIVED, pid, self.now, u, cands, hop), self.route_cfg)
            if action is Action.ARM:
                holders[u] = _Holder(new)
                rec.alive += 1
                armed += 1
                self.schedule(new.deadline, "timer_fire", ("fwd", u, pid))
        cause = None if (armed or reached_dest) else "sinr_fail"
        self._kill_copy(pid, cause)

    def _on_timer(self, ev: SimEvent) -> None:
        what, v, pid = ev.payload
        self._record(ev, v, pid)
        if what == "retry":
            for e in self.queues[v]:
                if e.packet.id == pid and not e.ready:
                    e.ready = True
                    self.n_ready[v] += 1
                    self._wake_mac()
                    break
            return
        holder = self.holders.get(pid, {}).get(v)
        if holder is None:
            return
        new, action = on_packet_event(holder.state, PacketEvent(
            EventKind.TIMER_FIRED, pid, self.now, v), self.route_cfg)
        holder.state = new
        if action is not Action.FORWARD:
            return
        entry = _Entry(self.packets[pid].packet, new.hop)
        if self._enqueue(v, entry):
            holder.entry = entry
            self._wake_mac()
        else:
            del self.holders[pid][v]
            self._kill_copy(pid, "queue_overflow")

    # --- relay selection -----------------------------------------------------------

    def _known(self, v: int) -> np.ndarray:
        """Neighbour ids of ``v`` from its beacon table."""
        return np.nonzero(self.now - self.heard[v] <= self.cfg.neighbor_timeout)[0]

    def _beacon_state(self, u: int) -> VehicleState:
        vx, vy = self.b_vel[u]
        speed = math.hypot(vx, vy)
        heading = (vx / speed, vy / speed) if speed > 0 else (0.0, 0.0)
        return VehicleState(int(u), (float(self.b_pos[u, 0]), float(self.b_pos[u, 1])),
                            int(self.world.segment[u]), heading, speed,
                            float(self.world.sigma[u]), reported_queue=int(self.b_qlen[u]))

    def _own_state(self, v: int) -> VehicleState:
        st = self.world.vehicle(v)
        st.position = (float(self.pos[v, 0]), float(self.pos[v, 1]))
        st.reported_queue = len(self.queues[v])
        return st

    def _select(self, v: int, dest: int) -> list[int]:
        known = self._known(v)
        if dest in known:
            return [int(dest)]
        if len(known) == 0:
            return []
        dest_pos = (float(self.pos[dest, 0]), float(self.pos[dest, 1]))
        # only progress-making neighbours can be chosen by any selector
        d_me = math.dist(self.pos[v], dest_pos)
        d_nb = np.hypot(self.b_pos[known, 0] - dest_pos[0], self.b_pos[known, 1] - dest_pos[1])
        closer = known[d_nb < d_me]
        if self.cfg.algorithm == "pro":
            # cheap superset of the heading test; the exact one runs in build_candidate_set
            heading = ((self.b_vel[closer, 0] * (dest_pos[0] - self.b_pos[closer, 0])
                        + self.b_vel[closer, 1] * (dest_pos[1] - self.b_pos[closer, 1])) >= -1e-6)
            closer = closer[heading]
        if len(closer) == 0:
            return []
        me = self._own_state(v)
        table = [self._beacon_state(u) for u in closer]
        algo = self.cfg.algorithm
        if algo == "greedy":
            nh = greedy_next_hop(me, dest_pos, table)
            return [] if nh is None else [nh]
        if algo == "exor":
            return [e.relay_id for e in exor_candidates(me, dest_pos, table, self.cfg.k_max)]
        return self._select_pro(me, dest_pos, table, known)

    def _select_pro(self, me: VehicleState, dest_pos: tuple[float, float],
                    table: list[VehicleState], known: np.ndarray) -> list[int]:
        cfg = self.cfg
        cands = build_candidate_set(me, dest_pos, table)
        if not cands:
            return []
        # what the sender knows: its beacon table plus itself (last entry)
        ids = np.append(known, me.id)
        pos = self.b_pos[ids]
        vel = self.b_vel[ids]
        pos[-1] = me.position
        vel[-1] = me.velocity
        px, py = np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1])
        vx, vy = np.ascontiguousarray(vel[:, 0]), np.ascontiguousarray(vel[:, 1])
        sig = self.world.sigma[ids].astype(float)
        where = {int(u): k for k, u in enumerate(known)}
        cidx = np.array([where[c] for c in cands], dtype=np.int64)
        worst = (len(cands) - 1) * cfg.timer_T
        dts = np.maximum(self.now - self.b_time[ids[cidx]] + worst, cfg.t_m)
        forecasts = pro_forecasts(len(ids) - 1, cidx, ids, px, py, vx, vy, sig,
                                  self.b_qlen[ids[cidx]], dts, cfg, self.sinr_cfg,
                                  self.rng_predict)
        entries = optimize_candidate_set(compute_utilities(forecasts, self.route_cfg),
                                         self.route_cfg)
        return [e.relay_id for e in entries]


def pro_forecasts(sender: int, cands: np.ndarray, ids: np.ndarray, px: np.ndarray,
                  py: np.ndarray, vx: np.ndarray, vy: np.ndarray, sig: np.ndarray,
                  queue_lens: np.ndarray, dts: np.ndarray, cfg: SimConfig, sinr: SinrConfig,
                  rng: np.random.Generator) -> list[LinkForecast]:
    """Link, SINR and queue forecasts for each candidate relay.

    The arrays describe every vehicle the sender knows about, itself included
    at index ``sender``; ``cands`` indexes the candidates and ``dts`` gives
    each one's lookahead.
    """
    p_link, p_sinr, n_bar = kernels.forecast_links(
        sender, np.ascontiguousarray(cands, dtype=np.int64), px, py, vx, vy, sig,
        np.ascontiguousarray(dts, dtype=float), cfg.R, cfg.p_cut, cfg.activity,
        cfg.prediction_samples, sinr.alpha, sinr.beta, sinr.noise, EPS, rng)
    out = []
    for j, c in enumerate(cands):
        n_inter = max(float(dts[j]), cfg.t_m) / cfg.t_m
        nb = float(n_bar[j])
        n_active = round_half_up(n_inter * (1.0 - prob_idle_interval(nb, cfg.p0)))
        b = max(cfg.M - int(queue_lens[j]), 0)
        p_queue = min(1.0, max(0.0, headroom_sum(n_active, b, nb, cfg.p0)))
        out.append(LinkForecast(int(ids[c]), min(1.0, max(0.0, float(p_link[j]))),
                                float(p_sinr[j]), p_queue))
    return out


def run_simulation(cfg: SimConfig, initial: Sequence[VehicleState] | None = None,
                   flows: Sequence[tuple[int, int]] | None = None,
                   scenario_id: str = "") -> MetricsRecord:
    """Run one simulation and return its metrics."""
    return Simulator(cfg, initial, flows, scenario_id=scenario_id).run()


def config_dict(cfg: SimConfig) -> dict:
    return asdict(cfg)


def config_keys() -> list[str]:
    return [f.name for f in fields(SimConfig)]
