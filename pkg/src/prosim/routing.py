"""Relay selection and the forwarding state machine of the prediction-based router.

Candidates are scored by ``U = v_sinr * p_sinr + v_q * p_queue`` where the
weights are the sample variances of the two probability lists across the
candidate set. Priorities follow utility; the set is cut to the shortest
prefix whose joint delivery probability reaches the target, and relays wait
``(i - 1) * T`` before forwarding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

from prosim.mobility import VehicleState


@dataclass(frozen=True)
class LinkForecast:
    relay_id: int
    p_link: float
    p_sinr: float
    p_queue: float

    def __post_init__(self):
        for name in ("p_link", "p_sinr", "p_queue"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")


@dataclass(frozen=True)
class CandidateEntry:
    relay_id: int
    utility: float
    priority: int
    p_deliver: float


@dataclass(frozen=True)
class RoutingConfig:
    p_opp_threshold: float = 0.9
    timer_T: float = 0.045
    tie_epsilon: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.p_opp_threshold <= 1.0:
            raise ValueError("p_opp_threshold must lie in (0, 1]")
        if self.timer_T <= 0.0:
            raise ValueError("timer_T must be positive")


@dataclass(frozen=True)
class UtilityWeights:
    v_sinr: float
    v_queue: float
    degenerate: bool


def _distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def moving_toward(v: VehicleState, dest: tuple[float, float]) -> bool:
    """True when the distance from ``v`` to ``dest`` is not increasing."""
    dx, dy = dest[0] - v.position[0], dest[1] - v.position[1]
    vx, vy = v.velocity
    return vx * dx + vy * dy >= 0.0


def build_candidate_set(sender: VehicleState, dest: tuple[float, float],
                        neighbors: Iterable[VehicleState]) -> list[int]:
    """Neighbours closer to ``dest`` than the sender and heading toward it."""
    d_s = _distance(sender.position, dest)
    return [n.id for n in neighbors
            if n.id != sender.id and _distance(n.position, dest) < d_s and moving_toward(n, dest)]


def sample_variance(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2 or min(values) == max(values):
        return 0.0
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values) / (n - 1)


def utility_weights(forecasts: Sequence[LinkForecast]) -> UtilityWeights:
    v_s = sample_variance([f.p_sinr for f in forecasts])
    v_q = sample_variance([f.p_queue for f in forecasts])
    return UtilityWeights(v_s, v_q, v_s == 0.0 and v_q == 0.0)


def delivery_probability(forecast: LinkForecast) -> float:
    """Chance a relay both decodes the packet and has room to queue it."""
    return forecast.p_sinr * forecast.p_queue


def compute_utilities(forecasts: Sequence[LinkForecast], cfg: RoutingConfig | None = None
                      ) -> list[CandidateEntry]:
    """Score and rank candidates; highest utility gets priority 1."""
    if not forecasts:
        raise ValueError("need at least one forecast")
    cfg = cfg or RoutingConfig()
    w = utility_weights(forecasts)
    scored = []
    for f in forecasts:
        if w.degenerate:
            u = 0.5 * (f.p_sinr + f.p_queue)
        else:
            u = w.v_sinr * f.p_sinr + w.v_queue * f.p_queue
        scored.append((u, f))
    # ties within tie_epsilon fall back to the lower relay id
    eps = cfg.tie_epsilon
    scored.sort(key=lambda t: (-round(t[0] / eps) if eps > 0 else -t[0], t[1].relay_id))
    return [CandidateEntry(f.relay_id, u, k + 1, delivery_probability(f))
            for k, (u, f) in enumerate(scored)]


def resolution_ratio(v_sinr: float, v_q: float) -> tuple[float, bool]:
    """Ratio of the larger variance to the smaller; ``(1.0, True)`` if degenerate."""
    if v_sinr == v_q:
        return 1.0, v_sinr == 0.0
    lo, hi = min(v_sinr, v_q), max(v_sinr, v_q)
    if lo == 0.0:
        return math.inf, True
    return hi / lo, False


def opportunistic_delivery(p: Iterable[float]) -> float:
    """Probability at least one relay receives the packet."""
    miss = 1.0
    for pi in p:
        miss *= 1.0 - pi
    return 1.0 - miss


def optimize_candidate_set(entries: Sequence[CandidateEntry], cfg: RoutingConfig
                           ) -> list[CandidateEntry]:
    """Shortest priority prefix meeting the delivery target, else all entries."""
    ordered = sorted(entries, key=lambda e: e.priority)
    miss = 1.0
    for k, e in enumerate(ordered):
        miss *= 1.0 - e.p_deliver
        if 1.0 - miss >= cfg.p_opp_threshold:
            return list(ordered[:k + 1])
    return list(ordered)


def forwarding_timer(priority: int, cfg: RoutingConfig) -> float:
    if priority < 1:
        raise ValueError("priority starts at 1")
    return (priority - 1) * cfg.timer_T


# --- forwarding state machine -------------------------------------------------------


class Status(Enum):
    ARMED = "armed"
    FORWARDED = "forwarded"
    CANCELLED = "cancelled"
    DROPPED = "dropped"


class EventKind(Enum):
    RECEIVED = "received"
    TIMER_FIRED = "timer_fired"
    OVERHEARD_FORWARD = "overheard_forward"


class Action(Enum):
    ARM = "arm"
    DROP = "drop"
    FORWARD = "forward"
    CANCEL = "cancel"
    NONE = "none"


@dataclass(frozen=True)
class ForwardingState:
    packet_id: int
    priority: int
    deadline: float
    status: Status
    hop: int = 0


@dataclass(frozen=True)
class PacketEvent:
    kind: EventKind
    packet_id: int
    time: float
    node_id: int
    candidates: tuple[int, ...] = ()  # priority order, stamped by the sender
    hop: int = 0


def on_packet_event(state: ForwardingState | None, event: PacketEvent, cfg: RoutingConfig
                    ) -> tuple[ForwardingState | None, Action]:
    """One step of a relay's per-packet state machine.

    ``hop`` on a received event is the hop index of the transmission heard;
    an overheard forward only cancels a state armed at an earlier hop.
    """
    if event.kind is EventKind.RECEIVED:
        if state is not None:
            return state, Action.NONE
        if event.node_id not in event.candidates:
            return None, Action.DROP
        i = event.candidates.index(event.node_id) + 1
        new = ForwardingState(event.packet_id, i, event.time + forwarding_timer(i, cfg),
                              Status.ARMED, event.hop)
        return new, Action.ARM
    if state is None:
        return None, Action.NONE
    if event.kind is EventKind.TIMER_FIRED:
        if state.status is Status.ARMED and event.time >= state.deadline:
            return replace(state, status=Status.FORWARDED), Action.FORWARD
        return state, Action.NONE
    if event.kind is EventKind.OVERHEARD_FORWARD:
        if event.hop <= state.hop:
            return state, Action.NONE
        if state.status is Status.ARMED and event.time < state.deadline:
            return replace(state, status=Status.CANCELLED), Action.CANCEL
        if state.status is Status.FORWARDED:
            # already handed to the queue: purge the pending copy
            return replace(state, status=Status.CANCELLED), Action.CANCEL
        return state, Action.NONE
    raise ValueError(f"unknown event kind {event.kind}")
