"""Road grid, vehicle kinematics and distance / link forecasts.

Speeds follow a Wiener process: every step adds ``sigma * sqrt(dt) * g`` with
``g`` standard normal, then the speed is clamped to ``[v_min, v_max]``.
Vehicles move along axis-aligned road segments of a Manhattan grid and pick
their next segment at each intersection among the roads that are currently
unblocked.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from prosim import kernels

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class GaussianSpec:
    """A normal law given by mean and variance.

    ``degenerate`` marks forecasts built from coincident positions, where the
    radial direction is undefined.
    """

    mean: float
    variance: float
    degenerate: bool = False

    def __post_init__(self):
        if not self.variance >= 0.0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class MobilityConfig:
    v_min: float = 30.0 * KMH
    v_max: float = 60.0 * KMH
    default_sigma: float = 1.0
    transmission_range: float = 250.0
    area: tuple[float, float] = (2000.0, 2000.0)
    block_size: float = 500.0
    light_period: float = 30.0

    def __post_init__(self):
        if not 0.0 <= self.v_min <= self.v_max:
            raise ValueError("need 0 <= v_min <= v_max")
        if self.transmission_range <= 0.0:
            raise ValueError("transmission_range must be positive")
        if self.block_size <= 0.0 or min(self.area) <= 0.0:
            raise ValueError("area and block_size must be positive")
        if self.default_sigma < 0.0:
            raise ValueError("default_sigma must be >= 0")


@dataclass
class VehicleState:
    id: int
    position: tuple[float, float]
    segment_id: int
    heading: tuple[float, float]
    speed: float
    sigma: float
    queue: deque = field(default_factory=deque)
    # queue length as announced in a beacon, when the packets are not local
    reported_queue: int | None = None

    @property
    def velocity(self) -> tuple[float, float]:
        return (self.heading[0] * self.speed, self.heading[1] * self.speed)

    @property
    def queue_length(self) -> int:
        if self.reported_queue is not None:
            return self.reported_queue
        return len(self.queue)


@dataclass
class Segment:
    id: int
    a: int  # intersection ids of the two endpoints
    b: int
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    @property
    def unit(self) -> tuple[float, float]:
        n = self.length
        return ((self.end[0] - self.start[0]) / n, (self.end[1] - self.start[1]) / n)


class RoadGraph:
    """Manhattan grid of two-way roads.

    Every intersection keeps exactly one incident road unblocked; the choice
    is redrawn by :meth:`redraw_lights`.
    """

    def __init__(self, segments: list[Segment], intersections: list[tuple[float, float]],
                 area: tuple[float, float]):
        self.segments = segments
        self.intersections = intersections
        self.area = area
        self.incident: list[list[int]] = [[] for _ in intersections]
        for seg in segments:
            self.incident[seg.a].append(seg.id)
            self.incident[seg.b].append(seg.id)
        self.blocked_map: dict[int, int] = {n: inc[0] for n, inc in enumerate(self.incident) if inc}
        self._start = np.array([s.start for s in segments], dtype=float)
        self._unit = np.array([s.unit for s in segments], dtype=float)
        self._length = np.array([s.length for s in segments], dtype=float)

    @classmethod
    def manhattan(cls, area: tuple[float, float] = (2000.0, 2000.0), block_size: float = 500.0):
        width, height = area
        xs = np.arange(0.0, width + 1e-9, block_size)
        ys = np.arange(0.0, height + 1e-9, block_size)
        index = {}
        nodes = []
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                index[i, j] = len(nodes)
                nodes.append((float(x), float(y)))
        segments = []
        for i in range(len(xs)):
            for j in range(len(ys)):
                if i + 1 < len(xs):
                    a, b = index[i, j], index[i + 1, j]
                    segments.append(Segment(len(segments), a, b, nodes[a], nodes[b]))
                if j + 1 < len(ys):
                    a, b = index[i, j], index[i, j + 1]
                    segments.append(Segment(len(segments), a, b, nodes[a], nodes[b]))
        return cls(segments, nodes, area)

    @property
    def total_length(self) -> float:
        return float(self._length.sum())

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            n = stack.pop()
            for sid in self.incident[n]:
                seg = self.segments[sid]
                other = seg.b if seg.a == n else seg.a
                if other not in seen:
                    seen.add(other)
                    stack.append(other)
        return len(seen) == len(self.intersections)

    def redraw_lights(self, rng: np.random.Generator) -> None:
        for n, inc in enumerate(self.incident):
            self.blocked_map[n] = inc[int(rng.integers(len(inc)))] if len(inc) > 1 else inc[0]

    def point_on(self, segment_id: int, offset: float) -> tuple[float, float]:
        p = self._start[segment_id] + self._unit[segment_id] * offset
        return (float(p[0]), float(p[1]))

    def next_segment(self, node: int, incoming: int, rng: np.random.Generator) -> int:
        """Pick the road taken at ``node`` when arriving on ``incoming``."""
        options = [s for s in self.incident[node] if s == self.blocked_map[node] and s != incoming]
        if not options:
            return incoming  # forced U-turn
        if len(options) == 1:
            return options[0]
        return options[int(rng.integers(len(options)))]


class World:
    """All vehicles, stored column-wise so stepping is vectorised."""

    def __init__(self, roads: RoadGraph, cfg: MobilityConfig, segment: np.ndarray,
                 offset: np.ndarray, direction: np.ndarray, speed: np.ndarray,
                 sigma: np.ndarray):
        self.roads = roads
        self.cfg = cfg
        self.segment = np.asarray(segment, dtype=np.int64)
        self.offset = np.asarray(offset, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        self.speed = np.asarray(speed, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.queues: list[deque] = [deque() for _ in range(len(self.segment))]

    def __len__(self) -> int:
        return len(self.segment)

    @classmethod
    def random(cls, n: int, cfg: MobilityConfig, rng: np.random.Generator,
               roads: RoadGraph | None = None) -> "World":
        """Place ``n`` vehicles uniformly over total road length."""
        roads = roads or RoadGraph.manhattan(cfg.area, cfg.block_size)
        lengths = roads._length
        seg = rng.choice(len(lengths), size=n, p=lengths / lengths.sum())
        offset = rng.uniform(0.0, 1.0, size=n) * lengths[seg]
        direction = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
        speed = rng.uniform(cfg.v_min, cfg.v_max, size=n)
        sigma = np.full(n, cfg.default_sigma)
        roads.redraw_lights(rng)
        return cls(roads, cfg, seg, offset, direction, speed, sigma)

    @classmethod
    def from_states(cls, states: Sequence[VehicleState], cfg: MobilityConfig,
                    roads: RoadGraph | None = None) -> "World":
        """Build a world from explicit states; positions are projected onto their segment."""
        roads = roads or RoadGraph.manhattan(cfg.area, cfg.block_size)
        seg, off, direction = [], [], []
        for st in states:
            s = roads.segments[st.segment_id]
            u = s.unit
            rel = (st.position[0] - s.start[0]) * u[0] + (st.position[1] - s.start[1]) * u[1]
            seg.append(st.segment_id)
            off.append(min(max(rel, 0.0), s.length))
            direction.append(1.0 if st.heading[0] * u[0] + st.heading[1] * u[1] >= 0 else -1.0)
        world = cls(roads, cfg, np.array(seg), np.array(off), np.array(direction),
                    np.array([st.speed for st in states]), np.array([st.sigma for st in states]))
        for q, st in zip(world.queues, states):
            q.extend(st.queue)
        return world

    def positions(self) -> np.ndarray:
        return self.roads._start[self.segment] + self.roads._unit[self.segment] * self.offset[:, None]

    def velocities(self) -> np.ndarray:
        return self.roads._unit[self.segment] * (self.direction * self.speed)[:, None]

    def vehicle(self, i: int) -> VehicleState:
        pos = self.roads._start[self.segment[i]] + self.roads._unit[self.segment[i]] * self.offset[i]
        u = self.roads._unit[self.segment[i]] * self.direction[i]
        return VehicleState(
            id=int(i),
            position=(float(pos[0]), float(pos[1])),
            segment_id=int(self.segment[i]),
            heading=(float(u[0]), float(u[1])),
            speed=float(self.speed[i]),
            sigma=float(self.sigma[i]),
            queue=self.queues[i],
        )

    def states(self) -> list[VehicleState]:
        return [self.vehicle(i) for i in range(len(self))]


def step_vehicles(world: World, dt: float, rng: np.random.Generator) -> World:
    """Advance every vehicle by ``dt`` seconds in place and return the world."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    cfg = world.cfg
    n = len(world)
    if n == 0:
        return world
    g = rng.standard_normal(n)
    world.speed = np.clip(world.speed + world.sigma * math.sqrt(dt) * g, cfg.v_min, cfg.v_max)
    world.offset = world.offset + world.direction * world.speed * dt
    lengths = world.roads._length[world.segment]
    over = np.nonzero((world.offset < 0.0) | (world.offset > lengths))[0]
    for i in over:
        _carry_through_intersections(world, int(i), rng)
    return world


def _carry_through_intersections(world: World, i: int, rng: np.random.Generator) -> None:
    roads = world.roads
    seg = roads.segments[world.segment[i]]
    offset = world.offset[i]
    while True:
        length = seg.length
        if offset > length:
            node, leftover = seg.b, offset - length
        elif offset < 0.0:
            node, leftover = seg.a, -offset
        else:
            break
        nxt = roads.segments[roads.next_segment(node, seg.id, rng)]
        if nxt.a == node:
            world.direction[i] = 1.0
            offset = leftover
        else:
            world.direction[i] = -1.0
            offset = nxt.length - leftover
        seg = nxt
    world.segment[i] = seg.id
    world.offset[i] = offset


def _radial(vi: VehicleState, vj: VehicleState) -> tuple[float, float, bool]:
    """Distance and rate of change of distance between two vehicles."""
    dx = vi.position[0] - vj.position[0]
    dy = vi.position[1] - vj.position[1]
    d = math.hypot(dx, dy)
    wx = vi.velocity[0] - vj.velocity[0]
    wy = vi.velocity[1] - vj.velocity[1]
    if d == 0.0:
        return d, math.hypot(wx, wy), True
    return d, (wx * dx + wy * dy) / d, False


def distance_change_distribution(vi: VehicleState, vj: VehicleState, dt: float) -> GaussianSpec:
    """Law of the change in distance between ``vi`` and ``vj`` over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _, radial, degenerate = _radial(vi, vj)
    return GaussianSpec(radial * dt, (vi.sigma ** 2 + vj.sigma ** 2) * dt ** 3, degenerate)


def distance_distribution(vi: VehicleState, vj: VehicleState, dt: float) -> GaussianSpec:
    """Law of the distance between ``vi`` and ``vj`` after ``dt``."""
    d, radial, degenerate = _radial(vi, vj)
    return GaussianSpec(d + radial * dt, (vi.sigma ** 2 + vj.sigma ** 2) * dt ** 3, degenerate)


def link_probability(vi: VehicleState, vj: VehicleState, dt: float, R: float) -> float:
    """Probability that the two vehicles are still within ``R`` after ``dt``."""
    if dt <= 0 or R <= 0:
        raise ValueError("dt and R must be positive")
    d = math.dist(vi.position, vj.position)
    change = distance_change_distribution(vi, vj, dt)
    margin = R - d - change.mean
    if change.variance == 0.0:
        return 1.0 if margin > 0.0 else 0.0
    return float(ndtr(margin / change.std))


def link_probabilities(v: VehicleState, others: Sequence[VehicleState], dt: float,
                       R: float) -> np.ndarray:
    """Vectorised :func:`link_probability` of each of ``others`` against ``v``."""
    if not others:
        return np.zeros(0)
    pos = np.array([o.position for o in others], dtype=float)
    vel = np.array([o.velocity for o in others], dtype=float)
    sig = np.array([o.sigma for o in others], dtype=float)
    vvel = v.velocity
    return kernels.link_probabilities(
        np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1]),
        np.ascontiguousarray(vel[:, 0]), np.ascontiguousarray(vel[:, 1]), sig,
        v.position[0], v.position[1], vvel[0], vvel[1], v.sigma, dt, R)


def expected_neighbor_count(v: VehicleState, world: Iterable[VehicleState], dt: float,
                            R: float) -> float:
    """Expected number of vehicles within ``R`` of ``v`` after ``dt``."""
    others = [o for o in world if o.id != v.id]
    return float(link_probabilities(v, others, dt, R).sum())


def neighbors_at(v: VehicleState, world: Iterable[VehicleState], R: float) -> set[int]:
    """Ids of vehicles within Euclidean distance ``R`` of ``v`` (inclusive)."""
    others = [o for o in world if o.id != v.id]
    if not others:
        return set()
    pos = np.array([o.position for o in others], dtype=float)
    d2 = (pos[:, 0] - v.position[0]) ** 2 + (pos[:, 1] - v.position[1]) ** 2
    return {others[k].id for k in np.nonzero(d2 <= R * R)[0]}
