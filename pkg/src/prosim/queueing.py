"""Forecast of a receiver's packet queue staying below capacity.

The lookahead is divided into ``n_inter = dt / t_m`` transmission intervals.
In each interval either a neighbour sends to the receiver (queue grows), the
receiver sends (queue shrinks), or nobody sends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

_EXACT_TERMS = 32  # below this the binomial terms are summed with exact coefficients


@dataclass(frozen=True)
class QueueConfig:
    p0: float = 0.05
    t_m: float = 0.01
    M: int = 50
    dt: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError("p0 must lie in [0, 1]")
        if self.t_m <= 0.0:
            raise ValueError("t_m must be positive")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.dt < self.t_m:
            raise ValueError("dt must be at least one transmission interval")

    @property
    def n_inter(self) -> float:
        return self.dt / self.t_m


@dataclass(frozen=True)
class QueueForecastInput:
    """Current queue length and expected neighbour counts.

    ``neighbor_counts`` is either one count per interval or a single average.
    """

    current_len: int
    neighbor_counts: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "neighbor_counts", tuple(float(c) for c in self.neighbor_counts))
        if self.current_len < 0:
            raise ValueError("current_len must be >= 0")
        if not self.neighbor_counts:
            raise ValueError("need at least one neighbour count")
        if any(c < 0 for c in self.neighbor_counts):
            raise ValueError("neighbour counts must be >= 0")

    @property
    def mean_count(self) -> float:
        return sum(self.neighbor_counts) / len(self.neighbor_counts)


def prob_any_neighbor_transmits(n: float, p0: float) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    return 1.0 - (1.0 - p0) ** n


def prob_idle_interval(n: float, p0: float) -> float:
    return (1.0 - p0) ** (n + 1.0)


def active_interval_count(neighbor_counts: Sequence[float], cfg: QueueConfig) -> float:
    """Expected number of intervals in which somebody transmits."""
    n_inter = cfg.n_inter
    counts = list(neighbor_counts)
    if len(counts) > 1:
        # one count per interval; a partial last interval is weighted by its fraction
        whole = int(math.floor(n_inter))
        frac = n_inter - whole
        idle = 0.0
        for j in range(whole):
            idle += prob_idle_interval(counts[min(j, len(counts) - 1)], cfg.p0)
        if frac > 0:
            idle += frac * prob_idle_interval(counts[min(whole, len(counts) - 1)], cfg.p0)
        return n_inter - idle
    return n_inter - n_inter * prob_idle_interval(counts[0], cfg.p0)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def headroom_sum(n_active: int, b: int, n_bar: float, p0: float) -> float:
    """Sum of ``C(n, i) (1-(1-p0)^n_bar)^i (1-p0)^(n-i)`` for ``i <= (n + b) // 2``.

    Not clamped; for ``n_bar != 1`` the two factors are not complementary.
    """
    p_net = prob_any_neighbor_transmits(n_bar, p0)
    q = 1.0 - p0
    upper = min(n_active, (n_active + b) // 2)
    if upper == n_active:
        return (p_net + q) ** n_active
    if n_active <= _EXACT_TERMS:
        return sum(math.comb(n_active, i) * p_net ** i * q ** (n_active - i)
                   for i in range(upper + 1))
    if p_net == 0.0:
        return q ** n_active
    if q == 0.0:
        return 0.0
    i = np.arange(upper + 1)
    log_terms = (gammaln(n_active + 1) - gammaln(i + 1) - gammaln(n_active - i + 1)
                 + i * math.log(p_net) + (n_active - i) * math.log(q))
    return float(np.exp(log_terms).sum())


def predict_queue_probability(inp: QueueForecastInput, cfg: QueueConfig) -> float:
    """Probability that the receiver's queue is below capacity after ``cfg.dt``."""
    if inp.current_len > cfg.M:
        raise ValueError("current_len exceeds M")
    b = cfg.M - inp.current_len
    n_active = round_half_up(active_interval_count(inp.neighbor_counts, cfg))
    p = headroom_sum(n_active, b, inp.mean_count, cfg.p0)
    return min(1.0, max(0.0, p))


def queue_mc_oracle(inp: QueueForecastInput, cfg: QueueConfig, rng: np.random.Generator,
                    trials: int, criterion: str = "final") -> float:
    """Simulate the interval process directly.

    Exactly ``round(active_interval_count)`` busy intervals are simulated. In
    each, a neighbour wants to send with probability ``1-(1-p0)^n`` and the
    receiver with ``p0``, conditioned on at least one of them wanting the
    interval; when both do, the neighbour wins with probability
    ``p_net / (p_net + p0)``. Only one packet moves per interval. The
    receiver can only send when its queue is non-empty.

    ``criterion="final"`` counts trials whose queue is at most ``M`` after the
    last interval; ``"path"`` requires it never to exceed ``M``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if criterion not in ("final", "path"):
        raise ValueError("criterion must be 'final' or 'path'")
    n_active = round_half_up(active_interval_count(inp.neighbor_counts, cfg))
    p0 = cfg.p0
    p_net = prob_any_neighbor_transmits(inp.mean_count, p0)
    busy = 1.0 - (1.0 - p_net) * (1.0 - p0)
    if n_active == 0 or busy == 0.0:
        return 1.0 if inp.current_len <= cfg.M else 0.0
    tie = p_net / (p_net + p0)
    arrive_first = p_net * (1.0 - p0) / busy
    both = p_net * p0 / busy
    q = np.full(trials, inp.current_len, dtype=np.int64)
    ok = np.ones(trials, dtype=bool)
    for _ in range(n_active):
        u = rng.random(trials)
        v = rng.random(trials)
        arrival = (u < arrive_first) | ((u < arrive_first + both) & (v < tie))
        q = np.where(arrival, q + 1, np.maximum(q - 1, 0))
        if criterion == "path":
            ok &= q <= cfg.M
    if criterion == "final":
        ok = q <= cfg.M
    return float(ok.mean())
