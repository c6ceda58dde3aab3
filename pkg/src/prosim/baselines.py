"""Comparison relay selectors without prediction.

``greedy_geographic`` is the greedy mode of GPSR: hand the packet to the
neighbour closest to the destination. ``exor_like`` is a generic
opportunistic stand-in: every neighbour that makes progress is a candidate,
ranked by distance to the destination. Neither is a faithful reimplementation
of the street-centric protocols it stands in for.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Iterable

from prosim.mobility import VehicleState
from prosim.routing import CandidateEntry

K_MAX = 4


class BaselineKind(Enum):
    GREEDY_GEOGRAPHIC = "greedy_geographic"
    EXOR_LIKE = "exor_like"


def _progress_neighbors(sender: VehicleState, dest: tuple[float, float],
                        neighbors: Iterable[VehicleState]) -> list[tuple[float, int]]:
    d_s = math.dist(sender.position, dest)
    out = []
    for n in neighbors:
        if n.id == sender.id:
            continue
        d = math.dist(n.position, dest)
        if d < d_s:
            out.append((d, n.id))
    out.sort()
    return out


def greedy_next_hop(sender: VehicleState, dest: tuple[float, float],
                    neighbors: Iterable[VehicleState]) -> int | None:
    """Closest-to-destination neighbour that beats the sender, or ``None`` (void)."""
    closer = _progress_neighbors(sender, dest, neighbors)
    return closer[0][1] if closer else None


def exor_candidates(sender: VehicleState, dest: tuple[float, float],
                    neighbors: Iterable[VehicleState], k_max: int = K_MAX) -> list[CandidateEntry]:
    """Up to ``k_max`` progress-making neighbours, nearest to the destination first."""
    closer = _progress_neighbors(sender, dest, neighbors)[:k_max]
    return [CandidateEntry(rid, -d, k + 1, 1.0) for k, (d, rid) in enumerate(closer)]
