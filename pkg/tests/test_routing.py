"""Relay scoring, candidate trimming, priority timers and the forwarding state machine."""

import itertools
import math

import numpy as np
import pytest

from conftest import vehicle
from prosim.baselines import exor_candidates, greedy_next_hop
from prosim.routing import (Action, CandidateEntry, EventKind, LinkForecast, PacketEvent,
                            RoutingConfig, Status, build_candidate_set, compute_utilities,
                            delivery_probability, forwarding_timer, moving_toward,
                            on_packet_event, optimize_candidate_set, opportunistic_delivery,
                            resolution_ratio, sample_variance, utility_weights)

TABLE_SINR = [0.11, 0.34, 0.67, 0.49]
TABLE_QUEUE = [0.81, 0.83, 0.815, 0.824]


def _forecasts(sinr, queue, ids=None):
    ids = ids or range(1, len(sinr) + 1)
    return [LinkForecast(i, 1.0, s, q) for i, s, q in zip(ids, sinr, queue)]


def _p_opp(ps):
    """Independent recomputation of 1 - prod(1 - p)."""
    return 1.0 - float(np.prod([1.0 - p for p in ps]))


# --- candidate set ---------------------------------------------------------------------


def test_candidate_set_empty():
    """[TRIVIAL] no neighbours, no candidates."""
    assert build_candidate_set(vehicle(0, 0, 0), (1000, 0), []) == []


def test_candidate_set_single_approaching():
    """[TRIVIAL] one closer, approaching neighbour is the whole set."""
    assert build_candidate_set(vehicle(0, 0, 0), (1000, 0), [vehicle(1, 100, 0, 10, 0)]) == [1]


def test_candidate_set_mixed_scene():
    """[DERIVED] six neighbours against a direct filter on progress and heading."""
    s, dest = vehicle(0, 500, 500), (1500, 500)
    nbrs = [vehicle(1, 600, 500, 10, 0), vehicle(2, 600, 500, -10, 0), vehicle(3, 400, 500, 10, 0),
            vehicle(4, 500, 650, 0, -10), vehicle(5, 700, 500), vehicle(6, 550, 300, 0, 10)]
    expect = [n.id for n in nbrs
              if math.dist(n.position, dest) < math.dist(s.position, dest)
              and n.velocity[0] * (dest[0] - n.position[0]) + n.velocity[1] * (dest[1] - n.position[1]) >= 0]
    assert build_candidate_set(s, dest, nbrs) == expect == [1, 5, 6]
    assert moving_toward(vehicle(9, 0, 0), dest)  # stationary counts as toward


# --- utilities --------------------------------------------------------------------------


def test_table_one_variances():
    """[PAPER] Table 1: v_SINR about 0.056 and v_Q about 8.2e-5 with the n - 1 divisor."""
    w = utility_weights(_forecasts(TABLE_SINR, TABLE_QUEUE))
    assert w.v_sinr == pytest.approx(0.056, abs=0.001)
    assert w.v_queue == pytest.approx(8.2e-5, abs=0.3e-5)
    assert sample_variance(TABLE_SINR) == pytest.approx(np.var(TABLE_SINR, ddof=1))


def test_table_one_order():
    """[DERIVED] Table 1 utilities: node 3 (0.0376) > node 4 (0.0275) > node 2 > node 1.

    The quoted values use the rounded weights 0.056 and 8.2e-5; the code uses
    the unrounded variances, which shift them in the fourth decimal.
    """
    entries = compute_utilities(_forecasts(TABLE_SINR, TABLE_QUEUE))
    assert [e.relay_id for e in entries] == [3, 4, 2, 1]
    assert [e.priority for e in entries] == [1, 2, 3, 4]
    by_id = {e.relay_id: e.utility for e in entries}
    assert 0.056 * 0.67 + 8.2e-5 * 0.815 == pytest.approx(0.0376, abs=1e-4)
    assert 0.056 * 0.49 + 8.2e-5 * 0.824 == pytest.approx(0.0275, abs=1e-4)
    v_s, v_q = np.var(TABLE_SINR, ddof=1), np.var(TABLE_QUEUE, ddof=1)
    for node in range(1, 5):
        assert by_id[node] == pytest.approx(v_s * TABLE_SINR[node - 1] + v_q * TABLE_QUEUE[node - 1])


def test_identical_forecasts_tie_on_id():
    """[TRIVIAL] equal forecasts give equal utilities and id-ordered priorities."""
    entries = compute_utilities(_forecasts([0.5] * 3, [0.7] * 3, ids=[9, 2, 5]))
    assert [e.relay_id for e in entries] == [2, 5, 9]
    assert len({e.utility for e in entries}) == 1
    assert entries[0].utility == pytest.approx(0.6)


def test_single_candidate_fallback():
    """[TRIVIAL] one candidate: zero variances, utility is the plain mean."""
    (e,) = compute_utilities(_forecasts([0.4], [0.8]))
    assert e.utility == pytest.approx(0.6) and e.priority == 1


def test_resolution_ratio():
    """[TRIVIAL] equal variances 1; Table 1 about 683; a zero variance is flagged."""
    assert resolution_ratio(0.3, 0.3) == (1.0, False)
    assert resolution_ratio(0.0, 0.0) == (1.0, True)
    r, flag = resolution_ratio(0.056, 8.2e-5)
    assert r == pytest.approx(683, rel=1e-3) and not flag
    assert resolution_ratio(0.0, 0.2)[1]


def test_delivery_probability():
    """[DERIVED] delivery is the product of SINR and queue forecasts."""
    assert delivery_probability(LinkForecast(1, 1.0, 1.0, 1.0)) == 1.0
    assert delivery_probability(LinkForecast(1, 1.0, 0.67, 0.815)) == pytest.approx(0.546, abs=1e-3)
    assert delivery_probability(LinkForecast(1, 1.0, 0.0, 0.4)) == 0.0


def test_order_invariant_to_queue_shift(rng):
    """[TRIVIAL] adding a constant to every queue forecast keeps the priority order."""
    for _ in range(200):
        k = int(rng.integers(2, 7))
        s, q = rng.uniform(0, 0.9, k), rng.uniform(0, 0.9, k)
        c = rng.uniform(0, 0.1)
        a = compute_utilities(_forecasts(s, q))
        b = compute_utilities(_forecasts(s, q + c))
        assert [e.relay_id for e in a] == [e.relay_id for e in b]


def test_order_invariant_to_label_swap(rng):
    """[TRIVIAL] swapping the SINR and queue lists gives the same priorities."""
    for _ in range(200):
        k = int(rng.integers(2, 7))
        s, q = rng.uniform(0, 1, k), rng.uniform(0, 1, k)
        a = compute_utilities(_forecasts(s, q))
        b = compute_utilities(_forecasts(q, s))
        assert [e.relay_id for e in a] == [e.relay_id for e in b]
        assert sorted(e.priority for e in a) == list(range(1, k + 1))


# --- candidate trimming -------------------------------------------------------------------


def _entries(ps):
    return [CandidateEntry(k + 1, 1.0 - k * 0.01, k + 1, p) for k, p in enumerate(ps)]


def test_trim_single_entry():
    """[TRIVIAL] one entry at 0.7 with target 0.6 is kept."""
    kept = optimize_candidate_set(_entries([0.7]), RoutingConfig(p_opp_threshold=0.6))
    assert len(kept) == 1 and opportunistic_delivery([0.7]) == pytest.approx(0.7)


def test_trim_two_of_three():
    """[DERIVED] [0.9, 0.8, 0.7] with target 0.95 keeps two (1 - 0.1 * 0.2 = 0.98)."""
    kept = optimize_candidate_set(_entries([0.9, 0.8, 0.7]), RoutingConfig(p_opp_threshold=0.95))
    assert [e.relay_id for e in kept] == [1, 2]


def test_trim_fallback_keeps_all():
    """[DERIVED] [0.5, 0.5] with target 0.9 never reaches it, so both stay."""
    kept = optimize_candidate_set(_entries([0.5, 0.5]), RoutingConfig(p_opp_threshold=0.9))
    assert len(kept) == 2


def test_trim_is_minimal_prefix(rng):
    """[DERIVED] 1000 random lists: the result is the shortest prefix reaching the target."""
    for _ in range(1000):
        ps = list(rng.uniform(0, 1, int(rng.integers(1, 9))))
        cfg = RoutingConfig(p_opp_threshold=float(rng.uniform(0.05, 1.0)))
        kept = optimize_candidate_set(_entries(ps), cfg)
        ok = [k for k in range(1, len(ps) + 1) if _p_opp(ps[:k]) >= cfg.p_opp_threshold]
        assert len(kept) == (ok[0] if ok else len(ps))
        if ok and len(kept) > 1:
            assert _p_opp(ps[:len(kept) - 1]) < cfg.p_opp_threshold


def test_p_opp_monotone(rng):
    """[TRIVIAL] raising one member's probability never lowers the set's delivery."""
    for _ in range(200):
        ps = rng.uniform(0, 1, 4)
        j = int(rng.integers(4))
        up = ps.copy()
        up[j] = min(1.0, up[j] + rng.uniform(0, 0.3))
        assert opportunistic_delivery(up) >= opportunistic_delivery(ps) - 1e-15


# --- timers and state machine ---------------------------------------------------------------


def test_timer_values():
    """[PAPER] first relay immediate; third relay waits 2 * 45 ms; custom T keeps i = 1 at zero."""
    cfg = RoutingConfig()
    assert forwarding_timer(1, cfg) == 0.0
    assert forwarding_timer(3, cfg) == pytest.approx(0.090)
    assert forwarding_timer(1, RoutingConfig(timer_T=0.7)) == 0.0
    with pytest.raises(ValueError):
        forwarding_timer(0, cfg)


def _receive(node, cands, t=0.0, pid=7, hop=0):
    return PacketEvent(EventKind.RECEIVED, pid, t, node, tuple(cands), hop)


def test_first_priority_forwards_at_once():
    """[TRIVIAL] priority 1 arms with a zero timer and forwards at t + 0."""
    cfg = RoutingConfig()
    st, act = on_packet_event(None, _receive(4, [4, 5]), cfg)
    assert act is Action.ARM and st.deadline == 0.0
    st, act = on_packet_event(st, PacketEvent(EventKind.TIMER_FIRED, 7, 0.0, 4), cfg)
    assert act is Action.FORWARD and st.status is Status.FORWARDED


def test_second_priority_cancelled_by_overhearing():
    """[PAPER] priority 2 overhears priority 1 at t + 0 < t + 45 ms and cancels."""
    cfg = RoutingConfig()
    st, _ = on_packet_event(None, _receive(5, [4, 5]), cfg)
    st, act = on_packet_event(st, PacketEvent(EventKind.OVERHEARD_FORWARD, 7, 0.0, 5, hop=1), cfg)
    assert act is Action.CANCEL and st.status is Status.CANCELLED
    st, act = on_packet_event(st, PacketEvent(EventKind.TIMER_FIRED, 7, 0.045, 5), cfg)
    assert act is Action.NONE


def test_second_priority_forwards_when_first_missed():
    """[DERIVED] priority 1 misses the packet, so priority 2 forwards at t + 45 ms."""
    cfg = RoutingConfig()
    st, _ = on_packet_event(None, _receive(5, [4, 5], t=1.0), cfg)
    st, act = on_packet_event(st, PacketEvent(EventKind.TIMER_FIRED, 7, 1.0 + 0.045, 5), cfg)
    assert act is Action.FORWARD and st.deadline == pytest.approx(1.045)


def test_duplicate_receive_is_idempotent():
    """[TRIVIAL] a second copy keeps the earliest state."""
    cfg = RoutingConfig()
    st, _ = on_packet_event(None, _receive(5, [4, 5], t=1.0), cfg)
    again, act = on_packet_event(st, _receive(5, [4, 5], t=1.2), cfg)
    assert again == st and act is Action.NONE


def test_non_candidate_drops():
    """[TRIVIAL] a listener outside the candidate list ignores the packet."""
    st, act = on_packet_event(None, _receive(9, [4, 5]), RoutingConfig())
    assert st is None and act is Action.DROP


def _run_hop(cands, received, cfg, t0=0.0):
    """Play one hop with perfect overhearing; return (node, time) of every forward."""
    states = {}
    for node, got in zip(cands, received):
        if got:
            states[node], act = on_packet_event(None, _receive(node, cands, t=t0), cfg)
            assert act is Action.ARM
    forwards = []
    for node in sorted(states, key=lambda n: (states[n].deadline, n)):
        st = states[node]
        st, act = on_packet_event(st, PacketEvent(EventKind.TIMER_FIRED, 7, st.deadline, node), cfg)
        states[node] = st
        if act is Action.FORWARD:
            forwards.append((node, st.deadline))
            for other in states:
                if other != node:
                    states[other], _ = on_packet_event(
                        states[other],
                        PacketEvent(EventKind.OVERHEARD_FORWARD, 7, st.deadline, other, hop=1), cfg)
    return forwards


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_exhaustive_reception_patterns(k):
    """[DERIVED] every reception pattern over k candidates: at most one forward per hop.

    The highest-priority receiver forwards, at exactly (i - 1) * 45 ms.
    """
    cfg = RoutingConfig()
    cands = [10 + j for j in range(k)]
    for received in itertools.product([False, True], repeat=k):
        forwards = _run_hop(cands, received, cfg, t0=2.0)
        if not any(received):
            assert forwards == []
            continue
        i = received.index(True) + 1
        assert len(forwards) == 1
        node, t = forwards[0]
        assert node == cands[i - 1]
        assert t == pytest.approx(2.0 + (i - 1) * 0.045, abs=1e-12)


def test_overheard_older_hop_does_not_cancel():
    """[TRIVIAL] a forward overheard from the same or an earlier hop leaves the timer armed."""
    cfg = RoutingConfig()
    st, _ = on_packet_event(None, _receive(5, [4, 5], hop=3), cfg)
    st2, act = on_packet_event(st, PacketEvent(EventKind.OVERHEARD_FORWARD, 7, 0.01, 5, hop=3), cfg)
    assert act is Action.NONE and st2.status is Status.ARMED


# --- baselines --------------------------------------------------------------------------------


def test_greedy_void():
    """[TRIVIAL] nobody closer to the destination: void."""
    s = vehicle(0, 500, 0)
    assert greedy_next_hop(s, (1000, 0), [vehicle(1, 400, 0), vehicle(2, 500, 600)]) is None


def test_greedy_unique_closer():
    """[TRIVIAL] a single closer neighbour is chosen."""
    s = vehicle(0, 500, 0)
    assert greedy_next_hop(s, (1000, 0), [vehicle(1, 400, 0), vehicle(2, 600, 0)]) == 2


def test_greedy_matches_scan(rng):
    """[DERIVED] random ten-neighbour scenes against an argmin over the filtered set."""
    for _ in range(300):
        s = vehicle(0, *rng.uniform(0, 1000, 2))
        dest = tuple(rng.uniform(0, 1000, 2))
        nbrs = [vehicle(k, *rng.uniform(0, 1000, 2)) for k in range(1, 11)]
        d_s = math.dist(s.position, dest)
        closer = [(math.dist(n.position, dest), n.id) for n in nbrs if math.dist(n.position, dest) < d_s]
        expect = min(closer)[1] if closer else None
        got = greedy_next_hop(s, dest, nbrs)
        assert got == expect
        if got is not None:
            assert math.dist(nbrs[got - 1].position, dest) < d_s


def test_exor_single():
    """[TRIVIAL] one closer neighbour gets priority 1."""
    (e,) = exor_candidates(vehicle(0, 0, 0), (1000, 0), [vehicle(3, 100, 0)])
    assert e.relay_id == 3 and e.priority == 1


def test_exor_keeps_nearest_to_destination():
    """[DERIVED] five closer neighbours, k_max = 3: the three nearest the destination, in order."""
    nbrs = [vehicle(k, 100 * k, 0) for k in range(1, 6)]
    out = exor_candidates(vehicle(0, 0, 0), (1000, 0), nbrs, k_max=3)
    assert [e.relay_id for e in out] == [5, 4, 3]
    assert [e.priority for e in out] == [1, 2, 3]


def test_exor_tie_lower_id_first():
    """[TRIVIAL] equidistant neighbours are ordered by id."""
    out = exor_candidates(vehicle(0, 0, 0), (1000, 0), [vehicle(8, 500, 30), vehicle(2, 500, -30)])
    assert [e.relay_id for e in out] == [2, 8]
